use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Signed or unsigned binary fixed-point layout `sign.int.frac`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedPointFormat {
    pub sign_bits: u32,
    pub int_bits: u32,
    pub frac_bits: u32,
}

/// Clipped membrane potential fed to the activation: 1 sign, 4 integer and
/// 3 fraction bits, range `[-8, 7.875]`.
pub const MEMBRANE_1_4_3: FixedPointFormat = FixedPointFormat {
    sign_bits: 1,
    int_bits: 4,
    frac_bits: 3,
};

impl FixedPointFormat {
    pub fn new(sign_bits: u32, int_bits: u32, frac_bits: u32) -> Result<Self> {
        if sign_bits > 1 {
            return Err(Error::Config("sign field is 0 or 1 bits".into()));
        }
        let fmt = FixedPointFormat {
            sign_bits,
            int_bits,
            frac_bits,
        };
        if fmt.width() == 0 || fmt.width() > 31 {
            return Err(Error::Config(format!("unsupported width {}", fmt.width())));
        }
        Ok(fmt)
    }

    /// Membrane format for the `b`-bit evaluation path. Keeps the `[-8, 8)`
    /// range and spends the remaining bits on fraction; below 5 bits the
    /// fraction is dropped and the integer range shrinks instead. One bit
    /// wide leaves only the zero code.
    pub fn membrane_for_bits(bits: u32) -> Self {
        if bits >= 5 {
            FixedPointFormat {
                sign_bits: 1,
                int_bits: 4,
                frac_bits: bits - 5,
            }
        } else {
            FixedPointFormat {
                sign_bits: 1,
                int_bits: bits.saturating_sub(1),
                frac_bits: 0,
            }
        }
    }

    pub fn width(&self) -> u32 {
        self.sign_bits + self.int_bits + self.frac_bits
    }

    pub fn resolution(&self) -> f64 {
        (-(self.frac_bits as f64)).exp2()
    }

    /// Signed formats reach `[-2^(I-1), 2^(I-1))` in value: the nominal
    /// integer field includes the sign position, as the 1.4.3 clip spans
    /// `[-8, 7.875]`.
    fn magnitude_bits(&self) -> Option<u32> {
        (self.int_bits + self.frac_bits).checked_sub(self.sign_bits)
    }

    pub fn max_code(&self) -> i64 {
        match self.magnitude_bits() {
            Some(m) => (1i64 << m) - 1,
            None => 0,
        }
    }

    pub fn min_code(&self) -> i64 {
        match (self.sign_bits, self.magnitude_bits()) {
            (1, Some(m)) => -(1i64 << m),
            _ => 0,
        }
    }

    pub fn min_value(&self) -> f64 {
        self.min_code() as f64 * self.resolution()
    }

    pub fn max_value(&self) -> f64 {
        self.max_code() as f64 * self.resolution()
    }

    /// Saturates an integer already expressed in units of the resolution.
    pub fn saturate(&self, raw: i64) -> i64 {
        raw.clamp(self.min_code(), self.max_code())
    }

    /// Rounds to the nearest code (ties away from zero) and saturates.
    pub fn quantize(&self, value: f64) -> i64 {
        if value.is_nan() {
            return 0;
        }
        let scaled = (value * (self.frac_bits as f64).exp2()).round();
        if scaled >= self.max_code() as f64 {
            self.max_code()
        } else if scaled <= self.min_code() as f64 {
            self.min_code()
        } else {
            scaled as i64
        }
    }

    pub fn value(&self, code: i64) -> f64 {
        code as f64 * self.resolution()
    }
}

/// Clips a real membrane potential to the 1.4.3 activation input.
pub fn clip_to_fixed(u: f64) -> i64 {
    MEMBRANE_1_4_3.quantize(u)
}
