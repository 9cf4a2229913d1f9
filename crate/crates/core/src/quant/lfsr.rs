//! 16-bit Fibonacci LFSR, feedback polynomial x^16 + x^14 + x^13 + x^11 + 1.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const LFSR_PERIOD: usize = 65_535;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lfsr16(u16);

impl Lfsr16 {
    pub fn new(seed: u16) -> Result<Self> {
        if seed == 0 {
            return Err(Error::Config("LFSR seed must be nonzero".into()));
        }
        Ok(Lfsr16(seed))
    }

    pub fn state(self) -> u16 {
        self.0
    }

    /// One shift. Taps 16, 14, 13, 11 counted from the output end.
    #[inline]
    pub fn next(self) -> Self {
        let s = self.0;
        let bit = (s ^ (s >> 2) ^ (s >> 3) ^ (s >> 5)) & 1;
        Lfsr16((s >> 1) | (bit << 15))
    }

    #[inline]
    pub fn advance(&mut self) {
        *self = self.next();
    }

    #[inline]
    pub fn low_bits(self, bits: u32) -> u32 {
        u32::from(self.0) & ((1u32 << bits) - 1)
    }
}

/// Compares an 8-bit activation with the low byte of the LFSR state, then
/// shifts the register once.
#[inline]
pub fn spike_decision(pwl: u8, lfsr: Lfsr16) -> (bool, Lfsr16) {
    spike_decision_bits(u32::from(pwl), 8, lfsr)
}

/// `bits`-wide variant of [`spike_decision`].
#[inline]
pub fn spike_decision_bits(level: u32, bits: u32, lfsr: Lfsr16) -> (bool, Lfsr16) {
    (level > lfsr.low_bits(bits), lfsr.next())
}
