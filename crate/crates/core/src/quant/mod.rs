//! Post-training quantization and the fixed-point datapath primitives.

pub mod fixed;
pub mod lfsr;
pub mod pwl;

pub use fixed::{clip_to_fixed, FixedPointFormat, MEMBRANE_1_4_3};
pub use lfsr::{spike_decision, spike_decision_bits, Lfsr16, LFSR_PERIOD};
pub use pwl::{pwl_sigmoid, pwl_sigmoid_fixed};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glm::{Basis, GlmModel};

pub const MIN_BITS: u32 = 1;
pub const MAX_BITS: u32 = 16;

/// Uniformly quantized values in sign-magnitude code space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizedTensor {
    pub bits: u32,
    pub codes: Vec<i32>,
    pub min: f64,
    pub max: f64,
    pub step: f64,
    /// Range collapsed to a point: every code is 0 and `step` is 0.
    pub degenerate: bool,
}

impl QuantizedTensor {
    pub fn max_magnitude(bits: u32) -> i32 {
        (1i32 << (bits - 1)) - 1
    }

    pub fn dequantize(&self, index: usize) -> f64 {
        f64::from(self.codes[index]) * self.step
    }

    pub fn dequantized(&self) -> Vec<f64> {
        (0..self.codes.len()).map(|n| self.dequantize(n)).collect()
    }
}

/// Quantizer with step `(max - min) / 2^(b-1)`; one bit of each code is the
/// sign, so magnitudes are clamped to `2^(b-1) - 1`.
pub fn quantize_uniform(values: &[f64], bits: u32) -> Result<QuantizedTensor> {
    check_inputs(values, bits)?;
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(quantize_in_range(values, bits, min, max))
}

/// As [`quantize_uniform`] with the range widened to contain zero. Codes are
/// symmetric about zero, so a range that excludes zero (e.g. biases that are
/// all negative) would otherwise clip every value to a fraction of itself.
pub fn quantize_zero_anchored(values: &[f64], bits: u32) -> Result<QuantizedTensor> {
    check_inputs(values, bits)?;
    let min = values.iter().copied().fold(0.0, f64::min);
    let max = values.iter().copied().fold(0.0, f64::max);
    Ok(quantize_in_range(values, bits, min, max))
}

fn check_inputs(values: &[f64], bits: u32) -> Result<()> {
    if !(MIN_BITS..=MAX_BITS).contains(&bits) {
        return Err(Error::Config(format!(
            "bit width {bits} outside {MIN_BITS}..={MAX_BITS}"
        )));
    }
    if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!("cannot quantize {bad}")));
    }
    Ok(())
}

fn quantize_in_range(values: &[f64], bits: u32, min: f64, max: f64) -> QuantizedTensor {
    if values.is_empty() || max <= min {
        return QuantizedTensor {
            bits,
            codes: vec![0; values.len()],
            min: if values.is_empty() { 0.0 } else { min },
            max: if values.is_empty() { 0.0 } else { max },
            step: 0.0,
            degenerate: true,
        };
    }
    let step = (max - min) / f64::from(1u32 << (bits - 1));
    let limit = f64::from(QuantizedTensor::max_magnitude(bits));
    let codes = values
        .iter()
        .map(|v| (v / step).round().clamp(-limit, limit) as i32)
        .collect();
    QuantizedTensor {
        bits,
        codes,
        min,
        max,
        step,
        degenerate: false,
    }
}

/// Network with weights and biases held as `b`-bit codes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizedModel {
    pub bits: u32,
    pub n_inputs: usize,
    pub n_outputs: usize,
    pub presentation_time: usize,
    pub basis: Basis,
    /// Layout matches [`GlmModel::weights`].
    pub weights: QuantizedTensor,
    pub biases: QuantizedTensor,
}

impl QuantizedModel {
    pub fn from_model(model: &GlmModel, bits: u32) -> Result<Self> {
        model.validate()?;
        Ok(QuantizedModel {
            bits,
            n_inputs: model.n_inputs,
            n_outputs: model.n_outputs,
            presentation_time: model.presentation_time,
            basis: model.basis.clone(),
            weights: quantize_zero_anchored(&model.weights, bits)?,
            biases: quantize_zero_anchored(&model.biases, bits)?,
        })
    }

    pub fn window(&self) -> usize {
        self.basis.window()
    }

    pub fn n_basis(&self) -> usize {
        self.basis.n_basis()
    }

    #[inline]
    pub fn weight_code(&self, j: usize, i: usize, k: usize) -> i32 {
        self.weights.codes[(j * self.n_outputs + i) * self.n_basis() + k]
    }

    /// Integer kernel taps: the basis applied to weight codes,
    /// `[n_inputs][n_outputs][window]` flattened.
    pub fn kernel_codes(&self) -> Vec<i64> {
        let window = self.window();
        let mut out = vec![0i64; self.n_inputs * self.n_outputs * window];
        for j in 0..self.n_inputs {
            for i in 0..self.n_outputs {
                for d in 0..window {
                    out[(j * self.n_outputs + i) * window + d] = (0..self.n_basis())
                        .filter(|&k| self.basis.get(d, k) == 1)
                        .map(|k| i64::from(self.weight_code(j, i, k)))
                        .sum();
                }
            }
        }
        out
    }

    /// Floating-point model carrying the dequantized parameters.
    pub fn dequantized(&self) -> GlmModel {
        GlmModel {
            n_inputs: self.n_inputs,
            n_outputs: self.n_outputs,
            presentation_time: self.presentation_time,
            basis: self.basis.clone(),
            weights: self.weights.dequantized(),
            biases: self.biases.dequantized(),
        }
    }

    /// Membrane potential in real units from an integer kernel sum (units of
    /// the weight step) and a bias code.
    #[inline]
    pub fn membrane_value(&self, kernel_sum: i64, bias_code: i32) -> f64 {
        kernel_sum as f64 * self.weights.step + f64::from(bias_code) * self.biases.step
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn step_follows_range() {
        let q = quantize_uniform(&[-1.0, 0.0, 1.0], 5).unwrap();
        assert_eq!(q.step, 0.125);
        assert_eq!(q.codes, vec![-8, 0, 8]);
    }

    #[test]
    fn zero_maps_to_zero_code() {
        for bits in 1..=16 {
            let q = quantize_uniform(&[-0.3, 0.0, 2.0], bits).unwrap();
            assert_eq!(q.codes[1], 0);
        }
    }

    #[test]
    fn degenerate_range_flagged() {
        let q = quantize_uniform(&[0.4, 0.4], 6).unwrap();
        assert!(q.degenerate);
        assert_eq!(q.step, 0.0);
        assert_eq!(q.codes, vec![0, 0]);
    }

    #[test]
    fn same_sign_range_keeps_magnitude() {
        let biases = [-6.64, -6.2, -5.89];
        // literal range [-6.64, -5.89]: step 0.75/128, every code clamps at -127
        let literal = quantize_uniform(&biases, 8).unwrap();
        assert!(literal.codes.iter().all(|&c| c == -127));
        let q = quantize_zero_anchored(&biases, 8).unwrap();
        assert_eq!((q.min, q.max), (-6.64, 0.0));
        assert_eq!(q.step, 6.64 / 128.0);
        for (n, &v) in biases.iter().enumerate() {
            // -6.64 sits one step beyond the 127-code reach
            assert!((v - q.dequantize(n)).abs() <= q.step + 1e-12);
            assert!(q.min <= q.dequantize(n) && q.dequantize(n) <= q.max);
        }
        // identical to the literal quantizer whenever the range spans zero
        let w = [-0.7, 0.1, 0.54];
        assert_eq!(quantize_zero_anchored(&w, 6).unwrap(), quantize_uniform(&w, 6).unwrap());
        assert!(quantize_zero_anchored(&[0.0, 0.0], 6).unwrap().degenerate);
    }

    #[test]
    fn one_bit_collapses_to_zero() {
        let q = quantize_uniform(&[-1.0, 0.5, 1.0], 1).unwrap();
        assert_eq!(q.codes, vec![0, 0, 0]);
        assert!(quantize_uniform(&[1.0], 0).is_err());
        assert!(quantize_uniform(&[1.0], 17).is_err());
    }

    #[test]
    fn error_bounded_against_scalar_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let values: Vec<f64> = (0..500).map(|_| rng.gen_range(-0.8..1.3)).collect();
        let q = quantize_uniform(&values, 5).unwrap();
        let limit = 15.0;
        for (n, &v) in values.iter().enumerate() {
            let clipped = v.clamp(-limit * q.step, limit * q.step);
            let clip_residual = (v - clipped).abs();
            assert!((v - q.dequantize(n)).abs() <= q.step / 2.0 + clip_residual + 1e-12);
        }
    }

    #[test]
    fn kernel_codes_follow_basis() {
        let basis = Basis::from_rows(&[vec![1, 0], vec![1, 1], vec![0, 1]]).unwrap();
        let mut m = GlmModel::zeros(1, 1, 3, basis).unwrap();
        m.weights = vec![1.0, -0.5];
        m.biases = vec![0.0];
        let q = QuantizedModel::from_model(&m, 8).unwrap();
        let (a, b) = (i64::from(q.weights.codes[0]), i64::from(q.weights.codes[1]));
        assert_eq!(q.kernel_codes(), vec![a, a + b, b]);
    }

    proptest! {
        #[test]
        fn dequant_error_at_most_half_step(
            values in proptest::collection::vec(-5.0f64..5.0, 2..40),
            bits in 2u32..=12,
        ) {
            let q = quantize_uniform(&values, bits).unwrap();
            prop_assume!(!q.degenerate);
            let reach = f64::from(QuantizedTensor::max_magnitude(bits)) * q.step;
            for (n, &v) in values.iter().enumerate() {
                if v.abs() <= reach {
                    prop_assert!((v - q.dequantize(n)).abs() <= q.step / 2.0 + 1e-12);
                }
                prop_assert!(q.codes[n].abs() <= QuantizedTensor::max_magnitude(bits));
            }
        }
    }
}
