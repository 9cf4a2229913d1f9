//! Shift/add piecewise-linear logistic approximation.
//!
//! For `x <= 0` with integer magnitude `n = trunc(|x|)` and signed fraction
//! `x̂ = x + n` in `(-1, 0]`, `y = (1/2 + x̂/4) / 2^n`. Positive inputs use
//! `y(x) = 1 - y(-x)`. The output is `floor(y * 2^out_bits)` saturated to
//! `2^out_bits - 1`.

/// 8-bit activation of a 1.4.3 membrane code, result in `[0, 255]`.
pub fn pwl_sigmoid(code: i64) -> u8 {
    pwl_sigmoid_fixed(code, 3, 8) as u8
}

/// Activation of a signed fixed-point code with `frac_bits` fraction bits,
/// producing an unsigned `out_bits`-bit level.
pub fn pwl_sigmoid_fixed(code: i64, frac_bits: u32, out_bits: u32) -> u32 {
    let full = 1u64 << out_bits;
    let magnitude = code.unsigned_abs();
    let n = magnitude >> frac_bits;
    let frac = magnitude & ((1u64 << frac_bits) - 1);
    // y(-|x|) * 2^out = (2^(F+1) - f) * 2^out / 2^(F+2+n)
    let numerator = ((1u64 << (frac_bits + 1)) - frac) << out_bits;
    let shift = u64::from(frac_bits + 2) + n;
    let denominator_shift = shift.min(63) as u32;
    let floor = if shift >= 63 {
        0
    } else {
        numerator >> denominator_shift
    };
    if code <= 0 {
        return floor as u32;
    }
    let exact = shift < 63 && (floor << denominator_shift) == numerator;
    let ceil = if exact { floor } else { floor + 1 };
    (full - ceil).min(full - 1) as u32
}
