//! Floating-point GLM neuron: stimulus kernels, membrane potential, logistic
//! activation, and Bernoulli rate encoding of inputs.
//!
//! Indexing convention: input `j`, output `i`, basis coefficient `k`, delay
//! tap `d`. Tap `d = 0` is the most recent past step (`t - 1`), tap `d` is
//! step `t - 1 - d`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binary basis matrix with `window` rows (delay taps) and `n_basis` columns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Basis {
    window: usize,
    n_basis: usize,
    /// Row-major `[window][n_basis]`, entries 0/1.
    entries: Vec<u8>,
}

impl Basis {
    pub fn identity(window: usize) -> Self {
        let mut entries = vec![0u8; window * window];
        for d in 0..window {
            entries[d * window + d] = 1;
        }
        Basis {
            window,
            n_basis: window,
            entries,
        }
    }

    /// Builds a basis from rows of 0/1 entries (`rows[d][k]`).
    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self> {
        let window = rows.len();
        if window == 0 {
            return Err(Error::Dimension("basis needs at least one row".into()));
        }
        let n_basis = rows[0].len();
        if n_basis == 0 || n_basis > window {
            return Err(Error::Dimension(format!(
                "basis must have 1..={window} columns, got {n_basis}"
            )));
        }
        let mut entries = Vec::with_capacity(window * n_basis);
        for (d, row) in rows.iter().enumerate() {
            if row.len() != n_basis {
                return Err(Error::Dimension(format!("basis row {d} is ragged")));
            }
            if row.iter().any(|&v| v > 1) {
                return Err(Error::Dimension(format!("basis row {d} is not binary")));
            }
            entries.extend_from_slice(row);
        }
        Ok(Basis {
            window,
            n_basis,
            entries,
        })
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn n_basis(&self) -> usize {
        self.n_basis
    }

    pub fn get(&self, d: usize, k: usize) -> u8 {
        self.entries[d * self.n_basis + k]
    }

    pub fn is_identity(&self) -> bool {
        self.window == self.n_basis
            && (0..self.window)
                .all(|d| (0..self.n_basis).all(|k| self.get(d, k) == u8::from(d == k)))
    }
}

/// Two-layer GLM network without feedback kernels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlmModel {
    pub n_inputs: usize,
    pub n_outputs: usize,
    pub presentation_time: usize,
    pub basis: Basis,
    /// `[n_inputs][n_outputs][n_basis]`, flattened.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl GlmModel {
    pub fn zeros(
        n_inputs: usize,
        n_outputs: usize,
        presentation_time: usize,
        basis: Basis,
    ) -> Result<Self> {
        if n_inputs == 0 || n_outputs == 0 {
            return Err(Error::Dimension("model needs inputs and outputs".into()));
        }
        if presentation_time == 0 {
            return Err(Error::Config("presentation time must be >= 1".into()));
        }
        let n_weights = n_inputs * n_outputs * basis.n_basis();
        Ok(GlmModel {
            n_inputs,
            n_outputs,
            presentation_time,
            basis,
            weights: vec![0.0; n_weights],
            biases: vec![0.0; n_outputs],
        })
    }

    pub fn window(&self) -> usize {
        self.basis.window()
    }

    pub fn n_basis(&self) -> usize {
        self.basis.n_basis()
    }

    #[inline]
    pub fn weight_index(&self, j: usize, i: usize, k: usize) -> usize {
        (j * self.n_outputs + i) * self.n_basis() + k
    }

    pub fn weight_vector(&self, j: usize, i: usize) -> &[f64] {
        let start = self.weight_index(j, i, 0);
        &self.weights[start..start + self.n_basis()]
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.len() != self.n_inputs * self.n_outputs * self.n_basis() {
            return Err(Error::Dimension(format!(
                "expected {} weights, found {}",
                self.n_inputs * self.n_outputs * self.n_basis(),
                self.weights.len()
            )));
        }
        if self.biases.len() != self.n_outputs {
            return Err(Error::Dimension(format!(
                "expected {} biases, found {}",
                self.n_outputs,
                self.biases.len()
            )));
        }
        if self.weights.iter().chain(&self.biases).any(|v| !v.is_finite()) {
            return Err(Error::Numeric("model holds non-finite parameters".into()));
        }
        Ok(())
    }

    /// All stimulus kernels, `[n_inputs][n_outputs][window]` flattened.
    pub fn kernels(&self) -> Vec<f64> {
        let window = self.window();
        let mut out = vec![0.0; self.n_inputs * self.n_outputs * window];
        for j in 0..self.n_inputs {
            for i in 0..self.n_outputs {
                let base = (j * self.n_outputs + i) * window;
                let alpha = expand_kernel(&self.basis, self.weight_vector(j, i))
                    .expect("basis and weight dimensions are consistent");
                out[base..base + window].copy_from_slice(&alpha);
            }
        }
        out
    }

    /// Membrane potentials of every output neuron at step `t` (1-based).
    pub fn potentials_at(&self, kernels: &[f64], train: &SpikeTrain, t: usize) -> Vec<f64> {
        let window = self.window();
        let mut u = self.biases.clone();
        for j in 0..self.n_inputs {
            let sign = f64::from(train.sign(j));
            for d in 0..window {
                if !train.window_bit(j, t, d) {
                    continue;
                }
                for (i, ui) in u.iter_mut().enumerate() {
                    *ui += sign * kernels[(j * self.n_outputs + i) * window + d];
                }
            }
        }
        u
    }
}

/// Binary input raster plus per-channel sign flags.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpikeTrain {
    n_inputs: usize,
    n_steps: usize,
    /// `[n_inputs][n_steps]`, flattened.
    raster: Vec<bool>,
    signs: Vec<i8>,
}

impl SpikeTrain {
    pub fn new(raster: Vec<Vec<bool>>, signs: Vec<i8>) -> Result<Self> {
        let n_inputs = raster.len();
        if signs.len() != n_inputs {
            return Err(Error::Dimension(format!(
                "{} sign flags for {n_inputs} channels",
                signs.len()
            )));
        }
        if signs.iter().any(|&s| s != 1 && s != -1) {
            return Err(Error::Dimension("sign flags must be +1 or -1".into()));
        }
        let n_steps = raster.first().map_or(0, Vec::len);
        if raster.iter().any(|r| r.len() != n_steps) {
            return Err(Error::Dimension("ragged spike raster".into()));
        }
        Ok(SpikeTrain {
            n_inputs,
            n_steps,
            raster: raster.into_iter().flatten().collect(),
            signs,
        })
    }

    pub fn silent(n_inputs: usize, n_steps: usize) -> Self {
        SpikeTrain {
            n_inputs,
            n_steps,
            raster: vec![false; n_inputs * n_steps],
            signs: vec![1; n_inputs],
        }
    }

    pub fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// Spike of channel `j` at 1-based step `t`.
    #[inline]
    pub fn spike(&self, j: usize, t: usize) -> bool {
        self.raster[j * self.n_steps + t - 1]
    }

    pub fn set_spike(&mut self, j: usize, t: usize, value: bool) {
        self.raster[j * self.n_steps + t - 1] = value;
    }

    pub fn channel(&self, j: usize) -> &[bool] {
        &self.raster[j * self.n_steps..(j + 1) * self.n_steps]
    }

    #[inline]
    pub fn sign(&self, j: usize) -> i8 {
        self.signs[j]
    }

    pub fn signs(&self) -> &[i8] {
        &self.signs
    }

    /// Tap `d` of channel `j`'s window as seen at step `t`: the spike at
    /// step `t - 1 - d`, or 0 before the first step.
    #[inline]
    pub fn window_bit(&self, j: usize, t: usize, d: usize) -> bool {
        t >= d + 2 && t - 1 - d <= self.n_steps && self.spike(j, t - 1 - d)
    }

    pub fn window(&self, j: usize, t: usize, window: usize) -> SpikeWindow {
        SpikeWindow {
            bits: (0..window).map(|d| self.window_bit(j, t, d)).collect(),
        }
    }
}

/// The last `window` input spikes of one channel, most recent first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpikeWindow {
    pub bits: Vec<bool>,
}

impl SpikeWindow {
    pub fn zeros(window: usize) -> Self {
        SpikeWindow {
            bits: vec![false; window],
        }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn popcount(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Renders the window as a `0`/`1` string, most recent tap first.
    pub fn to_bit_string(&self) -> String {
        self.bits.iter().map(|&b| if b { '1' } else { '0' }).collect()
    }

    pub fn from_bit_string(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::Dimension(format!("bad window character {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(|bits| SpikeWindow { bits })
    }
}

/// Draws a Bernoulli raster of `n_steps` steps from normalized inputs.
///
/// Each `|x_j|` is the per-step spike probability of channel `j`; the sign of
/// `x_j` becomes the channel's sign flag (zero maps to `+1`).
pub fn rate_encode<R: Rng + ?Sized>(x: &[f64], n_steps: usize, rng: &mut R) -> Result<SpikeTrain> {
    let mut raster = Vec::with_capacity(x.len() * n_steps);
    let mut signs = Vec::with_capacity(x.len());
    for (channel, &value) in x.iter().enumerate() {
        if !value.is_finite() || value.abs() > 1.0 {
            return Err(Error::Encoding { channel, value });
        }
        let p = value.abs();
        signs.push(if value < 0.0 { -1 } else { 1 });
        raster.extend((0..n_steps).map(|_| rng.gen_bool(p)));
    }
    Ok(SpikeTrain {
        n_inputs: x.len(),
        n_steps,
        raster,
        signs,
    })
}

/// Kernel over delay taps: `alpha = A w`.
pub fn expand_kernel(basis: &Basis, w: &[f64]) -> Result<Vec<f64>> {
    if w.len() != basis.n_basis() {
        return Err(Error::Dimension(format!(
            "basis has {} columns, weight vector has {} entries",
            basis.n_basis(),
            w.len()
        )));
    }
    Ok((0..basis.window())
        .map(|d| {
            w.iter()
                .enumerate()
                .filter(|&(k, _)| basis.get(d, k) == 1)
                .map(|(_, wk)| wk)
                .sum()
        })
        .collect())
}

/// Membrane potential of output `i` given one window per input channel.
pub fn membrane_potential(
    model: &GlmModel,
    windows: &[SpikeWindow],
    signs: &[i8],
    i: usize,
) -> Result<f64> {
    if windows.len() != model.n_inputs || signs.len() != model.n_inputs {
        return Err(Error::Dimension(format!(
            "model has {} inputs, got {} windows and {} signs",
            model.n_inputs,
            windows.len(),
            signs.len()
        )));
    }
    if i >= model.n_outputs {
        return Err(Error::OutOfRange(format!(
            "output {i} of {}",
            model.n_outputs
        )));
    }
    let mut u = model.biases[i];
    for (j, win) in windows.iter().enumerate() {
        if win.len() != model.window() {
            return Err(Error::Dimension(format!(
                "window {j} has length {}, expected {}",
                win.len(),
                model.window()
            )));
        }
        let alpha = expand_kernel(&model.basis, model.weight_vector(j, i))?;
        let drive: f64 = alpha
            .iter()
            .zip(&win.bits)
            .filter(|(_, &bit)| bit)
            .map(|(a, _)| a)
            .sum();
        u += f64::from(signs[j]) * drive;
    }
    Ok(u)
}

/// Logistic function, evaluated without overflow for large `|u|`.
#[inline]
pub fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `ln g(u)`.
#[inline]
pub fn log_sigmoid(u: f64) -> f64 {
    -softplus(-u)
}

/// `ln (1 - g(u))`.
#[inline]
pub fn log_one_minus_sigmoid(u: f64) -> f64 {
    -softplus(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn rate_encode_extremes() {
        let train = rate_encode(&[0.0, 1.0, -1.0], 8, &mut rng(1)).unwrap();
        assert!(train.channel(0).iter().all(|&b| !b));
        assert!(train.channel(1).iter().all(|&b| b));
        assert!(train.channel(2).iter().all(|&b| b));
        assert_eq!(train.signs(), &[1, 1, -1]);
    }

    #[test]
    fn rate_encode_half_rate_within_three_sigma() {
        let n = 10_000;
        let train = rate_encode(&[0.5], n, &mut rng(7)).unwrap();
        let rate = train.channel(0).iter().filter(|&&b| b).count() as f64 / n as f64;
        let sigma = (0.25f64 / n as f64).sqrt();
        assert!((rate - 0.5).abs() < 3.0 * sigma, "rate {rate}");
    }

    #[test]
    fn rate_encode_rejects_bad_inputs() {
        assert!(matches!(
            rate_encode(&[0.2, 1.5], 4, &mut rng(0)),
            Err(Error::Encoding { channel: 1, .. })
        ));
        assert!(rate_encode(&[f64::NAN], 4, &mut rng(0)).is_err());
    }

    #[test]
    fn rate_encode_is_reproducible() {
        let x = [0.1, 0.4, -0.7, 0.9];
        let a = rate_encode(&x, 32, &mut rng(99)).unwrap();
        let b = rate_encode(&x, 32, &mut rng(99)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn identity_basis_kernel() {
        let w: Vec<f64> = (1..=7).map(f64::from).collect();
        assert_eq!(expand_kernel(&Basis::identity(7), &w).unwrap(), w);
        assert_eq!(
            expand_kernel(&Basis::identity(7), &[0.0; 7]).unwrap(),
            vec![0.0; 7]
        );
    }

    #[test]
    fn binary_basis_kernel_matches_dot_products() {
        let basis = Basis::from_rows(&[vec![1, 0], vec![1, 1], vec![0, 1], vec![0, 0]]).unwrap();
        let w = [0.3, -1.25];
        let alpha = expand_kernel(&basis, &w).unwrap();
        let expected: Vec<f64> = (0..4)
            .map(|d| (0..2).map(|k| f64::from(basis.get(d, k)) * w[k]).sum())
            .collect();
        assert_eq!(alpha, expected);
        assert!(expand_kernel(&basis, &[1.0]).is_err());
    }

    #[test]
    fn potential_with_silent_windows_is_bias() {
        let mut model = GlmModel::zeros(3, 2, 4, Basis::identity(4)).unwrap();
        model.biases = vec![0.7, -0.2];
        model.weights.iter_mut().for_each(|w| *w = 1.0);
        let windows = vec![SpikeWindow::zeros(4); 3];
        assert_eq!(membrane_potential(&model, &windows, &[1, 1, 1], 1).unwrap(), -0.2);
    }

    #[test]
    fn one_hot_window_selects_tap() {
        let mut model = GlmModel::zeros(2, 1, 4, Basis::identity(4)).unwrap();
        for (n, w) in model.weights.iter_mut().enumerate() {
            *w = n as f64 + 0.5;
        }
        let mut windows = vec![SpikeWindow::zeros(4); 2];
        windows[1].bits[2] = true;
        let u = membrane_potential(&model, &windows, &[1, 1], 0).unwrap();
        assert_eq!(u, model.weights[model.weight_index(1, 0, 2)]);
    }

    #[test]
    fn potential_matches_triple_loop() {
        let mut r = rng(3);
        let mut model = GlmModel::zeros(3, 2, 4, Basis::identity(4)).unwrap();
        model.weights.iter_mut().for_each(|w| *w = r.gen_range(-1.0..1.0));
        model.biases.iter_mut().for_each(|b| *b = r.gen_range(-1.0..1.0));
        let train = rate_encode(&[0.6, -0.5, 0.8], 6, &mut r).unwrap();
        let kernels = model.kernels();
        for t in 1..=6 {
            let fast = model.potentials_at(&kernels, &train, t);
            for i in 0..2 {
                let mut oracle = model.biases[i];
                for j in 0..3 {
                    for d in 0..4 {
                        if t >= d + 2 && train.spike(j, t - 1 - d) {
                            oracle += f64::from(train.sign(j)) * model.weights[(j * 2 + i) * 4 + d];
                        }
                    }
                }
                let windows: Vec<_> = (0..3).map(|j| train.window(j, t, 4)).collect();
                let slow = membrane_potential(&model, &windows, train.signs(), i).unwrap();
                assert!((fast[i] - oracle).abs() < 1e-12);
                assert!((slow - oracle).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn potential_is_additive_over_disjoint_windows() {
        let mut r = rng(11);
        let mut model = GlmModel::zeros(2, 1, 5, Basis::identity(5)).unwrap();
        model.weights.iter_mut().for_each(|w| *w = r.gen_range(-2.0..2.0));
        model.biases[0] = 0.4;
        let w1 = vec![
            SpikeWindow::from_bit_string("10100").unwrap(),
            SpikeWindow::from_bit_string("00010").unwrap(),
        ];
        let w2 = vec![
            SpikeWindow::from_bit_string("01000").unwrap(),
            SpikeWindow::from_bit_string("10001").unwrap(),
        ];
        let union: Vec<_> = w1
            .iter()
            .zip(&w2)
            .map(|(a, b)| SpikeWindow {
                bits: a.bits.iter().zip(&b.bits).map(|(x, y)| *x || *y).collect(),
            })
            .collect();
        let signs = [1, -1];
        let u1 = membrane_potential(&model, &w1, &signs, 0).unwrap();
        let u2 = membrane_potential(&model, &w2, &signs, 0).unwrap();
        let uu = membrane_potential(&model, &union, &signs, 0).unwrap();
        assert!((uu - (u1 + u2 - 0.4)).abs() < 1e-12);
    }

    #[test]
    fn sigmoid_values() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((sigmoid(-1.5) - 0.182_425_523_806_356_2).abs() < 1e-15);
        assert_eq!(sigmoid(800.0), 1.0);
        assert_eq!(sigmoid(-800.0), 0.0);
        let mut prev = 0.0;
        for k in -300..=300 {
            let g = sigmoid(f64::from(k) * 0.1);
            assert!(g >= prev);
            prev = g;
        }
    }

    #[test]
    fn sigmoid_symmetry() {
        for k in -300..=300 {
            let u = f64::from(k) * 0.1;
            assert!((sigmoid(u) + sigmoid(-u) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn log_sigmoid_is_stable() {
        assert!((log_sigmoid(-500.0) + 500.0).abs() < 1e-9);
        assert!((log_one_minus_sigmoid(500.0) + 500.0).abs() < 1e-9);
        assert!(log_sigmoid(500.0).abs() < 1e-200);
        assert!((log_sigmoid(0.0) - 0.5f64.ln()).abs() < 1e-15);
    }
}
