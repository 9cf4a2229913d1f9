//! First-to-spike likelihood, its exact gradient, minibatch training, and
//! floating-point first-to-spike inference.
//!
//! The per-time likelihood that the labelled neuron `c` is the first (and
//! only) one to fire at step `t` is
//!
//! ```text
//! p_t = prod_{i != c} prod_{t' <= t} (1 - g(u_{i,t'}))
//!       * g(u_{c,t}) * prod_{t' < t} (1 - g(u_{c,t'}))
//! ```
//!
//! and training maximizes `L = ln sum_{t=1..T} p_t`.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::engine::{accuracy, evaluate, FloatEngine};
use crate::error::{Error, Result};
use crate::glm::{log_one_minus_sigmoid, log_sigmoid, rate_encode, sigmoid, Basis, GlmModel, SpikeTrain};
use crate::rng::{stream_rng, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub presentation_time: usize,
    pub window: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            learning_rate: 0.5,
            batch_size: 32,
            seed: 0,
            presentation_time: 8,
            window: 8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning rate must be finite and >= 0".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be >= 1".into()));
        }
        if self.window == 0 || self.presentation_time < self.window {
            return Err(Error::Config(format!(
                "need T >= tau >= 1, got T={} tau={}",
                self.presentation_time, self.window
            )));
        }
        Ok(())
    }
}

/// Outcome of one first-to-spike classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FtsDecision {
    pub predicted_class: usize,
    /// Step of the first output spike; `None` when no neuron fired.
    pub decision_time: Option<usize>,
    pub fallback_used: bool,
}

/// `ln p_t` for label `c` from potentials `u[i][t-1]` (steps `1..=t`).
pub fn fts_log_prob(u: &[Vec<f64>], c: usize, t: usize) -> Result<f64> {
    if c >= u.len() {
        return Err(Error::OutOfRange(format!("label {c} with {} outputs", u.len())));
    }
    if t == 0 || u.iter().any(|row| row.len() < t) {
        return Err(Error::OutOfRange(format!("step {t} outside available potentials")));
    }
    let mut lp = 0.0;
    for (i, row) in u.iter().enumerate() {
        if i == c {
            lp += row[..t - 1].iter().map(|&v| log_one_minus_sigmoid(v)).sum::<f64>();
            lp += log_sigmoid(row[t - 1]);
        } else {
            lp += row[..t].iter().map(|&v| log_one_minus_sigmoid(v)).sum::<f64>();
        }
    }
    Ok(lp)
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Potentials `u[i][t-1]` for every output over the whole presentation.
pub fn potential_matrix(model: &GlmModel, kernels: &[f64], train: &SpikeTrain) -> Vec<Vec<f64>> {
    let steps = train.n_steps();
    let mut u = vec![vec![0.0; steps]; model.n_outputs];
    for t in 1..=steps {
        for (i, ui) in model.potentials_at(kernels, train, t).into_iter().enumerate() {
            u[i][t - 1] = ui;
        }
    }
    u
}

fn check_pair(model: &GlmModel, train: &SpikeTrain, c: usize) -> Result<()> {
    if train.n_inputs() != model.n_inputs {
        return Err(Error::Dimension(format!(
            "spike train has {} channels, model {} inputs",
            train.n_inputs(),
            model.n_inputs
        )));
    }
    if train.n_steps() == 0 {
        return Err(Error::Dimension("spike train has no steps".into()));
    }
    if c >= model.n_outputs {
        return Err(Error::OutOfRange(format!("label {c} with {} outputs", model.n_outputs)));
    }
    Ok(())
}

/// Per-step terms `ln p_t`, `t = 1..=T`, computed by running sums.
fn log_probs(u: &[Vec<f64>], c: usize) -> Vec<f64> {
    let steps = u[c].len();
    let mut out = Vec::with_capacity(steps);
    let mut silent = 0.0;
    for t in 0..steps {
        let others: f64 = u
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != c)
            .map(|(_, row)| log_one_minus_sigmoid(row[t]))
            .sum();
        out.push(silent + others + log_sigmoid(u[c][t]));
        silent += others + log_one_minus_sigmoid(u[c][t]);
    }
    out
}

/// `ln sum_t p_t` for one labelled spike train.
pub fn fts_objective(model: &GlmModel, train: &SpikeTrain, c: usize) -> Result<f64> {
    check_pair(model, train, c)?;
    let u = potential_matrix(model, &model.kernels(), train);
    Ok(log_sum_exp(&log_probs(&u, c)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FtsGradient {
    pub objective: f64,
    /// Same layout as [`GlmModel::weights`].
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

/// Exact gradient of [`fts_objective`] with respect to weights and biases.
pub fn fts_gradient(model: &GlmModel, train: &SpikeTrain, c: usize) -> Result<FtsGradient> {
    check_pair(model, train, c)?;
    Ok(gradient_with_kernels(model, &model.kernels(), train, c))
}

fn gradient_with_kernels(
    model: &GlmModel,
    kernels: &[f64],
    train: &SpikeTrain,
    c: usize,
) -> FtsGradient {
    let u = potential_matrix(model, kernels, train);
    let lp = log_probs(&u, c);
    let objective = log_sum_exp(&lp);
    let steps = lp.len();
    // responsibilities r_t = p_t / sum_t p_t, and their tail sums
    let r: Vec<f64> = lp.iter().map(|v| (v - objective).exp()).collect();
    let mut tail = vec![0.0; steps + 1];
    for t in (0..steps).rev() {
        tail[t] = tail[t + 1] + r[t];
    }
    // dL/du[i][t]
    let mut du = vec![vec![0.0; steps]; model.n_outputs];
    for (i, row) in u.iter().enumerate() {
        for t in 0..steps {
            let g = sigmoid(row[t]);
            du[i][t] = if i == c {
                (1.0 - g) * r[t] - g * tail[t + 1]
            } else {
                -g * tail[t]
            };
        }
    }
    let biases: Vec<f64> = du.iter().map(|row| row.iter().sum()).collect();

    let window = model.window();
    let n_out = model.n_outputs;
    let mut d_alpha = vec![0.0; model.n_inputs * n_out * window];
    for j in 0..model.n_inputs {
        let sign = f64::from(train.sign(j));
        for t in 1..=steps {
            for d in 0..window {
                if !train.window_bit(j, t, d) {
                    continue;
                }
                let base = j * n_out * window + d;
                for (i, row) in du.iter().enumerate() {
                    d_alpha[base + i * window] += sign * row[t - 1];
                }
            }
        }
    }
    let weights = project_to_basis(&model.basis, &d_alpha, model.n_inputs * n_out);
    FtsGradient {
        objective,
        weights,
        biases,
    }
}

/// Maps per-tap kernel gradients onto basis coefficients: `A^T dalpha`.
fn project_to_basis(basis: &Basis, d_alpha: &[f64], n_kernels: usize) -> Vec<f64> {
    let window = basis.window();
    if basis.is_identity() {
        return d_alpha.to_vec();
    }
    let nb = basis.n_basis();
    let mut out = vec![0.0; n_kernels * nb];
    for kern in 0..n_kernels {
        for k in 0..nb {
            out[kern * nb + k] = (0..window)
                .filter(|&d| basis.get(d, k) == 1)
                .map(|d| d_alpha[kern * window + d])
                .sum();
        }
    }
    out
}

/// Samples output spikes step by step and stops at the first step where any
/// neuron fires; the lowest-index spiking neuron wins. Without any spike the
/// class with the largest final potential is reported.
pub fn infer_fts_float<R: Rng + ?Sized>(
    model: &GlmModel,
    kernels: &[f64],
    train: &SpikeTrain,
    rng: &mut R,
) -> FtsDecision {
    let steps = train.n_steps();
    let mut last = model.biases.clone();
    for t in 1..=steps {
        let u = model.potentials_at(kernels, train, t);
        let mut winner = None;
        for (i, &ui) in u.iter().enumerate() {
            let fired = rng.gen_bool(sigmoid(ui));
            if fired && winner.is_none() {
                winner = Some(i);
            }
        }
        if let Some(i) = winner {
            return FtsDecision {
                predicted_class: i,
                decision_time: Some(t),
                fallback_used: false,
            };
        }
        last = u;
    }
    FtsDecision {
        predicted_class: argmax_first(&last),
        decision_time: None,
        fallback_used: true,
    }
}

/// Index of the maximum, lowest index on ties.
pub fn argmax_first<T: PartialOrd + Copy>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_acc: f64,
    pub test_acc: f64,
    pub mean_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: GlmModel,
    pub history: Vec<EpochMetrics>,
}

/// Float first-to-spike accuracy with per-sample encodings drawn from
/// `(seed, tag, sample)`.
pub fn float_accuracy(model: &GlmModel, data: &Dataset, seed: u64, tag: u64) -> Result<f64> {
    let engine = FloatEngine::new(model.clone());
    Ok(accuracy(&evaluate(&engine, data, seed, tag)?))
}

/// Minibatch stochastic gradient ascent on the first-to-spike likelihood.
///
/// Every epoch draws fresh Bernoulli encodings. Per-sample gradients are
/// computed in parallel and summed in sample order, so results do not depend
/// on thread scheduling.
pub fn train(train_set: &Dataset, test_set: Option<&Dataset>, config: &TrainConfig) -> Result<TrainOutcome> {
    train_with_observer(train_set, test_set, config, |_| {})
}

pub fn train_with_observer(
    train_set: &Dataset,
    test_set: Option<&Dataset>,
    config: &TrainConfig,
    mut observe: impl FnMut(&EpochMetrics),
) -> Result<TrainOutcome> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::Empty("training split has no samples".into()));
    }
    if !train_set.is_normalized() {
        return Err(Error::Config("training data must be normalized first".into()));
    }
    let mut model = GlmModel::zeros(
        train_set.n_features,
        train_set.n_classes,
        config.presentation_time,
        Basis::identity(config.window),
    )?;
    let mut history = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 0..config.epochs {
        order.shuffle(&mut stream_rng(config.seed, Stream::Shuffle, epoch as u64, 0));
        let mut loss_sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            let kernels = model.kernels();
            let grads: Result<Vec<FtsGradient>> = batch
                .par_iter()
                .map(|&n| {
                    let mut rng =
                        stream_rng(config.seed, Stream::TrainEncoding, epoch as u64, n as u64);
                    let spikes = rate_encode(train_set.sample(n), config.presentation_time, &mut rng)?;
                    Ok(gradient_with_kernels(&model, &kernels, &spikes, train_set.labels[n]))
                })
                .collect();
            let grads = grads?;
            let scale = config.learning_rate / batch.len() as f64;
            for g in &grads {
                if !g.objective.is_finite() {
                    return Err(Error::Divergence {
                        epoch: epoch + 1,
                        detail: format!("non-finite objective {}", g.objective),
                    });
                }
                loss_sum -= g.objective;
                for (w, dw) in model.weights.iter_mut().zip(&g.weights) {
                    *w += scale * dw;
                }
                for (b, db) in model.biases.iter_mut().zip(&g.biases) {
                    *b += scale * db;
                }
            }
            if model.weights.iter().chain(&model.biases).any(|v| !v.is_finite()) {
                return Err(Error::Divergence {
                    epoch: epoch + 1,
                    detail: "non-finite parameter after update".into(),
                });
            }
        }
        let train_acc = float_accuracy(&model, train_set, config.seed, 2 * epoch as u64)?;
        let test_acc = match test_set {
            Some(ts) => float_accuracy(&model, ts, config.seed, 2 * epoch as u64 + 1)?,
            None => f64::NAN,
        };
        let metrics = EpochMetrics {
            epoch: epoch + 1,
            train_acc,
            test_acc,
            mean_loss: loss_sum / train_set.len() as f64,
        };
        observe(&metrics);
        history.push(metrics);
    }
    Ok(TrainOutcome { model, history })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{separable_task, Split};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_instance(seed: u64, n_in: usize, n_out: usize, steps: usize, window: usize) -> (GlmModel, SpikeTrain) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = GlmModel::zeros(n_in, n_out, steps, Basis::identity(window)).unwrap();
        m.weights.iter_mut().for_each(|w| *w = rng.gen_range(-1.5..1.5));
        m.biases.iter_mut().for_each(|b| *b = rng.gen_range(-2.0..1.0));
        let x: Vec<f64> = (0..n_in).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let train = rate_encode(&x, steps, &mut rng).unwrap();
        (m, train)
    }

    /// Product form evaluated literally, no logs.
    fn product_form(u: &[Vec<f64>], c: usize, t: usize) -> f64 {
        let mut p = 1.0;
        for (i, row) in u.iter().enumerate() {
            if i != c {
                for &v in &row[..t] {
                    p *= 1.0 - sigmoid(v);
                }
            }
        }
        p *= sigmoid(u[c][t - 1]);
        for &v in &u[c][..t - 1] {
            p *= 1.0 - sigmoid(v);
        }
        p
    }

    #[test]
    fn log_prob_examples() {
        let u = vec![vec![0.0], vec![0.0]];
        assert!((fts_log_prob(&u, 0, 1).unwrap() - 0.25f64.ln()).abs() < 1e-12);
        let single = vec![vec![0.0]];
        assert!((fts_log_prob(&single, 0, 1).unwrap() - 0.5f64.ln()).abs() < 1e-12);
        assert!(fts_log_prob(&u, 2, 1).is_err());
        assert!(fts_log_prob(&u, 0, 2).is_err());
        assert!(fts_log_prob(&u, 0, 0).is_err());
    }

    #[test]
    fn log_prob_matches_product_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let u: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..2).map(|_| rng.gen_range(-3.0..3.0)).collect())
            .collect();
        for c in 0..3 {
            for t in 1..=2 {
                let lp = fts_log_prob(&u, c, t).unwrap();
                assert!((lp.exp() - product_form(&u, c, t)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn log_prob_stable_for_large_potentials() {
        let u = vec![vec![-500.0, 500.0], vec![-500.0, -500.0]];
        let lp = fts_log_prob(&u, 0, 2).unwrap();
        assert!(lp.is_finite());
        assert!(lp.abs() < 1e-9);
        // neuron 0 survives step 1 then fires surely at step 2: ln(1-g(500)) = -500
        let lp = fts_log_prob(&u, 1, 2).unwrap();
        assert!((lp + 1000.0).abs() < 1e-6);
    }

    #[test]
    fn log_prob_monotonicity() {
        let base = vec![vec![0.3, -0.2, 0.1], vec![-0.4, 0.5, 0.0]];
        let lp0 = fts_log_prob(&base, 0, 3).unwrap();
        let mut up = base.clone();
        up[0][2] += 0.5;
        assert!(fts_log_prob(&up, 0, 3).unwrap() > lp0);
        let mut rival = base.clone();
        rival[1][1] += 0.5;
        assert!(fts_log_prob(&rival, 0, 3).unwrap() < lp0);
    }

    #[test]
    fn objective_single_step_equals_log_prob() {
        let (m, train) = random_instance(3, 3, 2, 1, 1);
        let u = potential_matrix(&m, &m.kernels(), &train);
        let l = fts_objective(&m, &train, 1).unwrap();
        assert!((l - fts_log_prob(&u, 1, 1).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn objective_matches_summed_terms() {
        let (m, train) = random_instance(8, 4, 2, 3, 2);
        let u = potential_matrix(&m, &m.kernels(), &train);
        for c in 0..2 {
            let direct: f64 = (1..=3).map(|t| product_form(&u, c, t)).sum();
            assert!((fts_objective(&m, &train, c).unwrap() - direct.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn objective_falls_with_label_bias() {
        let (mut m, train) = random_instance(4, 2, 2, 3, 2);
        let mut prev = f64::INFINITY;
        for b in [0.0, -5.0, -20.0, -80.0] {
            m.biases[0] = b;
            let l = fts_objective(&m, &train, 0).unwrap();
            assert!(l < prev);
            prev = l;
        }
        assert!(prev < -70.0);
    }

    #[test]
    fn silent_input_has_zero_weight_gradient() {
        let (m, _) = random_instance(5, 3, 2, 4, 3);
        let silent = SpikeTrain::silent(3, 4);
        let g = fts_gradient(&m, &silent, 0).unwrap();
        assert!(g.weights.iter().all(|&w| w == 0.0));
        assert!(g.biases.iter().all(|&b| b != 0.0));
    }

    #[test]
    fn symmetric_rivals_share_gradients() {
        let (mut m, train) = random_instance(6, 3, 3, 4, 3);
        for j in 0..3 {
            for k in 0..3 {
                let v = m.weights[m.weight_index(j, 1, k)];
                let idx = m.weight_index(j, 2, k);
                m.weights[idx] = v;
            }
        }
        m.biases[2] = m.biases[1];
        let g = fts_gradient(&m, &train, 0).unwrap();
        assert_eq!(g.biases[1], g.biases[2]);
        for j in 0..3 {
            for k in 0..3 {
                assert_eq!(
                    g.weights[m.weight_index(j, 1, k)],
                    g.weights[m.weight_index(j, 2, k)]
                );
            }
        }
    }

    #[test]
    fn gradient_through_nonidentity_basis() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let basis = Basis::from_rows(&[vec![1, 0], vec![1, 1], vec![0, 1], vec![1, 0]]).unwrap();
        let mut m = GlmModel::zeros(3, 2, 5, basis).unwrap();
        m.weights.iter_mut().for_each(|w| *w = rng.gen_range(-1.0..1.0));
        let train = rate_encode(&[0.7, -0.6, 0.9], 5, &mut rng).unwrap();
        let g = fts_gradient(&m, &train, 1).unwrap();
        let h = 1e-5;
        for n in 0..m.weights.len() {
            let mut p = m.clone();
            p.weights[n] += h;
            let mut q = m.clone();
            q.weights[n] -= h;
            let fd = (fts_objective(&p, &train, 1).unwrap() - fts_objective(&q, &train, 1).unwrap()) / (2.0 * h);
            assert!((fd - g.weights[n]).abs() <= 1e-6 * (1.0 + fd.abs()), "{n}: {fd} vs {}", g.weights[n]);
        }
    }

    #[test]
    fn float_inference_extremes() {
        let mut m = GlmModel::zeros(2, 3, 4, Basis::identity(2)).unwrap();
        m.biases = vec![-60.0, 60.0, -60.0];
        let train = SpikeTrain::silent(2, 4);
        let k = m.kernels();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let d = infer_fts_float(&m, &k, &train, &mut rng);
        assert_eq!(d, FtsDecision { predicted_class: 1, decision_time: Some(1), fallback_used: false });

        m.biases = vec![-60.0, -59.0, -61.0];
        let d = infer_fts_float(&m, &k, &train, &mut rng);
        assert!(d.fallback_used);
        assert_eq!(d.decision_time, None);
        assert_eq!(d.predicted_class, 1);
    }

    #[test]
    fn zero_learning_rate_leaves_parameters() {
        let data = separable_task(16, Split::Train, 1).unwrap();
        let cfg = TrainConfig {
            epochs: 3,
            learning_rate: 0.0,
            batch_size: 4,
            seed: 2,
            presentation_time: 4,
            window: 4,
        };
        let out = train(&data, None, &cfg).unwrap();
        assert!(out.model.weights.iter().all(|&w| w == 0.0));
        assert!(out.model.biases.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn training_is_reproducible() {
        let data = separable_task(40, Split::Train, 3).unwrap();
        let cfg = TrainConfig {
            epochs: 3,
            learning_rate: 0.1,
            batch_size: 8,
            seed: 9,
            presentation_time: 4,
            window: 4,
        };
        let a = train(&data, None, &cfg).unwrap();
        let b = train(&data, None, &cfg).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(
            a.history.iter().map(|h| h.mean_loss.to_bits()).collect::<Vec<_>>(),
            b.history.iter().map(|h| h.mean_loss.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn config_validation() {
        let mut cfg = TrainConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.epochs = 0;
        assert!(cfg.validate().is_err());
        cfg = TrainConfig { window: 9, ..TrainConfig::default() };
        assert!(cfg.validate().is_err());
    }
}
