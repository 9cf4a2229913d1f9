//! Interchangeable first-to-spike inference engines, selected by name.
//!
//! * `float`     - logistic activation, Bernoulli output draws (reference).
//! * `quantized` - `b`-bit weights, biases, membrane and activation with the
//!   piecewise-linear sigmoid and LFSR draws.
//! * `core`      - the word-line-accurate core simulator (8-bit datapath
//!   formats, any synapse width that fits the memory).

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::core_sim::{run_first_to_spike, AccessTrace, Core, CoreGeometry};
use crate::data::{ArtifactPayload, Dataset};
use crate::error::{Error, Result};
use crate::fts::{argmax_first, infer_fts_float, FtsDecision};
use crate::glm::{rate_encode, GlmModel, SpikeTrain};
use crate::quant::{
    pwl_sigmoid_fixed, spike_decision_bits, FixedPointFormat, Lfsr16, QuantizedModel,
};
use crate::rng::{derive_seed, lfsr_seed, stream_rng, Stream};

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub decision: FtsDecision,
    pub trace: Option<AccessTrace>,
}

pub trait InferenceEngine: Send + Sync {
    fn name(&self) -> &'static str;

    fn n_inputs(&self) -> usize;

    fn presentation_time(&self) -> usize;

    /// Classifies one encoded sample. `sample_seed` drives the engine's own
    /// output-spike randomness.
    fn classify(&self, train: &SpikeTrain, sample_seed: u64) -> Result<Classification>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EngineParams {
    /// Synapse width used when a floating-point model must be quantized.
    pub bits: u32,
}

impl Default for EngineParams {
    fn default() -> Self {
        EngineParams { bits: 8 }
    }
}

pub type EngineFactory = fn(&ArtifactPayload, &EngineParams) -> Result<Box<dyn InferenceEngine>>;

#[derive(Clone, Default)]
pub struct EngineRegistry {
    factories: BTreeMap<&'static str, EngineFactory>,
}

impl EngineRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_builtins() -> Self {
        let mut reg = Self::new();
        reg.register("float", FloatEngine::factory);
        reg.register("quantized", QuantizedEngine::factory);
        reg.register("core", CoreEngine::factory);
        reg
    }

    pub fn register(&mut self, name: &'static str, factory: EngineFactory) {
        self.factories.insert(name, factory);
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.factories.keys().copied().collect()
    }

    pub fn build(
        &self,
        name: &str,
        payload: &ArtifactPayload,
        params: &EngineParams,
    ) -> Result<Box<dyn InferenceEngine>> {
        let factory = self.factories.get(name).ok_or_else(|| {
            Error::Config(format!(
                "unknown engine {name:?}; available: {}",
                self.names().join(", ")
            ))
        })?;
        factory(payload, params)
    }
}

fn quantized_payload(payload: &ArtifactPayload, params: &EngineParams) -> Result<QuantizedModel> {
    match payload {
        ArtifactPayload::Float(m) => QuantizedModel::from_model(m, params.bits),
        ArtifactPayload::Quantized(q) => Ok(q.clone()),
    }
}

fn lfsr_from_seed(seed: u64) -> Lfsr16 {
    Lfsr16::new(lfsr_seed(seed, 0)).expect("lfsr_seed is never zero")
}

pub struct FloatEngine {
    model: GlmModel,
    kernels: Vec<f64>,
}

impl FloatEngine {
    pub fn new(model: GlmModel) -> Self {
        let kernels = model.kernels();
        FloatEngine { model, kernels }
    }

    fn factory(payload: &ArtifactPayload, _: &EngineParams) -> Result<Box<dyn InferenceEngine>> {
        let model = match payload {
            ArtifactPayload::Float(m) => m.clone(),
            ArtifactPayload::Quantized(q) => q.dequantized(),
        };
        Ok(Box::new(FloatEngine::new(model)))
    }
}

impl InferenceEngine for FloatEngine {
    fn name(&self) -> &'static str {
        "float"
    }

    fn n_inputs(&self) -> usize {
        self.model.n_inputs
    }

    fn presentation_time(&self) -> usize {
        self.model.presentation_time
    }

    fn classify(&self, train: &SpikeTrain, sample_seed: u64) -> Result<Classification> {
        let mut rng = ChaCha8Rng::seed_from_u64(sample_seed);
        Ok(Classification {
            decision: infer_fts_float(&self.model, &self.kernels, train, &mut rng),
            trace: None,
        })
    }
}

/// `b`-bit evaluation path: membrane potential and activation output are
/// quantized to `b` bits as well as the parameters.
pub struct QuantizedEngine {
    model: QuantizedModel,
    kernel_codes: Vec<i64>,
    membrane: FixedPointFormat,
}

impl QuantizedEngine {
    pub fn new(model: QuantizedModel) -> Self {
        let kernel_codes = model.kernel_codes();
        let membrane = FixedPointFormat::membrane_for_bits(model.bits);
        QuantizedEngine {
            model,
            kernel_codes,
            membrane,
        }
    }

    fn factory(payload: &ArtifactPayload, params: &EngineParams) -> Result<Box<dyn InferenceEngine>> {
        Ok(Box::new(QuantizedEngine::new(quantized_payload(payload, params)?)))
    }

    /// Integer kernel sums (weight-step units) of every output at step `t`.
    pub fn kernel_sums(&self, train: &SpikeTrain, t: usize) -> Vec<i64> {
        let window = self.model.window();
        let n_out = self.model.n_outputs;
        let mut sums = vec![0i64; n_out];
        for j in 0..self.model.n_inputs {
            let sign = i64::from(train.sign(j));
            for d in 0..window {
                if !train.window_bit(j, t, d) {
                    continue;
                }
                for (i, s) in sums.iter_mut().enumerate() {
                    *s += sign * self.kernel_codes[(j * n_out + i) * window + d];
                }
            }
        }
        sums
    }
}

impl InferenceEngine for QuantizedEngine {
    fn name(&self) -> &'static str {
        "quantized"
    }

    fn n_inputs(&self) -> usize {
        self.model.n_inputs
    }

    fn presentation_time(&self) -> usize {
        self.model.presentation_time
    }

    fn classify(&self, train: &SpikeTrain, sample_seed: u64) -> Result<Classification> {
        let bits = self.model.bits;
        let mut lfsr = lfsr_from_seed(sample_seed);
        let mut last = vec![0i64; self.model.n_outputs];
        for t in 1..=train.n_steps() {
            let sums = self.kernel_sums(train, t);
            let mut winner = None;
            for (i, &sum) in sums.iter().enumerate() {
                let u = self.model.membrane_value(sum, self.model.biases.codes[i]);
                let code = self.membrane.quantize(u);
                last[i] = code;
                let level = pwl_sigmoid_fixed(code, self.membrane.frac_bits, bits);
                let (spike, next) = spike_decision_bits(level, bits, lfsr);
                lfsr = next;
                if spike && winner.is_none() {
                    winner = Some(i);
                }
            }
            if let Some(i) = winner {
                return Ok(Classification {
                    decision: FtsDecision {
                        predicted_class: i,
                        decision_time: Some(t),
                        fallback_used: false,
                    },
                    trace: None,
                });
            }
        }
        Ok(Classification {
            decision: FtsDecision {
                predicted_class: argmax_first(&last),
                decision_time: None,
                fallback_used: true,
            },
            trace: None,
        })
    }
}

pub struct CoreEngine {
    core: Core,
    presentation_time: usize,
}

impl CoreEngine {
    pub fn new(model: &QuantizedModel) -> Result<Self> {
        Ok(CoreEngine {
            core: Core::program(model, CoreGeometry::fitting(model))?,
            presentation_time: model.presentation_time,
        })
    }

    pub fn core(&self) -> &Core {
        &self.core
    }

    fn factory(payload: &ArtifactPayload, params: &EngineParams) -> Result<Box<dyn InferenceEngine>> {
        Ok(Box::new(CoreEngine::new(&quantized_payload(payload, params)?)?))
    }
}

impl InferenceEngine for CoreEngine {
    fn name(&self) -> &'static str {
        "core"
    }

    fn n_inputs(&self) -> usize {
        self.core.n_inputs()
    }

    fn presentation_time(&self) -> usize {
        self.presentation_time
    }

    fn classify(&self, train: &SpikeTrain, sample_seed: u64) -> Result<Classification> {
        let run = run_first_to_spike(&self.core, train, lfsr_from_seed(sample_seed))?;
        Ok(Classification {
            decision: run.decision,
            trace: Some(run.trace),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleResult {
    pub label: usize,
    pub decision: FtsDecision,
    pub trace: Option<AccessTrace>,
}

impl SampleResult {
    pub fn correct(&self) -> bool {
        self.decision.predicted_class == self.label
    }
}

/// Encodes and classifies every sample. Sample `n` uses encoding and output
/// streams derived from `(seed, tag, n)`, so results are independent of
/// thread scheduling and of which other samples are evaluated.
pub fn evaluate(
    engine: &dyn InferenceEngine,
    data: &Dataset,
    seed: u64,
    tag: u64,
) -> Result<Vec<SampleResult>> {
    if data.n_features != engine.n_inputs() {
        return Err(Error::Dimension(format!(
            "dataset has {} features, engine expects {}",
            data.n_features,
            engine.n_inputs()
        )));
    }
    let steps = engine.presentation_time();
    (0..data.len())
        .into_par_iter()
        .map(|n| {
            let mut rng = stream_rng(seed, Stream::EvalEncoding, tag, n as u64);
            let train = rate_encode(data.sample(n), steps, &mut rng)?;
            let c = engine.classify(&train, derive_seed(seed, Stream::OutputSpikes, tag, n as u64))?;
            Ok(SampleResult {
                label: data.labels[n],
                decision: c.decision,
                trace: c.trace,
            })
        })
        .collect()
}

pub fn accuracy(results: &[SampleResult]) -> f64 {
    if results.is_empty() {
        return 0.0;
    }
    results.iter().filter(|r| r.correct()).count() as f64 / results.len() as f64
}
