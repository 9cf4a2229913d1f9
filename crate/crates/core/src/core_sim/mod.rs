//! Word-line-accurate simulation of one inference core.
//!
//! Per algorithmic step the core forms each input's delay window from its
//! input shift register, reads every active kernel word line in address
//! order followed by the always-read bias line, accumulates sign-adjusted
//! synapse codes in 18-bit saturating registers, clips the membrane
//! potential to 1.4.3, applies the piecewise-linear activation and draws one
//! spike per output neuron from a shared 16-bit LFSR.

mod memory;
mod trace;

pub use memory::{map_model_to_memory, unpack_memory, CoreGeometry, CoreMemoryImage, IMAGE_VERSION};
pub use trace::{latency_cdf, AccessTrace, LatencyCdf, StepTrace, TRACE_CSV_HEADER};

use crate::error::{Error, Result};
use crate::fts::{argmax_first, FtsDecision};
use crate::glm::{SpikeTrain, SpikeWindow};
use crate::quant::{clip_to_fixed, pwl_sigmoid, spike_decision, Lfsr16, QuantizedModel};

pub const ACCUMULATOR_BITS: u32 = 18;
pub const ACCUMULATOR_MAX: i32 = (1 << (ACCUMULATOR_BITS - 1)) - 1;
pub const ACCUMULATOR_MIN: i32 = -(1 << (ACCUMULATOR_BITS - 1));

/// Saturating add into an 18-bit two's-complement register.
#[inline]
pub fn saturating_accumulate(acc: i32, value: i32) -> i32 {
    (acc + value).clamp(ACCUMULATOR_MIN, ACCUMULATOR_MAX)
}

/// Delay window of one input at step `t`: spikes of steps `t-1` down to
/// `t-window`, most recent first, zero before the first step. `history`
/// holds the spikes of steps `1..` latched so far.
pub fn spike_window(history: &[bool], t: usize, window: usize) -> SpikeWindow {
    SpikeWindow {
        bits: (0..window)
            .map(|d| t >= d + 2 && history.get(t - 2 - d).copied().unwrap_or(false))
            .collect(),
    }
}

/// Word lines to read for one step: active kernel taps in increasing address
/// order, then the bias line.
pub fn gather_active_wordlines(windows: &[SpikeWindow], geometry: &CoreGeometry) -> Vec<usize> {
    let mut out: Vec<usize> = windows
        .iter()
        .enumerate()
        .flat_map(|(j, w)| {
            w.bits
                .iter()
                .enumerate()
                .filter(|(_, &b)| b)
                .map(move |(d, _)| geometry.address(j, d))
        })
        .collect();
    out.push(geometry.bias_line());
    out
}

/// A programmed core: memory image plus the per-core scale registers that
/// turn accumulator units into membrane units.
#[derive(Debug, Clone)]
pub struct Core {
    pub image: CoreMemoryImage,
    pub weight_step: f64,
    pub bias_step: f64,
}

impl Core {
    pub fn program(model: &QuantizedModel, geometry: CoreGeometry) -> Result<Self> {
        Ok(Core {
            image: map_model_to_memory(model, geometry)?,
            weight_step: model.weights.step,
            bias_step: model.biases.step,
        })
    }

    pub fn geometry(&self) -> &CoreGeometry {
        &self.image.geometry
    }

    pub fn n_outputs(&self) -> usize {
        self.image.mapped_outputs
    }

    pub fn n_inputs(&self) -> usize {
        self.image.mapped_inputs
    }
}

/// Registers that persist across steps of one presentation.
#[derive(Debug, Clone)]
pub struct CoreState {
    /// Input shift registers: latched spikes per input, oldest first.
    pub input_regs: Vec<Vec<bool>>,
    /// Address storage registers filled during the last step.
    pub address_regs: Vec<usize>,
    /// Kernel accumulators, one per mapped output, in weight-code units.
    pub accumulators: Vec<i32>,
    /// Bias codes read on the last step.
    pub bias_regs: Vec<i32>,
    pub lfsr: Lfsr16,
    pub step: usize,
}

impl CoreState {
    pub fn new(core: &Core, lfsr: Lfsr16) -> Self {
        CoreState {
            input_regs: vec![Vec::new(); core.n_inputs()],
            address_regs: Vec::new(),
            accumulators: vec![0; core.n_outputs()],
            bias_regs: vec![0; core.n_outputs()],
            lfsr,
            step: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub output_spikes: Vec<bool>,
    /// 1.4.3 membrane codes after clipping.
    pub clipped: Vec<i64>,
    pub trace: StepTrace,
}

/// Membrane potential in real units from the accumulator and bias code.
#[inline]
pub fn membrane_value(kernel_sum: i64, bias_code: i32, weight_step: f64, bias_step: f64) -> f64 {
    kernel_sum as f64 * weight_step + f64::from(bias_code) * bias_step
}

/// Executes one algorithmic step, then latches `input_spikes` into the input
/// registers for later windows.
pub fn core_step(state: &mut CoreState, core: &Core, input_spikes: &[bool], signs: &[i8]) -> StepOutput {
    let geometry = core.geometry();
    let t = state.step + 1;
    let windows: Vec<SpikeWindow> = state
        .input_regs
        .iter()
        .map(|reg| spike_window(reg, t, geometry.window))
        .collect();
    state.address_regs = gather_active_wordlines(&windows, geometry);

    let n_out = core.n_outputs();
    state.accumulators.iter_mut().for_each(|a| *a = 0);
    let bias_line = geometry.bias_line();
    for &address in &state.address_regs {
        if address == bias_line {
            for (i, b) in state.bias_regs.iter_mut().enumerate() {
                *b = core.image.read_field(address, i);
            }
            continue;
        }
        let sign = i32::from(signs[address / geometry.window]);
        for (i, acc) in state.accumulators.iter_mut().enumerate().take(n_out) {
            *acc = saturating_accumulate(*acc, sign * core.image.read_field(address, i));
        }
    }

    let mut output_spikes = Vec::with_capacity(n_out);
    let mut clipped = Vec::with_capacity(n_out);
    for i in 0..n_out {
        let u = membrane_value(
            i64::from(state.accumulators[i]),
            state.bias_regs[i],
            core.weight_step,
            core.bias_step,
        );
        let code = clip_to_fixed(u);
        let (spike, next) = spike_decision(pwl_sigmoid(code), state.lfsr);
        state.lfsr = next;
        output_spikes.push(spike);
        clipped.push(code);
    }

    for (reg, &s) in state.input_regs.iter_mut().zip(input_spikes) {
        reg.push(s);
    }
    state.step = t;
    StepOutput {
        output_spikes,
        clipped,
        trace: StepTrace {
            step: t,
            addresses: state.address_regs.clone(),
        },
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoreRun {
    pub decision: FtsDecision,
    pub trace: AccessTrace,
    /// Clipped membrane codes of the last executed step.
    pub final_clipped: Vec<i64>,
}

/// Runs one presentation, stopping at the first step with any output spike.
pub fn run_first_to_spike(core: &Core, train: &SpikeTrain, lfsr: Lfsr16) -> Result<CoreRun> {
    if train.n_inputs() != core.n_inputs() {
        return Err(Error::Geometry(format!(
            "spike train has {} channels, core maps {} inputs",
            train.n_inputs(),
            core.n_inputs()
        )));
    }
    let mut state = CoreState::new(core, lfsr);
    let mut steps = Vec::new();
    let mut last = vec![0; core.n_outputs()];
    let mut inputs = vec![false; train.n_inputs()];
    for t in 1..=train.n_steps() {
        for (j, s) in inputs.iter_mut().enumerate() {
            *s = train.spike(j, t);
        }
        let out = core_step(&mut state, core, &inputs, train.signs());
        steps.push(out.trace);
        last = out.clipped;
        if let Some(i) = out.output_spikes.iter().position(|&s| s) {
            return Ok(CoreRun {
                decision: FtsDecision {
                    predicted_class: i,
                    decision_time: Some(t),
                    fallback_used: false,
                },
                trace: AccessTrace::new(steps),
                final_clipped: last,
            });
        }
    }
    Ok(CoreRun {
        decision: FtsDecision {
            predicted_class: argmax_first(&last),
            decision_time: None,
            fallback_used: true,
        },
        trace: AccessTrace::new(steps),
        final_clipped: last,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::glm::{rate_encode, Basis, GlmModel};
    use crate::quant::{QuantizedTensor, MEMBRANE_1_4_3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn quantized_with(n_in: usize, n_out: usize, window: usize, seed: u64) -> QuantizedModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = GlmModel::zeros(n_in, n_out, 8, Basis::identity(window)).unwrap();
        m.weights.iter_mut().for_each(|w| *w = rng.gen_range(-1.0..1.0));
        m.biases.iter_mut().for_each(|b| *b = rng.gen_range(-3.0..1.0));
        QuantizedModel::from_model(&m, 8).unwrap()
    }

    #[test]
    fn window_examples() {
        assert_eq!(spike_window(&[], 1, 7).to_bit_string(), "0000000");
        assert_eq!(spike_window(&[true, false], 3, 7).to_bit_string(), "0100000");
        assert_eq!(spike_window(&[false, true], 3, 7).to_bit_string(), "1000000");
        assert_eq!(spike_window(&[true; 7], 8, 7).to_bit_string(), "1111111");
        // only the last tau steps are visible
        assert_eq!(spike_window(&[true, false, false, false], 5, 3).to_bit_string(), "000");
    }

    #[test]
    fn window_agrees_with_spike_train_view() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let train = rate_encode(&[0.5, 0.3], 10, &mut rng).unwrap();
        for t in 1..=10 {
            let history: Vec<bool> = train.channel(0)[..t - 1].to_vec();
            assert_eq!(spike_window(&history, t, 4), train.window(0, t, 4));
        }
    }

    #[test]
    fn gather_example_and_bias_last() {
        let g = CoreGeometry::standard(7, 8);
        let mut windows = vec![SpikeWindow::zeros(7); 3];
        windows[0] = SpikeWindow::from_bit_string("1010010").unwrap();
        let lines = gather_active_wordlines(&windows, &g);
        assert_eq!(lines, vec![0, 2, 5, g.bias_line()]);
        let silent = vec![SpikeWindow::zeros(7); 3];
        assert_eq!(gather_active_wordlines(&silent, &g), vec![g.bias_line()]);
    }

    #[test]
    fn gather_count_is_popcount_plus_one() {
        let g = CoreGeometry::standard(5, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let windows: Vec<SpikeWindow> = (0..20)
                .map(|_| SpikeWindow { bits: (0..5).map(|_| rng.gen_bool(0.4)).collect() })
                .collect();
            let pop: usize = windows.iter().map(SpikeWindow::popcount).sum();
            let lines = gather_active_wordlines(&windows, &g);
            assert_eq!(lines.len(), pop + 1);
            assert!(lines[..pop].windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn zero_image_fires_at_half_rate() {
        let m = GlmModel::zeros(4, 8, 8, Basis::identity(7)).unwrap();
        let q = QuantizedModel::from_model(&m, 8).unwrap();
        let core = Core::program(&q, CoreGeometry::standard(7, 8)).unwrap();
        let mut state = CoreState::new(&core, Lfsr16::new(0x1234).unwrap());
        let mut spikes = 0usize;
        let steps = 4000;
        for _ in 0..steps {
            let out = core_step(&mut state, &core, &[false; 4], &[1; 4]);
            assert!(out.clipped.iter().all(|&c| c == 0));
            spikes += out.output_spikes.iter().filter(|&&s| s).count();
        }
        let rate = spikes as f64 / (steps * 8) as f64;
        assert!((rate - 0.5).abs() < 0.01, "rate {rate}");
    }

    #[test]
    fn single_line_matches_scalar_recomputation() {
        let q = quantized_with(3, 5, 4, 21);
        let core = Core::program(&q, CoreGeometry::standard(4, 8)).unwrap();
        let mut state = CoreState::new(&core, Lfsr16::new(7).unwrap());
        // input 1 spikes at step 1; at step 2 only its tap-0 line is active
        core_step(&mut state, &core, &[false, true, false], &[1, -1, 1]);
        let out = core_step(&mut state, &core, &[false, false, false], &[1, -1, 1]);
        assert_eq!(out.trace.addresses, vec![4, core.geometry().bias_line()]);
        for i in 0..5 {
            let w = -f64::from(q.weight_code(1, i, 0)) * q.weights.step;
            let u = w + q.biases.dequantize(i);
            assert_eq!(state.accumulators[i], -q.weight_code(1, i, 0));
            assert_eq!(out.clipped[i], clip_to_fixed(u));
        }
    }

    #[test]
    fn saturation_path() {
        let mut m = GlmModel::zeros(256, 4, 8, Basis::identity(7)).unwrap();
        m.weights.iter_mut().for_each(|w| *w = 1.0);
        m.weights[0] = 0.0;
        let q = QuantizedModel::from_model(&m, 8).unwrap();
        assert_eq!(q.weights.codes[1], 127);
        let core = Core::program(&q, CoreGeometry::standard(7, 8)).unwrap();
        let mut state = CoreState::new(&core, Lfsr16::new(9).unwrap());
        let ones = vec![true; 256];
        let signs = vec![1i8; 256];
        let mut last = None;
        for _ in 0..8 {
            last = Some(core_step(&mut state, &core, &ones, &signs));
        }
        let out = last.unwrap();
        assert_eq!(out.trace.addresses.len(), 1793);
        assert_eq!(state.accumulators[1], ACCUMULATOR_MAX);
        assert_eq!(MEMBRANE_1_4_3.value(out.clipped[1]), 7.875);
        assert_eq!(pwl_sigmoid(out.clipped[1]), 255);
    }

    #[test]
    fn worst_case_bound_against_register_width() {
        // |sum| <= max magnitude * kernel lines; record where that lands
        // relative to the 18-bit register.
        let g = CoreGeometry::standard(7, 8);
        let worst = i64::from(QuantizedTensor::max_magnitude(8)) * g.kernel_lines() as i64;
        assert_eq!(worst, 227_584);
        assert!(worst > i64::from(ACCUMULATOR_MAX));
        // the register saturates instead of wrapping
        let mut acc = 0;
        for _ in 0..g.kernel_lines() {
            acc = saturating_accumulate(acc, 127);
        }
        assert_eq!(acc, ACCUMULATOR_MAX);
        let mut acc = 0;
        for _ in 0..g.kernel_lines() {
            acc = saturating_accumulate(acc, -127);
        }
        assert_eq!(acc, ACCUMULATOR_MIN);
        // lines that fit: 131071 / 127 = 1032 full-scale reads
        assert_eq!(i64::from(ACCUMULATOR_MAX) / 127, 1032);
    }

    #[test]
    fn strong_bias_decides_at_first_step() {
        let mut m = GlmModel::zeros(8, 4, 8, Basis::identity(7)).unwrap();
        m.biases = vec![-8.0, -8.0, 8.0, -8.0];
        let q = QuantizedModel::from_model(&m, 8).unwrap();
        let core = Core::program(&q, CoreGeometry::standard(7, 8)).unwrap();
        let train = SpikeTrain::silent(8, 8);
        let mut hits = 0;
        for seed in 1..=200u16 {
            let run = run_first_to_spike(&core, &train, Lfsr16::new(seed).unwrap()).unwrap();
            if run.decision.decision_time == Some(1) && run.decision.predicted_class == 2 {
                hits += 1;
                assert_eq!(run.trace.steps.len(), 1);
            }
        }
        assert!(hits >= 195, "{hits}");
    }

    #[test]
    fn silent_core_falls_back_after_full_presentation() {
        let m = GlmModel::zeros(8, 3, 8, Basis::identity(7)).unwrap();
        let mut q = QuantizedModel::from_model(&m, 8).unwrap();
        q.biases.step = 0.125;
        q.biases.codes = vec![-64, -63, -64];
        let core = Core::program(&q, CoreGeometry::standard(7, 8)).unwrap();
        let train = SpikeTrain::silent(8, 8);
        let run = run_first_to_spike(&core, &train, Lfsr16::new(77).unwrap()).unwrap();
        assert!(run.decision.fallback_used);
        assert_eq!(run.decision.decision_time, None);
        assert_eq!(run.trace.steps.len(), 8);
        assert_eq!(run.trace.total_reads(), 8);
        assert_eq!(run.decision.predicted_class, 1);
    }

    #[test]
    fn identical_inputs_identical_runs() {
        let q = quantized_with(30, 6, 7, 5);
        let core = Core::program(&q, CoreGeometry::standard(7, 8)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<f64> = (0..30).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let train = rate_encode(&x, 8, &mut rng).unwrap();
        let a = run_first_to_spike(&core, &train, Lfsr16::new(300).unwrap()).unwrap();
        let b = run_first_to_spike(&core, &train, Lfsr16::new(300).unwrap()).unwrap();
        assert_eq!(a, b);
    }
}
