use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{Command, DataArgs, DatasetKind, PerfArgs, QuantizeArgs, SimulateArgs, SplitArg, TrainArgs};
use crate::core_sim::{latency_cdf, LatencyCdf, TRACE_CSV_HEADER};
use crate::data::{
    load_digits, load_har, load_model, save_model, separable_task, ArtifactPayload, Dataset,
    ModelArtifact, Normalization, Provenance, Split,
};
use crate::engine::{accuracy, evaluate, CoreEngine, EngineParams, EngineRegistry};
use crate::error::{Error, Result};
use crate::fts::{train_with_observer, EpochMetrics, TrainConfig};
use crate::perf::{report, PerfConfig, PerfReport};
use crate::quant::QuantizedModel;

const SYNTHETIC_TRAIN: usize = 400;
const SYNTHETIC_TEST: usize = 200;

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn prepare_out(out: &Path, command: &Command) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let json = serde_json::to_string_pretty(command).expect("run config serializes");
    write_file(&out.join("run_config.json"), json + "\n")
}

/// Loads train and test splits, normalized with train-split statistics.
pub fn load_splits(args: &DataArgs, seed: u64) -> Result<(Dataset, Dataset)> {
    let (train, test) = match args.dataset {
        DatasetKind::Digits => {
            let dir = args.data_dir.clone().unwrap_or_else(|| PathBuf::from("data/digits"));
            (load_digits(&dir, Split::Train)?, load_digits(&dir, Split::Test)?)
        }
        DatasetKind::Har => {
            let dir = args.data_dir.clone().unwrap_or_else(|| PathBuf::from("data/har"));
            let train = load_har(&dir, Split::Train)?;
            let norm = Normalization::fit(&train)?;
            (train.normalized(&norm)?, load_har(&dir, Split::Test)?.normalized(&norm)?)
        }
        DatasetKind::Synthetic => (
            separable_task(args.limit.unwrap_or(SYNTHETIC_TRAIN), Split::Train, seed)?,
            separable_task(
                args.test_limit.or(args.limit).unwrap_or(SYNTHETIC_TEST),
                Split::Test,
                seed.wrapping_add(1),
            )?,
        ),
    };
    let train = match args.limit {
        Some(n) => train.truncated(n),
        None => train,
    };
    let test = match args.test_limit.or(args.limit) {
        Some(n) => test.truncated(n),
        None => test,
    };
    Ok((train, test))
}

fn metrics_csv(history: &[EpochMetrics]) -> String {
    let mut s = String::from("epoch,train_acc,test_acc,mean_loss\n");
    for m in history {
        let _ = writeln!(s, "{},{:.6},{:.6},{:.6}", m.epoch, m.train_acc, m.test_acc, m.mean_loss);
    }
    s
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainSummary {
    pub history: Vec<EpochMetrics>,
    pub model_path: PathBuf,
}

pub fn cmd_train(args: &TrainArgs, verbose: bool) -> Result<TrainSummary> {
    let cfg = TrainConfig {
        epochs: args.epochs as usize,
        learning_rate: args.lr,
        batch_size: args.batch,
        seed: args.seed,
        presentation_time: args.presentation_time,
        window: args.tau,
    };
    cfg.validate()?;
    prepare_out(&args.out, &Command::Train(args.clone()))?;
    let (train, test) = load_splits(&args.data, args.seed)?;
    let outcome = train_with_observer(&train, Some(&test), &cfg, |m| {
        if verbose {
            eprintln!(
                "epoch {:>4}  train {:.4}  test {:.4}  loss {:.4}",
                m.epoch, m.train_acc, m.test_acc, m.mean_loss
            );
        }
    })?;
    let provenance = Provenance {
        seed: args.seed,
        epochs: args.epochs as u32,
        presentation_time: args.presentation_time as u32,
        window: args.tau as u32,
        bits: 0,
    };
    let model_path = args.out.join("model.bin");
    save_model(&ModelArtifact::float(outcome.model, provenance), &model_path)?;
    write_file(&args.out.join("metrics.csv"), metrics_csv(&outcome.history))?;
    Ok(TrainSummary {
        history: outcome.history,
        model_path,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct BitsRow {
    pub bits: u32,
    pub accuracy: f64,
    pub degenerate: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct QuantizeSummary {
    pub float_accuracy: f64,
    pub rows: Vec<BitsRow>,
}

fn float_payload(artifact: &ModelArtifact, path: &Path) -> Result<crate::glm::GlmModel> {
    match &artifact.payload {
        ArtifactPayload::Float(m) => Ok(m.clone()),
        ArtifactPayload::Quantized(_) => Err(Error::Config(format!(
            "{} holds a quantized model; quantize needs a floating-point one",
            path.display()
        ))),
    }
}

fn check_features(model_inputs: usize, data: &Dataset) -> Result<()> {
    if model_inputs != data.n_features {
        return Err(Error::Dimension(format!(
            "model has {model_inputs} inputs, dataset has {} features",
            data.n_features
        )));
    }
    Ok(())
}

/// Test-split accuracy of the float model and of the `b`-bit path for each
/// requested width. All evaluations share the same input encodings.
pub fn cmd_quantize(args: &QuantizeArgs) -> Result<QuantizeSummary> {
    if args.bits.is_empty() {
        return Err(Error::Config("no bit widths requested".into()));
    }
    let artifact = load_model(&args.model)?;
    let model = float_payload(&artifact, &args.model)?;
    prepare_out(&args.out, &Command::Quantize(args.clone()))?;
    let (_, test) = load_splits(&args.data, args.seed)?;
    check_features(model.n_inputs, &test)?;

    let registry = EngineRegistry::with_builtins();
    let float_payload = ArtifactPayload::Float(model.clone());
    let float_engine = registry.build("float", &float_payload, &EngineParams::default())?;
    let float_accuracy = accuracy(&evaluate(float_engine.as_ref(), &test, args.seed, 0)?);

    let mut rows = Vec::new();
    let mut csv = String::from("bits,accuracy,float_accuracy,degenerate\n");
    for &bits in &args.bits {
        let q = QuantizedModel::from_model(&model, bits)?;
        let degenerate = q.weights.degenerate || q.biases.degenerate;
        let payload = ArtifactPayload::Quantized(q.clone());
        let engine = registry.build("quantized", &payload, &EngineParams { bits })?;
        let acc = accuracy(&evaluate(engine.as_ref(), &test, args.seed, 0)?);
        let _ = writeln!(csv, "{bits},{acc:.6},{float_accuracy:.6},{}", u8::from(degenerate));
        let provenance = Provenance { bits, ..artifact.provenance.clone() };
        save_model(
            &ModelArtifact::quantized(q, provenance),
            &args.out.join(format!("quantized_b{bits}.bin")),
        )?;
        rows.push(BitsRow { bits, accuracy: acc, degenerate });
    }
    write_file(&args.out.join("accuracy_vs_bits.csv"), csv)?;
    Ok(QuantizeSummary { float_accuracy, rows })
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateSummary {
    pub engine: String,
    pub samples: usize,
    pub accuracy: f64,
    pub cdf_all: LatencyCdf,
    pub cdf_correct: Option<LatencyCdf>,
    /// CDF of all samples at step 4 (or at T when T < 4).
    pub cdf_at_4: f64,
    /// Mean word lines read per executed step (core engine only).
    pub mean_wordlines_per_step: Option<f64>,
}

fn cdf_csv(all: &LatencyCdf, correct: Option<&LatencyCdf>) -> String {
    let mut s = String::from("step,cdf_all,cdf_correct\n");
    for t in 1..=all.cdf.len() {
        let c = correct.map(|c| format!("{:.6}", c.at(t))).unwrap_or_default();
        let _ = writeln!(s, "{t},{:.6},{c}", all.at(t));
    }
    let c = correct.map(|c| format!("{:.6}", c.no_spike)).unwrap_or_default();
    let _ = writeln!(s, "none,{:.6},{c}", all.no_spike);
    s
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<SimulateSummary> {
    let registry = EngineRegistry::with_builtins();
    let artifact = load_model(&args.model)?;
    let params = EngineParams { bits: args.bits };
    let engine = registry.build(&args.engine, &artifact.payload, &params)?;
    prepare_out(&args.out, &Command::Simulate(args.clone()))?;
    let (train, test) = load_splits(&args.data, args.seed)?;
    let data = match args.split {
        SplitArg::Train => train,
        SplitArg::Test => test,
    };
    check_features(engine.n_inputs(), &data)?;
    let results = evaluate(engine.as_ref(), &data, args.seed, 0)?;

    let mut decisions = String::from("sample_id,label,class,t_d,fallback,correct,wordlines_read\n");
    let mut trace = String::from(TRACE_CSV_HEADER);
    trace.push('\n');
    let mut reads = 0usize;
    let mut steps = 0usize;
    for (n, r) in results.iter().enumerate() {
        let d = &r.decision;
        let total = r.trace.as_ref().map(|t| t.total_reads().to_string()).unwrap_or_default();
        let _ = writeln!(
            decisions,
            "{n},{},{},{},{},{},{total}",
            r.label,
            d.predicted_class,
            d.decision_time.map(|t| t.to_string()).unwrap_or_default(),
            u8::from(d.fallback_used),
            u8::from(r.correct())
        );
        if let Some(t) = &r.trace {
            reads += t.total_reads();
            steps += t.n_steps();
            for row in t.csv_rows(n, d) {
                trace.push_str(&row);
                trace.push('\n');
            }
        }
    }
    write_file(&args.out.join("decisions.csv"), decisions)?;
    let has_trace = results.iter().any(|r| r.trace.is_some());
    if has_trace {
        write_file(&args.out.join("trace.csv"), trace)?;
    }
    if args.engine == "core" {
        let q = match &artifact.payload {
            ArtifactPayload::Float(m) => QuantizedModel::from_model(m, args.bits)?,
            ArtifactPayload::Quantized(q) => q.clone(),
        };
        CoreEngine::new(&q)?.core().image.save(&args.out.join("memory_image.bin"))?;
    }

    let t_max = engine.presentation_time();
    let cdf_all = latency_cdf(results.iter().map(|r| &r.decision), t_max)?;
    let correct: Vec<_> = results.iter().filter(|r| r.correct()).map(|r| r.decision).collect();
    let cdf_correct = if correct.is_empty() {
        None
    } else {
        Some(latency_cdf(&correct, t_max)?)
    };
    write_file(&args.out.join("latency_cdf.csv"), cdf_csv(&cdf_all, cdf_correct.as_ref()))?;

    let summary = SimulateSummary {
        engine: engine.name().to_string(),
        samples: results.len(),
        accuracy: accuracy(&results),
        cdf_at_4: cdf_all.at(t_max.min(4)),
        cdf_all,
        cdf_correct,
        mean_wordlines_per_step: (steps > 0).then(|| reads as f64 / steps as f64),
    };
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    write_file(&args.out.join("summary.json"), json + "\n")?;
    Ok(summary)
}

pub fn cmd_perf(args: &PerfArgs) -> Result<PerfReport> {
    let cfg = match &args.perf_config {
        Some(p) => PerfConfig::load(p)?,
        None => PerfConfig::builtin()?,
    };
    prepare_out(&args.out, &Command::Perf(args.clone()))?;
    if let Some(p) = &args.write_config {
        write_file(p, PerfConfig::builtin()?.to_toml()?)?;
    }
    let rep = report(&cfg)?;
    write_file(&args.out.join("perf_report.json"), rep.to_json() + "\n")?;
    write_file(&args.out.join("perf_report.txt"), rep.text_table())?;
    Ok(rep)
}
