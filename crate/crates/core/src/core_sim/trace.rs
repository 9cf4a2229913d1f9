use serde::Serialize;

use crate::error::{Error, Result};
use crate::fts::FtsDecision;

pub const TRACE_CSV_HEADER: &str = "sample_id,step,wordlines_read,decided,class,t_d";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepTrace {
    pub step: usize,
    /// Word-line addresses read, in read order; the bias line is last.
    pub addresses: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AccessTrace {
    pub steps: Vec<StepTrace>,
}

impl AccessTrace {
    pub fn new(steps: Vec<StepTrace>) -> Self {
        AccessTrace { steps }
    }

    pub fn total_reads(&self) -> usize {
        self.steps.iter().map(|s| s.addresses.len()).sum()
    }

    pub fn n_steps(&self) -> usize {
        self.steps.len()
    }

    /// CSV rows for one sample. `decided` is 1 on the step whose spike made
    /// the decision; `t_d` is empty when no neuron fired.
    pub fn csv_rows(&self, sample_id: usize, decision: &FtsDecision) -> Vec<String> {
        let t_d = decision.decision_time.map(|t| t.to_string()).unwrap_or_default();
        self.steps
            .iter()
            .map(|s| {
                let decided = decision.decision_time == Some(s.step);
                format!(
                    "{sample_id},{},{},{},{},{t_d}",
                    s.step,
                    s.addresses.len(),
                    u8::from(decided),
                    decision.predicted_class
                )
            })
            .collect()
    }
}

/// Cumulative fraction of samples decided by each step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatencyCdf {
    /// `cdf[t - 1]` = fraction with a spike decision at or before step `t`.
    pub cdf: Vec<f64>,
    pub no_spike: f64,
    pub samples: usize,
}

impl LatencyCdf {
    pub fn at(&self, t: usize) -> f64 {
        self.cdf[t - 1]
    }
}

pub fn latency_cdf<'a>(
    decisions: impl IntoIterator<Item = &'a FtsDecision>,
    presentation_time: usize,
) -> Result<LatencyCdf> {
    let mut counts = vec![0usize; presentation_time];
    let mut none = 0usize;
    let mut total = 0usize;
    for d in decisions {
        total += 1;
        match d.decision_time {
            Some(t) if (1..=presentation_time).contains(&t) => counts[t - 1] += 1,
            Some(t) => {
                return Err(Error::OutOfRange(format!(
                    "decision at step {t} beyond T={presentation_time}"
                )))
            }
            None => none += 1,
        }
    }
    if total == 0 {
        return Err(Error::Empty("latency CDF needs at least one decision".into()));
    }
    let mut running = 0usize;
    let cdf = counts
        .iter()
        .map(|c| {
            running += c;
            running as f64 / total as f64
        })
        .collect();
    Ok(LatencyCdf {
        cdf,
        no_spike: none as f64 / total as f64,
        samples: total,
    })
}
