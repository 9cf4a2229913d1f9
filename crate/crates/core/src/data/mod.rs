//! Datasets, input normalization, and model artifact persistence.

mod artifact;
mod har;
mod idx;
mod synthetic;

pub use artifact::{load_model, save_model, ArtifactPayload, ModelArtifact, Provenance, ARTIFACT_VERSION};
pub use har::{load_har, parse_har};
pub use idx::{load_digits, parse_idx, IdxArray};
pub use synthetic::separable_task;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

/// Per-feature magnitude range used to map `|x|` onto `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl Normalization {
    /// Fixed range `[0, max]` for every feature (e.g. 8-bit pixels).
    pub fn fixed(n_features: usize, max: f64) -> Self {
        Normalization {
            min: vec![0.0; n_features],
            max: vec![max; n_features],
        }
    }

    /// Magnitude range of each feature over a training split.
    pub fn fit(train: &Dataset) -> Result<Self> {
        if train.split != Split::Train {
            return Err(Error::Config(
                "normalization statistics must come from the train split".into(),
            ));
        }
        if train.is_empty() {
            return Err(Error::Empty("cannot fit normalization on no samples".into()));
        }
        let mut min = vec![f64::INFINITY; train.n_features];
        let mut max = vec![f64::NEG_INFINITY; train.n_features];
        for n in 0..train.len() {
            for (f, &v) in train.sample(n).iter().enumerate() {
                min[f] = min[f].min(v.abs());
                max[f] = max[f].max(v.abs());
            }
        }
        Ok(Normalization { min, max })
    }

    pub fn apply_value(&self, feature: usize, v: f64) -> f64 {
        let (lo, hi) = (self.min[feature], self.max[feature]);
        let mag = if hi > lo {
            ((v.abs() - lo) / (hi - lo)).clamp(0.0, 1.0)
        } else {
            0.0
        };
        if v < 0.0 {
            -mag
        } else {
            mag
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub n_features: usize,
    pub n_classes: usize,
    pub split: Split,
    /// `[n_samples][n_features]`, flattened.
    pub features: Vec<f64>,
    pub labels: Vec<usize>,
    /// Set once features have been mapped to signed magnitudes in `[-1, 1]`.
    pub normalization: Option<Normalization>,
}

impl Dataset {
    pub fn new(
        n_features: usize,
        n_classes: usize,
        split: Split,
        features: Vec<f64>,
        labels: Vec<usize>,
    ) -> Result<Self> {
        if n_features == 0 || features.len() != labels.len() * n_features {
            return Err(Error::Dimension(format!(
                "{} feature values for {} samples of width {n_features}",
                features.len(),
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(Error::OutOfRange(format!(
                "label {bad} with {n_classes} classes"
            )));
        }
        Ok(Dataset {
            n_features,
            n_classes,
            split,
            features,
            labels,
            normalization: None,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sample(&self, n: usize) -> &[f64] {
        &self.features[n * self.n_features..(n + 1) * self.n_features]
    }

    pub fn is_normalized(&self) -> bool {
        self.normalization.is_some()
    }

    pub fn normalized(&self, norm: &Normalization) -> Result<Dataset> {
        if norm.min.len() != self.n_features {
            return Err(Error::Dimension(format!(
                "normalization covers {} features, dataset has {}",
                norm.min.len(),
                self.n_features
            )));
        }
        let features = self
            .features
            .chunks(self.n_features)
            .flat_map(|row| row.iter().enumerate().map(|(f, &v)| norm.apply_value(f, v)))
            .collect();
        Ok(Dataset {
            features,
            normalization: Some(norm.clone()),
            ..self.clone()
        })
    }

    /// First `limit` samples, order preserved.
    pub fn truncated(&self, limit: usize) -> Dataset {
        let n = limit.min(self.len());
        Dataset {
            features: self.features[..n * self.n_features].to_vec(),
            labels: self.labels[..n].to_vec(),
            ..self.clone()
        }
    }
}
