use rand::Rng;

use super::{Dataset, Split};
use crate::error::Result;
use crate::rng::{stream_rng, Stream};

/// Two-class task on four channels: class 0 drives channels 0-1 hard and
/// channels 2-3 weakly, class 1 the reverse. Linearly separable in rate.
pub fn separable_task(n_samples: usize, split: Split, seed: u64) -> Result<Dataset> {
    let mut rng = stream_rng(seed, Stream::Init, split as u64, n_samples as u64);
    let mut features = Vec::with_capacity(n_samples * 4);
    let mut labels = Vec::with_capacity(n_samples);
    for n in 0..n_samples {
        let label = n % 2;
        for ch in 0..4 {
            let strong = (ch < 2) == (label == 0);
            let v: f64 = if strong {
                rng.gen_range(0.75..1.0)
            } else {
                rng.gen_range(0.0..0.25)
            };
            features.push(v);
        }
        labels.push(label);
    }
    let mut ds = Dataset::new(4, 2, split, features, labels)?;
    ds.normalization = Some(super::Normalization::fixed(4, 1.0));
    Ok(ds)
}
