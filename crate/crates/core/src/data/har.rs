//! Human-activity-recognition feature files: one sample per line, features
//! separated by whitespace or commas, labels `1..=6` in a parallel file.

use std::fs;
use std::path::{Path, PathBuf};

use super::{Dataset, Split};
use crate::error::{Error, Result};

pub const HAR_CLASSES: usize = 6;

fn locate(dir: &Path, split: Split, kind: char) -> PathBuf {
    let name = format!("{kind}_{}.txt", split.as_str());
    let nested = dir.join(split.as_str()).join(&name);
    if nested.exists() {
        nested
    } else {
        dir.join(name)
    }
}

/// Parses feature and label text. Features are returned raw (signed);
/// normalization is fitted separately on the train split.
pub fn parse_har(
    features: &str,
    labels: &str,
    split: Split,
    features_path: &Path,
    labels_path: &Path,
) -> Result<Dataset> {
    let mut width = None;
    let mut values = Vec::new();
    let mut rows = 0;
    for (line_no, line) in features.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<f64>().map_err(|e| Error::Format {
                    path: features_path.to_path_buf(),
                    position: line_no + 1,
                    detail: format!("bad number {s:?}: {e}"),
                })
            })
            .collect::<Result<_>>()?;
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(Error::Format {
                    path: features_path.to_path_buf(),
                    position: line_no + 1,
                    detail: format!("row has {} features, expected {w}", row.len()),
                })
            }
            _ => {}
        }
        values.extend(row);
        rows += 1;
    }
    let mut label_vec = Vec::with_capacity(rows);
    for (line_no, line) in labels.lines().enumerate() {
        let s = line.trim();
        if s.is_empty() {
            continue;
        }
        let label = match s.parse::<usize>() {
            Ok(l) if (1..=HAR_CLASSES).contains(&l) => l - 1,
            _ => {
                return Err(Error::Format {
                    path: labels_path.to_path_buf(),
                    position: line_no + 1,
                    detail: format!("unknown activity label {s:?}"),
                })
            }
        };
        label_vec.push(label);
    }
    if label_vec.len() != rows {
        return Err(Error::Format {
            path: labels_path.to_path_buf(),
            position: label_vec.len(),
            detail: format!("{} labels for {rows} feature rows", label_vec.len()),
        });
    }
    let width = width.ok_or_else(|| Error::Empty(format!("{}", features_path.display())))?;
    Dataset::new(width, HAR_CLASSES, split, values, label_vec)
}

/// Loads `X_<split>.txt` / `y_<split>.txt` from `dir` or `dir/<split>/`.
pub fn load_har(dir: &Path, split: Split) -> Result<Dataset> {
    let xp = locate(dir, split, 'X');
    let yp = locate(dir, split, 'y');
    let x = fs::read_to_string(&xp).map_err(|e| Error::io(&xp, e))?;
    let y = fs::read_to_string(&yp).map_err(|e| Error::io(&yp, e))?;
    parse_har(&x, &y, split, &xp, &yp)
}
