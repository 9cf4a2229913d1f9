//! Model artifact container.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic "PSNM" | version u32 | kind u8 (0 float, 1 quantized)
//! provenance: seed u64, epochs u32, presentation_time u32, window u32, bits u32
//! shape: n_inputs u32, n_outputs u32, presentation_time u32, window u32, n_basis u32
//! basis: window * n_basis bytes (0/1)
//! float payload:     weights f64[], biases f64[]
//! quantized payload: bits u32, then for weights and biases:
//!                    min f64, max f64, step f64, degenerate u8, codes i32[]
//! crc32 of all preceding bytes, u32
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glm::{Basis, GlmModel};
use crate::quant::{QuantizedModel, QuantizedTensor};

pub const ARTIFACT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"PSNM";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub epochs: u32,
    pub presentation_time: u32,
    pub window: u32,
    /// 0 for floating-point payloads.
    pub bits: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ArtifactPayload {
    Float(GlmModel),
    Quantized(QuantizedModel),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelArtifact {
    pub version: u32,
    pub provenance: Provenance,
    pub payload: ArtifactPayload,
}

impl ModelArtifact {
    pub fn float(model: GlmModel, provenance: Provenance) -> Self {
        ModelArtifact {
            version: ARTIFACT_VERSION,
            provenance,
            payload: ArtifactPayload::Float(model),
        }
    }

    pub fn quantized(model: QuantizedModel, provenance: Provenance) -> Self {
        ModelArtifact {
            version: ARTIFACT_VERSION,
            provenance,
            payload: ArtifactPayload::Quantized(model),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(MAGIC);
        w.u32(self.version);
        let (kind, shape) = match &self.payload {
            ArtifactPayload::Float(m) => (0u8, (m.n_inputs, m.n_outputs, m.presentation_time, &m.basis)),
            ArtifactPayload::Quantized(q) => {
                (1u8, (q.n_inputs, q.n_outputs, q.presentation_time, &q.basis))
            }
        };
        w.0.push(kind);
        let p = &self.provenance;
        w.u64(p.seed);
        w.u32(p.epochs);
        w.u32(p.presentation_time);
        w.u32(p.window);
        w.u32(p.bits);
        let (n_in, n_out, t, basis) = shape;
        w.u32(n_in as u32);
        w.u32(n_out as u32);
        w.u32(t as u32);
        w.u32(basis.window() as u32);
        w.u32(basis.n_basis() as u32);
        for d in 0..basis.window() {
            for k in 0..basis.n_basis() {
                w.0.push(basis.get(d, k));
            }
        }
        match &self.payload {
            ArtifactPayload::Float(m) => {
                m.weights.iter().for_each(|&v| w.f64(v));
                m.biases.iter().for_each(|&v| w.f64(v));
            }
            ArtifactPayload::Quantized(q) => {
                w.u32(q.bits);
                w.tensor(&q.weights);
                w.tensor(&q.biases);
            }
        }
        let crc = crc32fast::hash(&w.0);
        w.u32(crc);
        w.0
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        if bytes.len() < 8 || &bytes[..4] != MAGIC {
            return Err(Error::Format {
                path: path.to_path_buf(),
                position: 0,
                detail: "not a model artifact".into(),
            });
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != ARTIFACT_VERSION {
            return Err(Error::Version {
                found: version,
                expected: ARTIFACT_VERSION,
            });
        }
        let body = &bytes[..bytes.len() - 4];
        let stored = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().expect("4 bytes"));
        let computed = crc32fast::hash(body);
        if stored != computed {
            return Err(Error::Checksum { stored, computed });
        }
        let mut r = Reader {
            bytes: body,
            pos: 8,
            path,
        };
        let kind = r.u8()?;
        let provenance = Provenance {
            seed: r.u64()?,
            epochs: r.u32()?,
            presentation_time: r.u32()?,
            window: r.u32()?,
            bits: r.u32()?,
        };
        let n_inputs = r.u32()? as usize;
        let n_outputs = r.u32()? as usize;
        let presentation_time = r.u32()? as usize;
        let window = r.u32()? as usize;
        let n_basis = r.u32()? as usize;
        let rows = (0..window)
            .map(|_| (0..n_basis).map(|_| r.u8()).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        let basis = Basis::from_rows(&rows)?;
        let n_weights = n_inputs * n_outputs * n_basis;
        let payload = match kind {
            0 => {
                let weights = (0..n_weights).map(|_| r.f64()).collect::<Result<_>>()?;
                let biases = (0..n_outputs).map(|_| r.f64()).collect::<Result<_>>()?;
                let model = GlmModel {
                    n_inputs,
                    n_outputs,
                    presentation_time,
                    basis,
                    weights,
                    biases,
                };
                model.validate()?;
                ArtifactPayload::Float(model)
            }
            1 => {
                let bits = r.u32()?;
                let weights = r.tensor(bits, n_weights)?;
                let biases = r.tensor(bits, n_outputs)?;
                ArtifactPayload::Quantized(QuantizedModel {
                    bits,
                    n_inputs,
                    n_outputs,
                    presentation_time,
                    basis,
                    weights,
                    biases,
                })
            }
            other => {
                return Err(Error::Format {
                    path: path.to_path_buf(),
                    position: 8,
                    detail: format!("unknown payload kind {other}"),
                })
            }
        };
        if r.pos != body.len() {
            return Err(Error::Format {
                path: path.to_path_buf(),
                position: r.pos,
                detail: "trailing bytes after payload".into(),
            });
        }
        Ok(ModelArtifact {
            version,
            provenance,
            payload,
        })
    }
}

pub fn save_model(artifact: &ModelArtifact, path: &Path) -> Result<()> {
    fs::write(path, artifact.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<ModelArtifact> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    ModelArtifact::from_bytes(&bytes, path)
}

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn tensor(&mut self, t: &QuantizedTensor) {
        self.f64(t.min);
        self.f64(t.max);
        self.f64(t.step);
        self.0.push(u8::from(t.degenerate));
        for &c in &t.codes {
            self.0.extend_from_slice(&c.to_le_bytes());
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl Reader<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let slice = self.bytes.get(self.pos..self.pos + N).ok_or_else(|| Error::Format {
            path: self.path.to_path_buf(),
            position: self.pos,
            detail: "artifact truncated".into(),
        })?;
        self.pos += N;
        Ok(slice.try_into().expect("length checked"))
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take::<1>()?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take()?))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take()?))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take()?))
    }
    fn tensor(&mut self, bits: u32, len: usize) -> Result<QuantizedTensor> {
        let min = self.f64()?;
        let max = self.f64()?;
        let step = self.f64()?;
        let degenerate = self.u8()? != 0;
        let codes = (0..len)
            .map(|_| self.take::<4>().map(i32::from_le_bytes))
            .collect::<Result<_>>()?;
        Ok(QuantizedTensor {
            bits,
            codes,
            min,
            max,
            step,
            degenerate,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_model(seed: u64) -> GlmModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = GlmModel::zeros(5, 3, 6, Basis::identity(4)).unwrap();
        m.weights.iter_mut().for_each(|w| *w = rng.gen_range(-1.0..1.0));
        m.biases.iter_mut().for_each(|b| *b = rng.gen_range(-3.0..0.0));
        m
    }

    fn provenance(bits: u32) -> Provenance {
        Provenance {
            seed: 17,
            epochs: 3,
            presentation_time: 6,
            window: 4,
            bits,
        }
    }

    #[test]
    fn float_round_trip() {
        let art = ModelArtifact::float(random_model(1), provenance(0));
        let back = ModelArtifact::from_bytes(&art.to_bytes(), Path::new("m")).unwrap();
        assert_eq!(back, art);
    }

    #[test]
    fn quantized_b5_round_trip_preserves_codes() {
        let q = QuantizedModel::from_model(&random_model(2), 5).unwrap();
        let art = ModelArtifact::quantized(q.clone(), provenance(5));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("q.bin");
        save_model(&art, &path).unwrap();
        let back = load_model(&path).unwrap();
        let ArtifactPayload::Quantized(bq) = back.payload else {
            panic!("payload kind changed")
        };
        assert_eq!(bq.weights.codes, q.weights.codes);
        assert_eq!(bq.biases.codes, q.biases.codes);
        assert_eq!(bq.weights.step.to_bits(), q.weights.step.to_bits());
        assert_eq!(bq, q);
        assert_eq!(back.provenance, provenance(5));
    }

    #[test]
    fn tampered_byte_fails_checksum() {
        let mut bytes = ModelArtifact::float(random_model(3), provenance(0)).to_bytes();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x40;
        assert!(matches!(
            ModelArtifact::from_bytes(&bytes, Path::new("m")),
            Err(Error::Checksum { .. })
        ));
    }

    #[test]
    fn version_checked() {
        let mut bytes = ModelArtifact::float(random_model(4), provenance(0)).to_bytes();
        bytes[4] = 9;
        assert!(matches!(
            ModelArtifact::from_bytes(&bytes, Path::new("m")),
            Err(Error::Version { found: 9, .. })
        ));
    }
}
