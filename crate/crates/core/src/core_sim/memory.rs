//! Synaptic memory image: one word line per (input, delay tap) pair plus one
//! bias line, each holding the `b`-bit sign-magnitude codes of every output
//! neuron packed output-major, MSB first.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quant::QuantizedModel;

pub const IMAGE_VERSION: u32 = 1;
const IMAGE_MAGIC: &[u8; 4] = b"PSNI";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoreGeometry {
    pub n_inputs: usize,
    pub n_outputs: usize,
    pub window: usize,
    pub bits: u32,
}

impl CoreGeometry {
    /// 256 inputs by 256 outputs.
    pub fn standard(window: usize, bits: u32) -> Self {
        CoreGeometry {
            n_inputs: 256,
            n_outputs: 256,
            window,
            bits,
        }
    }

    /// Smallest geometry at least as large as the standard core that holds
    /// `model`.
    pub fn fitting(model: &QuantizedModel) -> Self {
        CoreGeometry {
            n_inputs: model.n_inputs.max(256),
            n_outputs: model.n_outputs.max(256),
            window: model.window(),
            bits: model.bits,
        }
    }

    pub fn word_width(&self) -> usize {
        self.n_outputs * self.bits as usize
    }

    pub fn kernel_lines(&self) -> usize {
        self.n_inputs * self.window
    }

    pub fn n_wordlines(&self) -> usize {
        self.kernel_lines() + 1
    }

    pub fn bias_line(&self) -> usize {
        self.kernel_lines()
    }

    /// Rows of the physical array; unused rows above the bias line stay 0.
    pub fn physical_rows(&self) -> usize {
        self.n_wordlines().next_power_of_two()
    }

    #[inline]
    pub fn address(&self, input: usize, tap: usize) -> usize {
        input * self.window + tap
    }

    fn row_bytes(&self) -> usize {
        self.word_width().div_ceil(8)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoreMemoryImage {
    pub geometry: CoreGeometry,
    pub mapped_inputs: usize,
    pub mapped_outputs: usize,
    rows: Vec<Vec<u8>>,
}

fn encode_sign_magnitude(code: i32, bits: u32) -> u32 {
    let mag = code.unsigned_abs();
    (u32::from(code < 0) << (bits - 1)) | mag
}

fn decode_sign_magnitude(raw: u32, bits: u32) -> i32 {
    let mag = (raw & ((1u32 << (bits - 1)) - 1)) as i32;
    if raw >> (bits - 1) & 1 == 1 {
        -mag
    } else {
        mag
    }
}

impl CoreMemoryImage {
    pub fn zeroed(geometry: CoreGeometry, mapped_inputs: usize, mapped_outputs: usize) -> Self {
        CoreMemoryImage {
            geometry,
            mapped_inputs,
            mapped_outputs,
            rows: vec![vec![0u8; geometry.row_bytes()]; geometry.n_wordlines()],
        }
    }

    pub fn used_wordlines(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, address: usize) -> &[u8] {
        &self.rows[address]
    }

    fn write_field(&mut self, address: usize, output: usize, code: i32) {
        let bits = self.geometry.bits;
        let raw = encode_sign_magnitude(code, bits);
        let row = &mut self.rows[address];
        let start = output * bits as usize;
        for b in 0..bits as usize {
            let bit = (raw >> (bits as usize - 1 - b)) & 1;
            let col = start + b;
            let mask = 0x80u8 >> (col % 8);
            if bit == 1 {
                row[col / 8] |= mask;
            } else {
                row[col / 8] &= !mask;
            }
        }
    }

    /// Code of `output` stored on word line `address`.
    #[inline]
    pub fn read_field(&self, address: usize, output: usize) -> i32 {
        let bits = self.geometry.bits;
        let row = &self.rows[address];
        let start = output * bits as usize;
        if bits == 8 {
            return decode_sign_magnitude(u32::from(row[start / 8]), 8);
        }
        let mut raw = 0u32;
        for col in start..start + bits as usize {
            raw = (raw << 1) | u32::from((row[col / 8] >> (7 - col % 8)) & 1);
        }
        decode_sign_magnitude(raw, bits)
    }

    /// Raw binary export: little-endian header followed by every physical row,
    /// row-major, `ceil(word_width / 8)` bytes per row.
    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let g = &self.geometry;
        out.write_all(IMAGE_MAGIC)?;
        for v in [
            IMAGE_VERSION,
            g.n_inputs as u32,
            g.n_outputs as u32,
            g.window as u32,
            g.bits,
            self.mapped_inputs as u32,
            self.mapped_outputs as u32,
            g.n_wordlines() as u32,
            g.physical_rows() as u32,
            g.word_width() as u32,
        ] {
            out.write_all(&v.to_le_bytes())?;
        }
        for row in &self.rows {
            out.write_all(row)?;
        }
        let blank = vec![0u8; g.row_bytes()];
        for _ in self.rows.len()..g.physical_rows() {
            out.write_all(&blank)?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(std::io::BufWriter::new(file))
            .map_err(|e| Error::io(path, e))
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let bad = |position: usize, detail: &str| Error::Format {
            path: path.to_path_buf(),
            position,
            detail: detail.to_string(),
        };
        if bytes.len() < 44 || &bytes[..4] != IMAGE_MAGIC {
            return Err(bad(0, "not a memory image"));
        }
        let field = |n: usize| u32::from_le_bytes(bytes[4 + 4 * n..8 + 4 * n].try_into().expect("4 bytes"));
        if field(0) != IMAGE_VERSION {
            return Err(Error::Version {
                found: field(0),
                expected: IMAGE_VERSION,
            });
        }
        let geometry = CoreGeometry {
            n_inputs: field(1) as usize,
            n_outputs: field(2) as usize,
            window: field(3) as usize,
            bits: field(4),
        };
        if geometry.bits == 0 || geometry.window == 0 {
            return Err(bad(16, "bad geometry"));
        }
        let mut image = CoreMemoryImage::zeroed(geometry, field(5) as usize, field(6) as usize);
        let row_bytes = geometry.row_bytes();
        let expected = 44 + geometry.physical_rows() * row_bytes;
        if bytes.len() != expected {
            return Err(bad(bytes.len(), "image size does not match header"));
        }
        for (a, row) in image.rows.iter_mut().enumerate() {
            let start = 44 + a * row_bytes;
            row.copy_from_slice(&bytes[start..start + row_bytes]);
        }
        Ok(image)
    }
}

/// Places a quantized network into a core memory image.
pub fn map_model_to_memory(model: &QuantizedModel, geometry: CoreGeometry) -> Result<CoreMemoryImage> {
    if model.n_inputs > geometry.n_inputs || model.n_outputs > geometry.n_outputs {
        return Err(Error::Geometry(format!(
            "{}x{} network on a {}x{} core",
            model.n_inputs, model.n_outputs, geometry.n_inputs, geometry.n_outputs
        )));
    }
    if model.bits != geometry.bits || model.window() != geometry.window {
        return Err(Error::Geometry(format!(
            "model uses b={} tau={}, core b={} tau={}",
            model.bits,
            model.window(),
            geometry.bits,
            geometry.window
        )));
    }
    if !model.basis.is_identity() {
        return Err(Error::Geometry(
            "word-line mapping needs one weight per delay tap (identity basis)".into(),
        ));
    }
    if !(2..=16).contains(&geometry.bits) {
        return Err(Error::Geometry(format!("{}-bit synapses unsupported", geometry.bits)));
    }
    let mut image = CoreMemoryImage::zeroed(geometry, model.n_inputs, model.n_outputs);
    for j in 0..model.n_inputs {
        for d in 0..model.window() {
            let address = geometry.address(j, d);
            for i in 0..model.n_outputs {
                image.write_field(address, i, model.weight_code(j, i, d));
            }
        }
    }
    for i in 0..model.n_outputs {
        image.write_field(geometry.bias_line(), i, model.biases.codes[i]);
    }
    Ok(image)
}

/// Reads the codes back out: `(weights [j][i][d], biases [i])` over the
/// mapped region.
pub fn unpack_memory(image: &CoreMemoryImage) -> (Vec<i32>, Vec<i32>) {
    let g = &image.geometry;
    let mut weights = Vec::with_capacity(image.mapped_inputs * image.mapped_outputs * g.window);
    for j in 0..image.mapped_inputs {
        for i in 0..image.mapped_outputs {
            for d in 0..g.window {
                weights.push(image.read_field(g.address(j, d), i));
            }
        }
    }
    let biases = (0..image.mapped_outputs)
        .map(|i| image.read_field(g.bias_line(), i))
        .collect();
    (weights, biases)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::glm::{Basis, GlmModel};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_quantized(n_in: usize, n_out: usize, window: usize, bits: u32, seed: u64) -> QuantizedModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = GlmModel::zeros(n_in, n_out, 8, Basis::identity(window)).unwrap();
        m.weights.iter_mut().for_each(|w| *w = rng.gen_range(-1.0..1.0));
        m.biases.iter_mut().for_each(|b| *b = rng.gen_range(-4.0..2.0));
        QuantizedModel::from_model(&m, bits).unwrap()
    }

    #[test]
    fn standard_geometry_is_2048_square() {
        let g = CoreGeometry::standard(7, 8);
        assert_eq!(g.word_width(), 2048);
        assert_eq!(g.kernel_lines(), 1792);
        assert_eq!(g.n_wordlines(), 1793);
        assert_eq!(g.physical_rows(), 2048);
    }

    #[test]
    fn full_core_uses_1793_lines_of_2048_bits() {
        let q = random_quantized(256, 256, 7, 8, 1);
        let image = map_model_to_memory(&q, CoreGeometry::standard(7, 8)).unwrap();
        assert_eq!(image.used_wordlines(), 1793);
        assert!((0..image.used_wordlines()).all(|a| image.row(a).len() * 8 == 2048));
    }

    #[test]
    fn zero_model_gives_zero_image() {
        let m = GlmModel::zeros(10, 4, 8, Basis::identity(7)).unwrap();
        let q = QuantizedModel::from_model(&m, 8).unwrap();
        let image = map_model_to_memory(&q, CoreGeometry::standard(7, 8)).unwrap();
        assert!((0..image.used_wordlines()).all(|a| image.row(a).iter().all(|&b| b == 0)));
    }

    #[test]
    fn round_trip_for_every_width() {
        for bits in [2, 5, 6, 7, 8, 11] {
            let q = random_quantized(9, 5, 4, bits, u64::from(bits));
            let image = map_model_to_memory(&q, CoreGeometry::fitting(&q)).unwrap();
            let (w, b) = unpack_memory(&image);
            assert_eq!(w, q.weights.codes, "b = {bits}");
            assert_eq!(b, q.biases.codes);
        }
    }

    #[test]
    fn rejects_oversize_and_mismatch() {
        let q = random_quantized(300, 4, 7, 8, 2);
        assert!(matches!(
            map_model_to_memory(&q, CoreGeometry::standard(7, 8)),
            Err(Error::Geometry(_))
        ));
        let q = random_quantized(4, 4, 7, 5, 2);
        assert!(map_model_to_memory(&q, CoreGeometry::standard(7, 8)).is_err());
    }

    #[test]
    fn export_round_trip_and_size() {
        let q = random_quantized(20, 6, 7, 8, 3);
        let image = map_model_to_memory(&q, CoreGeometry::standard(7, 8)).unwrap();
        let mut bytes = Vec::new();
        image.write_to(&mut bytes).unwrap();
        assert_eq!(bytes.len(), 44 + 2048 * 256);
        let back = CoreMemoryImage::from_bytes(&bytes, Path::new("img")).unwrap();
        assert_eq!(back, image);
    }

    #[test]
    fn sign_magnitude_codec() {
        for bits in 2..=12 {
            let lim = (1 << (bits - 1)) - 1;
            for c in -lim..=lim {
                assert_eq!(decode_sign_magnitude(encode_sign_magnitude(c, bits), bits), c);
            }
        }
    }
}
