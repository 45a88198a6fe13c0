//! Binary model files.
//!
//! Layout (little endian): magic, `u16` version, seven `u32` architecture
//! fields (input_len, conv_filters, kernel_size, pool_size, dropout in parts
//! per million, dense_units, n_classes), then every weight as `f64` in
//! [`ModelWeights::tensors`] order, then an FNV-1a 64 checksum of all
//! preceding bytes.

use std::path::Path;

use super::{Architecture, ModelWeights, Network, TrainedModel};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"FDX1";
pub const FORMAT_VERSION: u16 = 1;

const HEADER_LEN: usize = 4 + 2 + 7 * 4;

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn model_to_bytes(model: &TrainedModel) -> Vec<u8> {
    let arch = &model.network.arch;
    let weights = &model.network.weights;
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * weights.param_count() + 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    let dropout_ppm = (arch.dropout_rate * 1e6).round() as u32;
    for v in [
        arch.input_len as u32,
        arch.conv_filters as u32,
        arch.kernel_size as u32,
        arch.pool_size as u32,
        dropout_ppm,
        arch.dense_units as u32,
        arch.n_classes as u32,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for t in weights.tensors() {
        for v in t {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let sum = fnv1a(&out);
    out.extend_from_slice(&sum.to_le_bytes());
    out
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<TrainedModel> {
    if bytes.len() < HEADER_LEN + 8 {
        return Err(Error::ModelFormat(format!("file too short ({} bytes)", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::ModelFormat("bad magic, not a model file".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != FORMAT_VERSION {
        return Err(Error::ModelFormat(format!(
            "unsupported format version {version} (expected {FORMAT_VERSION})"
        )));
    }
    let field = |i: usize| {
        let at = 6 + 4 * i;
        u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize
    };
    let arch = Architecture {
        input_len: field(0),
        conv_filters: field(1),
        kernel_size: field(2),
        pool_size: field(3),
        dropout_rate: field(4) as f64 / 1e6,
        dense_units: field(5),
        n_classes: field(6),
    };
    if arch.input_len < arch.kernel_size || arch.pool_size == 0 {
        return Err(Error::ModelFormat("inconsistent architecture header".into()));
    }
    let mut weights = ModelWeights::zeros(&arch);
    let expected = HEADER_LEN + 8 * weights.param_count() + 8;
    if bytes.len() != expected {
        return Err(Error::ModelFormat(format!(
            "size mismatch: header implies {expected} bytes, file has {}",
            bytes.len()
        )));
    }
    let body_end = expected - 8;
    let stored = u64::from_le_bytes(bytes[body_end..].try_into().unwrap());
    if fnv1a(&bytes[..body_end]) != stored {
        return Err(Error::ModelFormat("checksum mismatch, file is corrupted".into()));
    }
    let mut at = HEADER_LEN;
    for t in weights.tensors_mut() {
        for v in t.iter_mut() {
            *v = f64::from_le_bytes(bytes[at..at + 8].try_into().unwrap());
            at += 8;
        }
    }
    let network = Network::new(arch, weights).map_err(|e| Error::ModelFormat(e.to_string()))?;
    Ok(TrainedModel::from_network(network))
}

pub fn save_model(model: &TrainedModel, path: &Path) -> Result<()> {
    std::fs::write(path, model_to_bytes(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<TrainedModel> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    model_from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model() -> TrainedModel {
        let mut arch = Architecture::new(40);
        arch.conv_filters = 3;
        arch.dense_units = 5;
        arch.pool_size = 3;
        TrainedModel::from_network(Network::init(arch, &mut ChaCha8Rng::seed_from_u64(11)).unwrap())
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let m = model();
        let bytes = model_to_bytes(&m);
        let back = model_from_bytes(&bytes).unwrap();
        assert_eq!(back.network, m.network);
        assert_eq!(model_to_bytes(&back), bytes);
    }

    #[test]
    fn file_round_trip_keeps_predictions() {
        let m = model();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        save_model(&m, &path).unwrap();
        let back = load_model(&path).unwrap();
        let x: Vec<f64> = (0..40).map(|i| (i as f64).sin()).collect();
        assert_eq!(m.network.forward(&x).unwrap().0, back.network.forward(&x).unwrap().0);
    }

    #[test]
    fn corrupted_magic_is_rejected() {
        let mut bytes = model_to_bytes(&model());
        bytes[0] = b'X';
        assert!(matches!(model_from_bytes(&bytes), Err(Error::ModelFormat(m)) if m.contains("magic")));
    }

    #[test]
    fn wrong_class_count_is_rejected() {
        let mut bytes = model_to_bytes(&model());
        bytes[6 + 24..6 + 28].copy_from_slice(&6u32.to_le_bytes());
        assert!(matches!(model_from_bytes(&bytes), Err(Error::ModelFormat(_))));
    }

    #[test]
    fn truncation_and_bit_flips_are_rejected() {
        let bytes = model_to_bytes(&model());
        assert!(model_from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut flipped = bytes.clone();
        flipped[HEADER_LEN + 3] ^= 0x10;
        assert!(matches!(model_from_bytes(&flipped), Err(Error::ModelFormat(m)) if m.contains("checksum")));
        let mut version = bytes;
        version[4] = 9;
        assert!(matches!(model_from_bytes(&version), Err(Error::ModelFormat(m)) if m.contains("version")));
    }
}
