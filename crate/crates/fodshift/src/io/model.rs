//! Binary model files: "FODM" magic, u32 version, layer dims, dropout
//! and seed, then every weight matrix (row-major) and bias vector as a
//! little-endian f32 blob. Parameters are trained in f64 and stored in
//! f32; loading quantizes accordingly.

use std::path::Path;

use ndarray::{Array1, Array2};

use super::json::atomic_write;
use crate::estimator::EstimatorModel;
use crate::{Error, Result};

pub const MODEL_MAGIC: &[u8; 4] = b"FODM";
pub const MODEL_VERSION: u32 = 1;

fn parse_error(path: &Path, location: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        location: location.into(),
        message: message.into(),
    }
}

pub fn write_model(path: &Path, model: &EstimatorModel) -> Result<()> {
    model.validate()?;
    let mut bytes = Vec::new();
    bytes.extend_from_slice(MODEL_MAGIC);
    bytes.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(model.layer_dims.len() as u32).to_le_bytes());
    for &d in &model.layer_dims {
        bytes.extend_from_slice(&(d as u32).to_le_bytes());
    }
    bytes.extend_from_slice(&model.dropout_rate.to_le_bytes());
    bytes.extend_from_slice(&model.rng_seed.to_le_bytes());
    for l in 0..model.weights.len() {
        for &w in model.weights[l].iter() {
            bytes.extend_from_slice(&(w as f32).to_le_bytes());
        }
        for &b in model.biases[l].iter() {
            bytes.extend_from_slice(&(b as f32).to_le_bytes());
        }
    }
    atomic_write(path, &bytes)
}

pub fn read_model(path: &Path) -> Result<EstimatorModel> {
    let bytes = std::fs::read(path)?;
    if bytes.len() < 12 {
        return Err(parse_error(path, "offset 0", "file shorter than the header"));
    }
    if &bytes[0..4] != MODEL_MAGIC {
        return Err(parse_error(path, "offset 0", "bad magic, expected FODM"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != MODEL_VERSION {
        return Err(parse_error(
            path,
            "offset 4",
            format!("unsupported version {version}, expected {MODEL_VERSION}"),
        ));
    }
    let n_dims = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let fixed = 12 + 4 * n_dims + 8 + 8;
    if n_dims < 2 || bytes.len() < fixed {
        return Err(parse_error(path, "offset 8", "implausible layer count"));
    }
    let mut layer_dims = Vec::with_capacity(n_dims);
    for i in 0..n_dims {
        layer_dims
            .push(u32::from_le_bytes(bytes[12 + 4 * i..16 + 4 * i].try_into().unwrap()) as usize);
    }
    let off = 12 + 4 * n_dims;
    let dropout_rate = f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
    let rng_seed = u64::from_le_bytes(bytes[off + 8..off + 16].try_into().unwrap());

    let n_params: usize = (0..n_dims - 1)
        .map(|l| layer_dims[l + 1] * layer_dims[l] + layer_dims[l + 1])
        .sum();
    let want = fixed + 4 * n_params;
    if bytes.len() != want {
        return Err(parse_error(
            path,
            "payload",
            format!("expected {want} bytes total, found {}", bytes.len()),
        ));
    }

    let mut cursor = fixed;
    let mut next = || {
        let v = f32::from_le_bytes(bytes[cursor..cursor + 4].try_into().unwrap()) as f64;
        cursor += 4;
        v
    };
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for l in 0..n_dims - 1 {
        let (rows, cols) = (layer_dims[l + 1], layer_dims[l]);
        let w = Array2::from_shape_simple_fn((rows, cols), &mut next);
        let b = Array1::from_shape_simple_fn(rows, &mut next);
        weights.push(w);
        biases.push(b);
    }
    let model = EstimatorModel {
        layer_dims,
        weights,
        biases,
        dropout_rate,
        rng_seed,
    };
    model.validate()?;
    Ok(model)
}
