//! Weights file format.
//!
//! ```text
//! {"version":1,"config":{...},"tensors":{"name":{"shape":[...],"data":[...]}}}
//! ```
//!
//! Values are written in scientific notation with 17 significant digits, which
//! round-trips every finite `f64` exactly. Tensors appear in canonical order.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::model::{SanConfig, SanWeights};

pub const FORMAT_VERSION: u64 = 1;

/// 17 significant digits, JSON-compatible.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn weights_to_json(w: &SanWeights) -> String {
    let mut out = String::new();
    let config = serde_json::to_string(&w.config).expect("config serializes");
    write!(out, "{{\"version\":{FORMAT_VERSION},\"config\":{config},\"tensors\":{{").unwrap();
    for (k, t) in w.tensors().into_iter().enumerate() {
        if k > 0 {
            out.push(',');
        }
        let shape: Vec<String> = t.shape.iter().map(ToString::to_string).collect();
        write!(out, "\n\"{}\":{{\"shape\":[{}],\"data\":[", t.name, shape.join(",")).unwrap();
        for (i, v) in t.data.enumerate() {
            if i > 0 {
                out.push(',');
            }
            out.push_str(&format_f64(v));
        }
        out.push_str("]}");
    }
    out.push_str("\n}}\n");
    out
}

#[derive(Deserialize)]
struct TensorRecord {
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Deserialize)]
struct WeightsFile {
    version: u64,
    config: SanConfig,
    tensors: BTreeMap<String, TensorRecord>,
}

pub fn weights_from_json(text: &str) -> Result<SanWeights> {
    let file: WeightsFile = serde_json::from_str(text).map_err(|e| Error::Schema(format!("weights file: {e}")))?;
    if file.version != FORMAT_VERSION {
        return Err(Error::Schema(format!(
            "weights file version {} (expected {FORMAT_VERSION})",
            file.version
        )));
    }
    let expected = SanWeights::expected_shapes(&file.config);
    if expected.len() != file.tensors.len() {
        return Err(Error::Schema(format!(
            "expected {} tensors, found {}",
            expected.len(),
            file.tensors.len()
        )));
    }
    let mut tensors = file.tensors;
    SanWeights::from_flat(file.config, |name, shape| {
        let rec = tensors
            .remove(name)
            .ok_or_else(|| Error::Schema(format!("missing tensor {name}")))?;
        if rec.shape != shape {
            return Err(Error::Schema(format!(
                "tensor {name}: shape {:?}, expected {shape:?}",
                rec.shape
            )));
        }
        if rec.data.len() != shape.iter().product::<usize>() {
            return Err(Error::Schema(format!(
                "tensor {name}: {} values for shape {shape:?}",
                rec.data.len()
            )));
        }
        Ok(rec.data)
    })
}

pub fn save_weights(w: &SanWeights, path: &Path) -> Result<()> {
    std::fs::write(path, weights_to_json(w))?;
    Ok(())
}

pub fn load_weights(path: &Path) -> Result<SanWeights> {
    let text = std::fs::read_to_string(path)?;
    weights_from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_weights, SanConfig};

    fn small() -> SanWeights {
        init_weights(&SanConfig {
            layers: 2,
            dim: 8,
            heads: 2,
            seed: 42,
            ..SanConfig::toy()
        })
        .unwrap()
    }

    #[test]
    fn round_trip_is_bitwise() {
        let w = small();
        let back = weights_from_json(&weights_to_json(&w)).unwrap();
        assert_eq!(back, w);
        assert_eq!(back.checksum(), w.checksum());
    }

    #[test]
    fn round_trip_through_file() {
        let w = small();
        let dir = std::env::temp_dir().join(format!("gtspectra-weights-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("w.json");
        save_weights(&w, &path).unwrap();
        assert_eq!(load_weights(&path).unwrap(), w);
        std::fs::remove_dir_all(&dir).unwrap();
        assert_eq!(load_weights(&path).unwrap_err().code(), "E_IO");
    }

    #[test]
    fn extreme_values_survive() {
        for v in [f64::MIN_POSITIVE, 5e-324, f64::MAX, -0.1, 1.0 / 3.0, 0.0, -0.0] {
            let parsed: f64 = format_f64(v).parse().unwrap();
            assert_eq!(parsed.to_bits(), v.to_bits(), "{v}");
        }
    }

    #[test]
    fn truncated_file_is_schema_error() {
        let text = weights_to_json(&small());
        let cut = &text[..text.len() / 2];
        assert_eq!(weights_from_json(cut).unwrap_err().code(), "E_SCHEMA");
    }

    #[test]
    fn version_mismatch_is_schema_error() {
        let text = weights_to_json(&small()).replacen("\"version\":1", "\"version\":2", 1);
        assert_eq!(weights_from_json(&text).unwrap_err().code(), "E_SCHEMA");
    }

    #[test]
    fn shape_mismatch_is_schema_error() {
        let text = weights_to_json(&small()).replacen("\"shape\":[8]", "\"shape\":[4,2]", 1);
        assert_eq!(weights_from_json(&text).unwrap_err().code(), "E_SCHEMA");
    }
}
