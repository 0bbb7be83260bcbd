//! File formats: the ADLM binary matrix container, model bundles, CSV
//! import/export, and content digests.
//!
//! ADLM layout (all integers little-endian):
//!
//! ```text
//! magic   4 bytes  "ADLM"
//! version u16      1
//! rows    u64
//! cols    u64
//! dtype   u8       0 = f32, 1 = f64
//! payload rows * cols values, row-major, little-endian
//! ```
//!
//! Readers reject trailing bytes, short payloads, and non-finite values.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dictionaries::{ArchetypalDictionary, Dictionary, FreeDictionary};
use crate::encoders::{EncoderParams, Nonlinearity};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::training::{CurvePoint, Penalties, SaeModel, Standardizer};

const MAGIC: &[u8; 4] = b"ADLM";
const VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32,
    F64,
}

pub fn write_adlm_bytes(m: &Matrix, dtype: Dtype) -> Vec<u8> {
    let value_size = match dtype {
        Dtype::F32 => 4,
        Dtype::F64 => 8,
    };
    let mut out = Vec::with_capacity(23 + m.data().len() * value_size);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(m.rows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u64).to_le_bytes());
    out.push(match dtype {
        Dtype::F32 => 0,
        Dtype::F64 => 1,
    });
    match dtype {
        Dtype::F32 => {
            for &v in m.data() {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        Dtype::F64 => {
            for &v in m.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}

pub fn read_adlm_bytes(bytes: &[u8]) -> Result<Matrix> {
    if bytes.len() < 23 {
        return Err(Error::Format("truncated ADLM header".into()));
    }
    if &bytes[0..4] != MAGIC {
        return Err(Error::Format("bad magic, not an ADLM file".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported ADLM version {version}")));
    }
    let rows = u64::from_le_bytes(bytes[6..14].try_into().unwrap()) as usize;
    let cols = u64::from_le_bytes(bytes[14..22].try_into().unwrap()) as usize;
    let dtype = match bytes[22] {
        0 => Dtype::F32,
        1 => Dtype::F64,
        other => return Err(Error::Format(format!("unknown dtype tag {other}"))),
    };
    let value_size = match dtype {
        Dtype::F32 => 4,
        Dtype::F64 => 8,
    };
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(value_size))
        .ok_or_else(|| Error::Format("ADLM dimensions overflow".into()))?;
    let payload = &bytes[23..];
    if payload.len() != expected {
        return Err(Error::Format(format!(
            "payload holds {} bytes but header promises {expected}",
            payload.len()
        )));
    }
    let mut data = Vec::with_capacity(rows * cols);
    match dtype {
        Dtype::F32 => {
            for chunk in payload.chunks_exact(4) {
                data.push(f32::from_le_bytes(chunk.try_into().unwrap()) as f64);
            }
        }
        Dtype::F64 => {
            for chunk in payload.chunks_exact(8) {
                data.push(f64::from_le_bytes(chunk.try_into().unwrap()));
            }
        }
    }
    Matrix::from_vec(rows, cols, data)
        .map_err(|_| Error::Format("ADLM payload contains non-finite values".into()))
}

pub fn write_adlm(path: &Path, m: &Matrix, dtype: Dtype) -> Result<()> {
    fs::write(path, write_adlm_bytes(m, dtype))?;
    Ok(())
}

pub fn read_adlm(path: &Path) -> Result<Matrix> {
    let bytes = fs::read(path)?;
    read_adlm_bytes(&bytes)
}

/// Hex SHA-256 of a file's bytes, for sidecar provenance fields.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Plain numeric CSV (no header): one row per line, comma-separated floats.
pub fn read_csv_matrix(path: &Path) -> Result<Matrix> {
    let text = fs::read_to_string(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row: std::result::Result<Vec<f64>, _> =
            line.split(',').map(|v| v.trim().parse::<f64>()).collect();
        let row = row.map_err(|e| {
            Error::Format(format!("csv line {}: {e}", lineno + 1))
        })?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Format("csv file holds no rows".into()));
    }
    Matrix::from_rows(&rows)
}

pub fn write_training_curve_csv(path: &Path, curve: &[CurvePoint]) -> Result<()> {
    let mut out = String::from("step,loss,r2_batch,l0_mean\n");
    for p in curve {
        out.push_str(&format!(
            "{},{},{},{}\n",
            p.step, p.loss, p.r2_batch, p.l0_mean
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Model bundles: a JSON sidecar plus one ADLM file per large matrix.
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelSidecar {
    format: String,
    version: u32,
    parameterization: String,
    variant: String,
    k: usize,
    d: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    delta: Option<f64>,
    nonlinearity: Nonlinearity,
    bias: Vec<f64>,
    standardizer: Standardizer,
    penalties: Penalties,
    matrices: Vec<String>,
}

/// Write an SAE model bundle into `dir` (`model.json` + `*.adlm`).
pub fn save_model(dir: &Path, model: &SaeModel) -> Result<()> {
    fs::create_dir_all(dir)?;
    let (parameterization, delta, matrices): (&str, Option<f64>, Vec<(&str, Matrix)>) =
        match &model.dictionary {
            Dictionary::Free(free) => (
                "free",
                None,
                vec![
                    ("w_enc", model.encoder.w_enc.clone()),
                    ("atoms", free.atoms.clone()),
                ],
            ),
            Dictionary::Archetypal(arch) => (
                "archetypal",
                Some(arch.delta),
                vec![
                    ("w_enc", model.encoder.w_enc.clone()),
                    ("weights", arch.weights.clone()),
                    ("candidates", arch.candidates().clone()),
                    ("relaxation", arch.relaxation.clone()),
                ],
            ),
        };
    let sidecar = ModelSidecar {
        format: "adl-model".into(),
        version: 1,
        parameterization: parameterization.into(),
        variant: crate::metrics::variant_name(model.variant()).into(),
        k: model.dictionary.num_atoms(),
        d: model.encoder.w_enc.rows(),
        delta,
        nonlinearity: model.encoder.nonlinearity.clone(),
        bias: model.encoder.bias.clone(),
        standardizer: model.standardizer.clone(),
        penalties: model.penalties,
        matrices: matrices.iter().map(|(n, _)| format!("{n}.adlm")).collect(),
    };
    fs::write(
        dir.join("model.json"),
        serde_json::to_string_pretty(&sidecar)
            .map_err(|e| Error::Format(e.to_string()))?,
    )?;
    for (name, matrix) in &matrices {
        write_adlm(&dir.join(format!("{name}.adlm")), matrix, Dtype::F64)?;
    }
    Ok(())
}

/// Load a model bundle written by [`save_model`].
pub fn load_model(dir: &Path) -> Result<SaeModel> {
    let sidecar: ModelSidecar = serde_json::from_str(
        &fs::read_to_string(dir.join("model.json"))?,
    )
    .map_err(|e| Error::Format(format!("model.json: {e}")))?;
    if sidecar.format != "adl-model" || sidecar.version != 1 {
        return Err(Error::Format("not an adl-model bundle".into()));
    }
    let load = |name: &str| -> Result<Matrix> { read_adlm(&dir.join(format!("{name}.adlm"))) };
    let w_enc = load("w_enc")?;
    let encoder = EncoderParams::new(w_enc, sidecar.bias.clone(), sidecar.nonlinearity.clone())?;
    let dictionary = match sidecar.parameterization.as_str() {
        "free" => Dictionary::Free(FreeDictionary::new(load("atoms")?)?),
        "archetypal" => Dictionary::Archetypal(ArchetypalDictionary::from_parts(
            load("weights")?,
            load("candidates")?,
            load("relaxation")?,
            sidecar.delta.unwrap_or(0.0),
        )?),
        other => {
            return Err(Error::Format(format!(
                "unknown parameterization {other:?}"
            )))
        }
    };
    Ok(SaeModel {
        encoder,
        dictionary,
        standardizer: sidecar.standardizer,
        penalties: sidecar.penalties,
    })
}

/// Sidecar describing a distilled candidate matrix.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CandidatesSidecar {
    pub n_prime: usize,
    pub seed: u64,
    pub source_digest: String,
}

pub fn save_candidates(dir: &Path, c: &Matrix, sidecar: &CandidatesSidecar) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join("candidates.adlm");
    write_adlm(&path, c, Dtype::F64)?;
    fs::write(
        dir.join("candidates.json"),
        serde_json::to_string_pretty(sidecar).map_err(|e| Error::Format(e.to_string()))?,
    )?;
    Ok(path)
}
