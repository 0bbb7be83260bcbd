//! Run configuration: one JSON document per experiment, schema-validated
//! before any compute. Unknown keys are rejected everywhere.

use std::path::PathBuf;

use serde::Deserialize;

use adl_core::benchmarks::Method;
use adl_core::distill::DistillConfig;
use adl_core::training::{DictKind, TrainConfig, Variant};
use adl_core::{Error, Matrix, Result};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Input activation matrix (`.adlm`, or `.csv` for imported data).
    pub data: Option<PathBuf>,
    /// Pre-distilled candidate archetypes for archetypal runs.
    pub candidates: Option<PathBuf>,
    /// Saved model bundle directory (metrics command).
    pub model: Option<PathBuf>,
    /// Output directory; the `--out` flag overrides it.
    pub out_dir: Option<PathBuf>,
    pub train: Option<TrainSection>,
    pub distill: Option<DistillConfig>,
    pub stability: Option<StabilitySection>,
    pub bench: Option<BenchSection>,
    pub gen: Option<GenSection>,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum DictKindName {
    Free,
    Archetypal,
}

/// Training parameters plus variant and dictionary kind. Every numeric
/// field is optional and falls back to the library default.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub variant: Variant,
    pub dict_kind: DictKindName,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub epsilon: Option<f64>,
    pub l1_coeff: Option<f64>,
    pub l0_coeff: Option<f64>,
    pub top_k: Option<usize>,
    pub delta: Option<f64>,
    pub seed: Option<u64>,
    pub overcomplete_factor: Option<f64>,
    pub dict_size: Option<usize>,
    pub jump_bandwidth: Option<f64>,
}

impl TrainSection {
    pub fn to_config(&self) -> TrainConfig {
        let mut cfg = TrainConfig::default();
        if let Some(v) = self.epochs {
            cfg.epochs = v;
        }
        if let Some(v) = self.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = self.learning_rate {
            cfg.learning_rate = v;
        }
        if let Some(v) = self.beta1 {
            cfg.beta1 = v;
        }
        if let Some(v) = self.beta2 {
            cfg.beta2 = v;
        }
        if let Some(v) = self.epsilon {
            cfg.epsilon = v;
        }
        if let Some(v) = self.l1_coeff {
            cfg.l1_coeff = v;
        }
        if let Some(v) = self.l0_coeff {
            cfg.l0_coeff = v;
        }
        if let Some(v) = self.top_k {
            cfg.top_k = v;
        }
        if let Some(v) = self.delta {
            cfg.delta = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.overcomplete_factor {
            cfg.overcomplete_factor = v;
        }
        cfg.dict_size = self.dict_size;
        if let Some(v) = self.jump_bandwidth {
            cfg.jump_bandwidth = v;
        }
        cfg
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilitySection {
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum BenchKind {
    Plausibility,
    Identifiability,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSection {
    pub kind: BenchKind,
    pub c: usize,
    pub d: usize,
    pub n: usize,
    /// Identifiability: objects collaged per sample.
    pub objects_per_image: Option<usize>,
    /// Plausibility: mixture support per sample.
    pub sparsity: Option<usize>,
    pub noise_std: f64,
    pub data_seed: u64,
    pub methods: Vec<Method>,
    /// Plausibility: dictionary sizes to sweep.
    pub dict_sizes: Option<Vec<usize>>,
    pub rasae_delta: Option<f64>,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum GenKind {
    Planted,
    Identifiability,
    Plausibility,
}

/// Synthetic dataset writer parameters.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenSection {
    pub kind: GenKind,
    pub c: usize,
    pub d: usize,
    pub n: usize,
    pub support: Option<usize>,
    pub objects_per_image: Option<usize>,
    pub noise_std: f64,
    pub seed: u64,
    #[serde(default)]
    pub paired: bool,
}

pub fn load_config(path: &std::path::Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidInput(format!("cannot read config {path:?}: {e}")))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::InvalidInput(format!("config schema error: {e}")))
}

/// Load a matrix by extension: `.csv` for imported text, ADLM otherwise.
pub fn load_matrix(path: &std::path::Path) -> Result<Matrix> {
    if path.extension().is_some_and(|e| e == "csv") {
        adl_core::io::read_csv_matrix(path)
    } else {
        adl_core::io::read_adlm(path)
    }
}

/// Resolve the dictionary kind, loading or distilling candidates as needed.
pub fn resolve_dict_kind(
    config: &RunConfig,
    section: &TrainSection,
    a: &Matrix,
) -> Result<DictKind> {
    match section.dict_kind {
        DictKindName::Free => Ok(DictKind::Free),
        DictKindName::Archetypal => {
            let candidates = if let Some(path) = &config.candidates {
                adl_core::io::read_adlm(path)?
            } else {
                let dcfg = config.distill.clone().unwrap_or_default();
                adl_core::distill::distill(a, &dcfg)?
            };
            Ok(DictKind::Archetypal { candidates })
        }
    }
}
