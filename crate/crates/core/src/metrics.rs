//! The ten-metric report card plus the seed-stability protocol.
//!
//! Dictionary metrics that need unit atoms (stability, max cosine, OOD,
//! coherence, negative interference) normalize rows internally and never
//! mutate their inputs, so archetypal dictionaries can be scored without a
//! separate normalization pass.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{dot, Matrix};
use crate::numerics::{linear_assignment, singular_values, Direction};
use crate::training::{train, DictKind, SaeModel, TrainConfig, Variant};

/// `R^2 = 1 - ||A - A_hat||_F^2 / ||A - A_bar||_F^2`, where `A_bar` repeats
/// the per-feature mean in every row.
pub fn r2(a: &Matrix, a_hat: &Matrix) -> Result<f64> {
    if a.rows() != a_hat.rows() || a.cols() != a_hat.cols() {
        return Err(Error::invalid("r2 requires equal shapes"));
    }
    let means = a.column_means();
    let mut denom = 0.0;
    for row in a.iter_rows() {
        for (&x, &m) in row.iter().zip(&means) {
            denom += (x - m) * (x - m);
        }
    }
    if denom == 0.0 {
        return Err(Error::UndefinedMetric(
            "r2 is undefined for constant data".into(),
        ));
    }
    let num = a.sub(a_hat)?.frob_norm_sq();
    Ok(1.0 - num / denom)
}

/// Fraction of concepts whose total activation mass is zero.
pub fn dead_codes(z: &Matrix) -> f64 {
    dead_codes_with_tolerance(z, 0.0)
}

/// Dead-code fraction with a configurable activation tolerance: a concept
/// counts as alive when its column L1 mass exceeds `tolerance`.
pub fn dead_codes_with_tolerance(z: &Matrix, tolerance: f64) -> f64 {
    let k = z.cols();
    if k == 0 {
        return 0.0;
    }
    let mut mass = vec![0.0; k];
    for row in z.iter_rows() {
        for (m, &v) in mass.iter_mut().zip(row) {
            *m += v.abs();
        }
    }
    let dead = mass.iter().filter(|&&m| m <= tolerance).count();
    dead as f64 / k as f64
}

/// Cosine similarity of two rows after normalization; zero rows score 0.
fn cosine_rows(a: &[f64], b: &[f64]) -> f64 {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot(a, b) / (na * nb)
}

/// Optimal mean cosine similarity under signed atom permutations: the
/// assignment on absolute cosines realizes the signed-permutation class,
/// since the optimal sign per matched pair is the sign of its inner product.
pub fn stability(d1: &Matrix, d2: &Matrix) -> Result<f64> {
    if d1.rows() != d2.rows() {
        return Err(Error::invalid(format!(
            "stability needs equal atom counts, got {} and {}",
            d1.rows(),
            d2.rows()
        )));
    }
    if d1.cols() != d2.cols() {
        return Err(Error::invalid("stability needs equal feature dimensions"));
    }
    let k = d1.rows();
    if k == 0 {
        return Err(Error::invalid("stability of empty dictionaries"));
    }
    let mut cost = Matrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            cost.set(i, j, cosine_rows(d1.row(i), d2.row(j)).abs());
        }
    }
    let assignment = linear_assignment(&cost, Direction::Maximize)?;
    Ok(assignment.value / k as f64)
}

/// Best single alignment across all atom pairs.
pub fn max_cosine(d1: &Matrix, d2: &Matrix) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for i in 0..d1.rows() {
        for j in 0..d2.rows() {
            best = best.max(cosine_rows(d1.row(i), d2.row(j)));
        }
    }
    best
}

/// Per-atom deviation from the reference data: `1 - max_j cos(D_i, A_j)`.
/// Zero-norm reference rows are skipped.
pub fn ood_per_atom(d: &Matrix, a_ref: &Matrix) -> Result<Vec<f64>> {
    if a_ref.rows() == 0 {
        return Err(Error::invalid("ood_score needs a non-empty reference"));
    }
    let valid: Vec<usize> = (0..a_ref.rows())
        .filter(|&i| dot(a_ref.row(i), a_ref.row(i)) > 0.0)
        .collect();
    if valid.is_empty() {
        return Err(Error::invalid(
            "ood_score reference has no nonzero rows",
        ));
    }
    let mut per_atom = Vec::with_capacity(d.rows());
    for i in 0..d.rows() {
        let mut best = f64::NEG_INFINITY;
        for &j in &valid {
            best = best.max(cosine_rows(d.row(i), a_ref.row(j)));
        }
        per_atom.push(1.0 - best);
    }
    Ok(per_atom)
}

/// Mean per-atom OOD: 0 when every atom coincides with a data row.
pub fn ood_score(d: &Matrix, a_ref: &Matrix) -> Result<f64> {
    let per_atom = ood_per_atom(d, a_ref)?;
    Ok(per_atom.iter().sum::<f64>() / per_atom.len() as f64)
}

/// `||D||_F^2 / ||D||_2^2`.
pub fn stable_rank(d: &Matrix) -> Result<f64> {
    let frob_sq = d.frob_norm_sq();
    if frob_sq == 0.0 {
        return Err(Error::UndefinedMetric(
            "stable rank of the zero matrix".into(),
        ));
    }
    let top = singular_values(d)?[0];
    Ok(frob_sq / (top * top))
}

/// Exponentiated entropy of the normalized singular values; zero values
/// contribute nothing to the entropy sum.
pub fn effective_rank(d: &Matrix) -> Result<f64> {
    let values = singular_values(d)?;
    let total: f64 = values.iter().sum();
    if total == 0.0 {
        return Err(Error::UndefinedMetric(
            "effective rank of the zero matrix".into(),
        ));
    }
    let mut entropy = 0.0;
    for &v in &values {
        let p = v / total;
        if p > 0.0 {
            entropy -= p * p.ln();
        }
    }
    Ok(entropy.exp())
}

/// Maximum absolute pairwise cosine between distinct atoms.
pub fn coherence(d: &Matrix) -> Result<f64> {
    if d.rows() < 2 {
        return Err(Error::UndefinedMetric(
            "coherence needs at least two atoms".into(),
        ));
    }
    let unit = d.normalize_rows();
    let mut best: f64 = 0.0;
    for i in 0..unit.rows() {
        for j in (i + 1)..unit.rows() {
            best = best.max(dot(unit.row(i), unit.row(j)).abs());
        }
    }
    Ok(best)
}

/// `1 - nnz(Z^T Z) / k^2`: the fraction of concept pairs that never co-fire.
pub fn connectivity(z: &Matrix) -> f64 {
    let k = z.cols();
    if k == 0 {
        return 0.0;
    }
    let gram = z.matmul_at(z).expect("Z^T Z shapes always agree");
    let nnz = gram.data().iter().filter(|&&v| v != 0.0).count();
    1.0 - nnz as f64 / (k * k) as f64
}

/// Frobenius norm of `ReLU(-(Z^T Z) elementwise (D D^T))` with unit atoms:
/// mass of co-firing concept pairs whose atoms point against each other.
pub fn negative_interference(z: &Matrix, d: &Matrix) -> Result<f64> {
    if z.cols() != d.rows() {
        return Err(Error::invalid(format!(
            "codes have {} concepts but dictionary has {} atoms",
            z.cols(),
            d.rows()
        )));
    }
    let gram_z = z.matmul_at(z)?;
    let unit = d.normalize_rows();
    let gram_d = unit.matmul_bt(&unit)?;
    let mut sum_sq = 0.0;
    for (&cz, &cd) in gram_z.data().iter().zip(gram_d.data()) {
        let v = (-(cz * cd)).max(0.0);
        sum_sq += v * v;
    }
    Ok(sum_sq.sqrt())
}

/// The full report card for one trained model on one dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub r2: f64,
    pub dead_codes: f64,
    /// Mean pairwise stability; absent for single-run reports.
    pub stability: Option<f64>,
    /// Best cross-run atom alignment; absent for single-run reports.
    pub max_cosine: Option<f64>,
    pub ood_score: f64,
    pub stable_rank: f64,
    pub effective_rank: f64,
    pub coherence: f64,
    pub connectivity: f64,
    pub negative_interference: f64,
    pub seed: u64,
    pub variant: String,
    pub k: usize,
    pub sparsity: f64,
}

pub fn variant_name(variant: Variant) -> &'static str {
    match variant {
        Variant::Vanilla => "vanilla",
        Variant::TopK => "topk",
        Variant::Jump => "jump",
    }
}

/// Score a model against standardized activations.
pub fn compute_report(a_std: &Matrix, model: &SaeModel, seed: u64) -> Result<MetricsReport> {
    let codes = model.encode(a_std)?;
    let z = codes.matrix();
    let atoms = model.atoms();
    let recon = z.matmul(&atoms)?;
    Ok(MetricsReport {
        r2: r2(a_std, &recon)?,
        dead_codes: dead_codes(z),
        stability: None,
        max_cosine: None,
        ood_score: ood_score(&atoms, a_std)?,
        stable_rank: stable_rank(&atoms)?,
        effective_rank: effective_rank(&atoms)?,
        coherence: coherence(&atoms)?,
        connectivity: connectivity(z),
        negative_interference: negative_interference(z, &atoms)?,
        seed,
        variant: variant_name(model.variant()).to_string(),
        k: atoms.rows(),
        sparsity: codes.mean_l0(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct PairStability {
    pub seed_a: u64,
    pub seed_b: u64,
    pub stability: f64,
}

#[derive(Debug)]
pub struct StabilityOutcome {
    pub pairs: Vec<PairStability>,
    pub mean_stability: f64,
    pub models: Vec<SaeModel>,
}

/// Train one model per seed on the same data and report the mean pairwise
/// stability of their dictionaries.
pub fn stability_protocol(
    a: &Matrix,
    config: &TrainConfig,
    variant: Variant,
    dict_kind: &DictKind,
    seeds: &[u64],
) -> Result<StabilityOutcome> {
    if seeds.len() < 2 {
        return Err(Error::invalid("stability protocol needs at least 2 seeds"));
    }
    let mut models = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let mut cfg = config.clone();
        cfg.seed = seed;
        let out = train(a, &cfg, variant, dict_kind.clone())?;
        models.push(out.model);
    }
    let atoms: Vec<Matrix> = models.iter().map(SaeModel::atoms).collect();
    let mut pairs = Vec::new();
    let mut total = 0.0;
    for i in 0..models.len() {
        for j in (i + 1)..models.len() {
            let value = stability(&atoms[i], &atoms[j])?;
            total += value;
            pairs.push(PairStability {
                seed_a: seeds[i],
                seed_b: seeds[j],
                stability: value,
            });
        }
    }
    let mean_stability = total / pairs.len() as f64;
    Ok(StabilityOutcome {
        pairs,
        mean_stability,
        models,
    })
}
