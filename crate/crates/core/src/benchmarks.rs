//! Synthetic benchmarks: plausibility and soft identifiability.
//!
//! Both generate activation-like data from known ground-truth directions and
//! score how well a learned dictionary recovers them. The identifiability
//! surrogate mimics pooled activations of multi-object collages: each sample
//! is the mean of a few prototype embeddings with positive gains plus noise.

use serde::{Deserialize, Serialize};

use crate::baselines::{fit_convexnmf, fit_kmeans_coding, fit_pca, fit_seminmf};
use crate::distill::{distill_standardized, DistillConfig};
use crate::error::{Error, Result};
use crate::matrix::{dot, Matrix};
use crate::rng::Rng;
use crate::training::{
    standardize_fit, train_standardized, DictKind, SaeModel, TrainConfig, Variant,
};

#[derive(Debug, Clone)]
pub struct IdentifiabilityDataset {
    /// Surrogate pooled activations, `n x d`.
    pub x: Matrix,
    /// Multi-hot object labels, `n x c` with exactly `objects_per_image`
    /// ones per row.
    pub y: Matrix,
    /// Ground-truth object directions, unit rows, `c x d`.
    pub prototypes: Matrix,
    pub objects_per_image: usize,
}

#[derive(Debug, Clone)]
pub struct PlausibilityGroundTruth {
    /// Classifier-head directions, unit rows, `c x d`.
    pub directions: Matrix,
}

/// Random unit rows, pairwise decorrelated by Gram-Schmidt (requires
/// `c <= d`).
fn orthonormal_rows(c: usize, d: usize, rng: &mut Rng) -> Result<Matrix> {
    if c > d {
        return Err(Error::invalid(format!(
            "cannot decorrelate {c} directions in {d} dimensions"
        )));
    }
    let mut rows = Matrix::zeros(c, d);
    for i in 0..c {
        loop {
            let mut candidate: Vec<f64> = (0..d).map(|_| rng.normal(0.0, 1.0)).collect();
            for p in 0..i {
                let proj = dot(&candidate, rows.row(p));
                for (v, &b) in candidate.iter_mut().zip(rows.row(p)) {
                    *v -= proj * b;
                }
            }
            let norm = dot(&candidate, &candidate).sqrt();
            if norm > 1e-8 {
                for v in candidate.iter_mut() {
                    *v /= norm;
                }
                rows.row_mut(i).copy_from_slice(&candidate);
                break;
            }
        }
    }
    Ok(rows)
}

/// Generate the soft-identifiability dataset: collages of
/// `objects_per_image` distinct objects out of `c` (the paper's datasets use
/// 9 to 20 objects, which this enforces), averaged with positive per-object
/// gains in `[0.5, 1.5]` and Gaussian noise.
pub fn gen_identifiability(
    c: usize,
    d: usize,
    n: usize,
    objects_per_image: usize,
    noise_std: f64,
    rng: &mut Rng,
) -> Result<IdentifiabilityDataset> {
    if !(9..=20).contains(&c) {
        return Err(Error::invalid(format!(
            "object count must be between 9 and 20, got {c}"
        )));
    }
    if objects_per_image == 0 || objects_per_image > c {
        return Err(Error::invalid(
            "objects_per_image must be between 1 and the object count",
        ));
    }
    if noise_std < 0.0 {
        return Err(Error::invalid("noise_std must be nonnegative"));
    }
    let prototypes = orthonormal_rows(c, d, rng)?;
    let mut x = Matrix::zeros(n, d);
    let mut y = Matrix::zeros(n, c);
    let inv_m = 1.0 / objects_per_image as f64;
    for i in 0..n {
        let chosen = rng.distinct_indices(c, objects_per_image);
        for &obj in &chosen {
            y.set(i, obj, 1.0);
            let gain = rng.uniform_in(0.5, 1.5);
            for (v, &p) in x.row_mut(i).iter_mut().zip(prototypes.row(obj)) {
                *v += gain * p * inv_m;
            }
        }
        if noise_std > 0.0 {
            for v in x.row_mut(i) {
                *v += rng.normal(0.0, noise_std);
            }
        }
    }
    Ok(IdentifiabilityDataset {
        x,
        y,
        prototypes,
        objects_per_image,
    })
}

/// Per-class identifiability accuracy plus the mean over classes.
///
/// The first half of the rows fits one threshold grid per concept (its 1st
/// through 100th empirical percentiles plus an always-negative fallback);
/// the second half is the held-out evaluation split. For each class the best
/// `(concept, threshold)` pair wins:
/// `accuracy_j = max_{i, lambda} P((z_i > lambda) = y_j)` on the held-out
/// split.
pub fn identifiability_accuracy(z: &Matrix, y: &Matrix) -> Result<(Vec<f64>, f64)> {
    if z.rows() != y.rows() {
        return Err(Error::invalid("codes and labels need equal row counts"));
    }
    let n = z.rows();
    if n < 4 {
        return Err(Error::invalid("need at least 4 samples to split 50/50"));
    }
    let n_train = n / 2;
    let n_test = n - n_train;
    let k = z.cols();
    let c = y.cols();

    for j in 0..c {
        let positives = (n_train..n).filter(|&i| y.get(i, j) != 0.0).count();
        if positives == 0 || positives == n_test {
            return Err(Error::UndefinedClass { class: j });
        }
    }

    // Threshold grid per concept: nearest-rank percentiles of the training
    // half. Infinity at the end is the all-negative fallback, so accuracy is
    // never below the majority class rate.
    let mut grids: Vec<Vec<f64>> = Vec::with_capacity(k);
    for concept in 0..k {
        let mut column: Vec<f64> = (0..n_train).map(|i| z.get(i, concept)).collect();
        column.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut grid = Vec::with_capacity(101);
        for p in 1..=100usize {
            let rank = (p * n_train).div_ceil(100).max(1) - 1;
            let threshold = column[rank];
            if grid.last() != Some(&threshold) {
                grid.push(threshold);
            }
        }
        grid.push(f64::INFINITY);
        grids.push(grid);
    }

    let labels: Vec<Vec<bool>> = (0..c)
        .map(|j| (n_train..n).map(|i| y.get(i, j) != 0.0).collect())
        .collect();

    let mut best = vec![0.0f64; c];
    let mut predictions = vec![false; n_test];
    for concept in 0..k {
        for &threshold in &grids[concept] {
            for (slot, i) in (n_train..n).enumerate() {
                predictions[slot] = z.get(i, concept) > threshold;
            }
            for (j, label) in labels.iter().enumerate() {
                let correct = predictions
                    .iter()
                    .zip(label)
                    .filter(|(p, y)| p == y)
                    .count();
                let acc = correct as f64 / n_test as f64;
                if acc > best[j] {
                    best[j] = acc;
                }
            }
        }
    }
    let mean = best.iter().sum::<f64>() / c as f64;
    Ok((best, mean))
}

/// Generate the plausibility surrogate: sparse nonnegative combinations of
/// orthonormal ground-truth directions plus noise. The generating directions
/// play the role of the classifier-head rows.
pub fn gen_plausibility(
    c: usize,
    d: usize,
    n: usize,
    sparsity: usize,
    noise_std: f64,
    rng: &mut Rng,
) -> Result<(Matrix, PlausibilityGroundTruth)> {
    if sparsity == 0 || sparsity > c {
        return Err(Error::invalid(
            "sparsity must be between 1 and the class count",
        ));
    }
    if noise_std < 0.0 {
        return Err(Error::invalid("noise_std must be nonnegative"));
    }
    let directions = orthonormal_rows(c, d, rng)?;
    let mut x = Matrix::zeros(n, d);
    for i in 0..n {
        let support = rng.distinct_indices(c, sparsity);
        for &s in &support {
            let gain = rng.uniform_in(0.5, 1.5);
            for (v, &p) in x.row_mut(i).iter_mut().zip(directions.row(s)) {
                *v += gain * p;
            }
        }
        if noise_std > 0.0 {
            for v in x.row_mut(i) {
                *v += rng.normal(0.0, noise_std);
            }
        }
    }
    Ok((x, PlausibilityGroundTruth { directions }))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantedConfig {
    pub num_directions: usize,
    pub d: usize,
    pub n: usize,
    /// Nonzero mixture components per sample.
    pub support: usize,
    pub noise_std: f64,
    /// When set, directions come in +/- pairs so the population mean is
    /// zero and standardization only rescales.
    #[serde(default)]
    pub paired: bool,
}

/// Planted sparse nonnegative-mixture data: each sample is a positive
/// combination (gains in `[0.5, 1.5]`) of `support` randomly chosen unit
/// directions plus Gaussian noise. Returns the samples and the direction
/// bank.
pub fn gen_planted(cfg: &PlantedConfig, rng: &mut Rng) -> Result<(Matrix, Matrix)> {
    let c = cfg.num_directions;
    if cfg.support == 0 || cfg.support > c {
        return Err(Error::invalid(
            "support must be between 1 and the direction count",
        ));
    }
    if cfg.paired && c % 2 != 0 {
        return Err(Error::invalid("paired directions need an even count"));
    }
    if cfg.noise_std < 0.0 {
        return Err(Error::invalid("noise_std must be nonnegative"));
    }
    let directions = if cfg.paired {
        let half = Matrix::from_vec(
            c / 2,
            cfg.d,
            (0..c / 2 * cfg.d).map(|_| rng.normal(0.0, 1.0)).collect(),
        )?
        .normalize_rows();
        let mut all = Matrix::zeros(c, cfg.d);
        for i in 0..c / 2 {
            all.row_mut(2 * i).copy_from_slice(half.row(i));
            for (v, &h) in all.row_mut(2 * i + 1).iter_mut().zip(half.row(i)) {
                *v = -h;
            }
        }
        all
    } else {
        Matrix::from_vec(
            c,
            cfg.d,
            (0..c * cfg.d).map(|_| rng.normal(0.0, 1.0)).collect(),
        )?
        .normalize_rows()
    };
    let mut x = Matrix::zeros(cfg.n, cfg.d);
    for i in 0..cfg.n {
        let chosen = rng.distinct_indices(c, cfg.support);
        for &s in &chosen {
            let gain = rng.uniform_in(0.5, 1.5);
            for (v, &p) in x.row_mut(i).iter_mut().zip(directions.row(s)) {
                *v += gain * p;
            }
        }
        if cfg.noise_std > 0.0 {
            for v in x.row_mut(i) {
                *v += rng.normal(0.0, cfg.noise_std);
            }
        }
    }
    Ok((x, directions))
}

/// Projections of raw samples onto ground-truth prototypes, ReLU'd, with
/// numerical dust from near-orthogonal directions snapped to exactly zero.
pub fn oracle_codes(x: &Matrix, prototypes: &Matrix) -> Result<Matrix> {
    Ok(x.matmul_bt(prototypes)?
        .map(|v| if v > 1e-12 { v } else { 0.0 }))
}

/// `(1/c) sum_i max_j <v_i, D_j>` with both sets normalized to unit rows.
pub fn plausibility_score(atoms: &Matrix, directions: &Matrix) -> Result<f64> {
    if atoms.rows() == 0 {
        return Err(Error::invalid("plausibility needs at least one atom"));
    }
    if atoms.cols() != directions.cols() {
        return Err(Error::invalid(
            "atoms and directions need equal dimensions",
        ));
    }
    let unit_atoms = atoms.normalize_rows();
    let unit_dirs = directions.normalize_rows();
    let mut total = 0.0;
    for i in 0..unit_dirs.rows() {
        let mut best = f64::NEG_INFINITY;
        for j in 0..unit_atoms.rows() {
            best = best.max(dot(unit_dirs.row(i), unit_atoms.row(j)));
        }
        total += best;
    }
    Ok(total / unit_dirs.rows() as f64)
}

// ---------------------------------------------------------------------------
// Method harness shared by the CLI bench command and the acceptance suite.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Vanilla,
    #[serde(rename = "topk")]
    TopK,
    Jump,
    #[serde(rename = "asae")]
    ASae,
    #[serde(rename = "rasae")]
    RaSae,
    #[serde(rename = "seminmf")]
    SemiNmf,
    #[serde(rename = "convexnmf")]
    ConvexNmf,
    Pca,
    #[serde(rename = "kmeans")]
    KMeans,
    /// Ground-truth directions injected as the dictionary; debugging aid.
    Oracle,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Vanilla => "vanilla",
            Method::TopK => "topk",
            Method::Jump => "jump",
            Method::ASae => "asae",
            Method::RaSae => "rasae",
            Method::SemiNmf => "seminmf",
            Method::ConvexNmf => "convexnmf",
            Method::Pca => "pca",
            Method::KMeans => "kmeans",
            Method::Oracle => "oracle",
        }
    }
}

/// One row of a benchmark table.
#[derive(Debug, Clone, Serialize)]
pub struct BenchScore {
    pub method: String,
    pub k: usize,
    pub score: f64,
    /// Per-class accuracies for identifiability runs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_class: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct IdentifiabilityRun {
    pub c: usize,
    pub d: usize,
    pub n: usize,
    pub objects_per_image: usize,
    pub noise_std: f64,
    pub data_seed: u64,
    pub methods: Vec<Method>,
    pub train: TrainConfig,
    pub distill: DistillConfig,
    /// Relaxation budget used by the `rasae` method (`asae` always uses 0).
    pub rasae_delta: f64,
}

/// Train every requested method on the first half of a generated dataset
/// (dictionary size fixed to the number of objects) and score held-out
/// identifiability accuracy.
pub fn run_identifiability(run: &IdentifiabilityRun) -> Result<Vec<BenchScore>> {
    if run.methods.is_empty() {
        return Err(Error::invalid("method list is empty"));
    }
    let mut rng = Rng::new(run.data_seed);
    let dataset = gen_identifiability(
        run.c,
        run.d,
        run.n,
        run.objects_per_image,
        run.noise_std,
        &mut rng,
    )?;
    let n_train = dataset.x.rows() / 2;
    let train_rows: Vec<usize> = (0..n_train).collect();
    let x_train = dataset.x.select_rows(&train_rows);
    let (standardizer, x_train_std) = standardize_fit(&x_train)?;
    let x_all_std = standardizer.apply(&dataset.x)?;
    let k = run.c;

    let mut scores = Vec::new();
    for &method in &run.methods {
        let mut cfg = run.train.clone();
        cfg.dict_size = Some(k);
        let codes = match method {
            Method::Oracle => oracle_codes(&dataset.x, &dataset.prototypes)?,
            Method::Pca => fit_pca(&x_train_std, k.min(x_train_std.rows().min(run.d)))?
                .encode(&x_all_std)?,
            Method::KMeans => {
                fit_kmeans_coding(&x_train_std, k, &mut Rng::new(cfg.seed))?
                    .encode(&x_all_std)?
            }
            Method::SemiNmf => {
                fit_seminmf(&x_train_std, k, cfg.l1_coeff, 600, &mut Rng::new(cfg.seed))?
                    .encode(&x_all_std)?
            }
            Method::ConvexNmf => {
                fit_convexnmf(&x_train_std, k, cfg.l1_coeff, 600, &mut Rng::new(cfg.seed))?
                    .encode(&x_all_std)?
            }
            _ => {
                let model = train_sae_method(
                    method,
                    &x_train_std,
                    &standardizer,
                    &cfg,
                    &run.distill,
                    run.rasae_delta,
                )?;
                model.encode(&x_all_std)?.into_matrix()
            }
        };
        let (per_class, mean) = identifiability_accuracy(&codes, &dataset.y)?;
        scores.push(BenchScore {
            method: method.name().to_string(),
            k,
            score: mean,
            per_class: Some(per_class),
        });
    }
    Ok(scores)
}

#[derive(Debug, Clone)]
pub struct PlausibilityRun {
    pub c: usize,
    pub d: usize,
    pub n: usize,
    pub sparsity: usize,
    pub noise_std: f64,
    pub data_seed: u64,
    pub methods: Vec<Method>,
    pub dict_sizes: Vec<usize>,
    pub train: TrainConfig,
    pub distill: DistillConfig,
    pub rasae_delta: f64,
}

/// Train every requested method at every dictionary size and score atom
/// alignment against the generating directions (in raw coordinates).
pub fn run_plausibility(run: &PlausibilityRun) -> Result<Vec<BenchScore>> {
    if run.methods.is_empty() {
        return Err(Error::invalid("method list is empty"));
    }
    if run.dict_sizes.is_empty() {
        return Err(Error::invalid("dict_sizes is empty"));
    }
    let mut rng = Rng::new(run.data_seed);
    let (x, truth) = gen_plausibility(
        run.c,
        run.d,
        run.n,
        run.sparsity,
        run.noise_std,
        &mut rng,
    )?;
    let (standardizer, x_std) = standardize_fit(&x)?;

    let mut scores = Vec::new();
    for &k in &run.dict_sizes {
        for &method in &run.methods {
            let mut cfg = run.train.clone();
            cfg.dict_size = Some(k);
            let atoms_raw = match method {
                Method::Oracle => truth.directions.clone(),
                Method::Pca => destandardize_atoms(
                    &fit_pca(&x_std, k.min(x_std.rows().min(run.d)))?.atoms,
                    &standardizer.std,
                ),
                Method::KMeans => destandardize_atoms(
                    &fit_kmeans_coding(&x_std, k, &mut Rng::new(cfg.seed))?.atoms,
                    &standardizer.std,
                ),
                Method::SemiNmf => destandardize_atoms(
                    &fit_seminmf(&x_std, k, cfg.l1_coeff, 600, &mut Rng::new(cfg.seed))?.atoms,
                    &standardizer.std,
                ),
                Method::ConvexNmf => destandardize_atoms(
                    &fit_convexnmf(&x_std, k, cfg.l1_coeff, 600, &mut Rng::new(cfg.seed))?
                        .atoms,
                    &standardizer.std,
                ),
                _ => {
                    let model = train_sae_method(
                        method,
                        &x_std,
                        &standardizer,
                        &cfg,
                        &run.distill,
                        run.rasae_delta,
                    )?;
                    model.atoms_raw_space()
                }
            };
            let score = plausibility_score(&atoms_raw, &truth.directions)?;
            scores.push(BenchScore {
                method: method.name().to_string(),
                k,
                score,
                per_class: None,
            });
        }
    }
    Ok(scores)
}

fn destandardize_atoms(atoms: &Matrix, std: &[f64]) -> Matrix {
    let mut out = atoms.clone();
    for i in 0..out.rows() {
        for (v, &s) in out.row_mut(i).iter_mut().zip(std) {
            *v *= s;
        }
    }
    out
}

/// Train one SAE-family method on standardized data.
fn train_sae_method(
    method: Method,
    x_std: &Matrix,
    standardizer: &crate::training::Standardizer,
    cfg: &TrainConfig,
    distill_cfg: &DistillConfig,
    rasae_delta: f64,
) -> Result<SaeModel> {
    let (variant, dict_kind, delta) = match method {
        Method::Vanilla => (Variant::Vanilla, DictKind::Free, 0.0),
        Method::TopK => (Variant::TopK, DictKind::Free, 0.0),
        Method::Jump => (Variant::Jump, DictKind::Free, 0.0),
        Method::ASae | Method::RaSae => {
            let mut dcfg = distill_cfg.clone();
            dcfg.n_prime = dcfg.n_prime.min(x_std.rows());
            let candidates = distill_standardized(x_std, &dcfg)?;
            let delta = if method == Method::ASae {
                0.0
            } else {
                rasae_delta
            };
            (Variant::TopK, DictKind::Archetypal { candidates }, delta)
        }
        _ => return Err(Error::invalid("not an SAE-family method")),
    };
    let mut cfg = cfg.clone();
    cfg.delta = delta;
    let out = train_standardized(x_std, standardizer.clone(), &cfg, variant, dict_kind)?;
    Ok(out.model)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identifiability_dataset_shapes_and_labels() {
        let mut rng = Rng::new(1);
        let ds = gen_identifiability(10, 16, 50, 4, 0.01, &mut rng).unwrap();
        assert_eq!(ds.x.rows(), 50);
        assert_eq!(ds.y.cols(), 10);
        for i in 0..50 {
            let ones = ds.y.row(i).iter().filter(|&&v| v == 1.0).count();
            assert_eq!(ones, 4);
        }
        // Prototypes are orthonormal.
        let gram = ds.prototypes.matmul_bt(&ds.prototypes).unwrap();
        assert!(gram.sub(&Matrix::identity(10)).unwrap().frob_norm() < 1e-9);
    }

    #[test]
    fn identifiability_rejects_bad_object_counts() {
        let mut rng = Rng::new(2);
        assert!(gen_identifiability(8, 16, 10, 4, 0.0, &mut rng).is_err());
        assert!(gen_identifiability(21, 32, 10, 4, 0.0, &mut rng).is_err());
        assert!(gen_identifiability(10, 8, 10, 4, 0.0, &mut rng).is_err()); // c > d
        assert!(gen_identifiability(10, 16, 10, 11, 0.0, &mut rng).is_err());
    }

    #[test]
    fn identifiability_deterministic_under_seed() {
        let a = gen_identifiability(9, 12, 30, 3, 0.05, &mut Rng::new(7)).unwrap();
        let b = gen_identifiability(9, 12, 30, 3, 0.05, &mut Rng::new(7)).unwrap();
        assert!(a
            .x
            .data()
            .iter()
            .zip(b.x.data())
            .all(|(x, y)| x.to_bits() == y.to_bits()));
        assert_eq!(a.y, b.y);
    }

    #[test]
    fn label_balance_within_three_sigma() {
        let mut rng = Rng::new(3);
        let (c, m, n) = (12usize, 4usize, 4000usize);
        let ds = gen_identifiability(c, 16, n, m, 0.0, &mut rng).unwrap();
        let p = m as f64 / c as f64;
        let expected = n as f64 * p;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        for j in 0..c {
            let count: f64 = (0..n).map(|i| ds.y.get(i, j)).sum();
            assert!(
                (count - expected).abs() <= 3.0 * sigma,
                "class {j}: count {count}, expected {expected} +- {}",
                3.0 * sigma
            );
        }
    }

    #[test]
    fn single_object_noiseless_is_perfectly_identifiable() {
        let mut rng = Rng::new(4);
        let ds = gen_identifiability(9, 16, 400, 1, 0.0, &mut rng).unwrap();
        let codes = oracle_codes(&ds.x, &ds.prototypes).unwrap();
        let (per_class, mean) = identifiability_accuracy(&codes, &ds.y).unwrap();
        assert_eq!(mean, 1.0, "per-class {per_class:?}");
    }

    #[test]
    fn oracle_dictionary_perfect_on_multi_object_noiseless() {
        let mut rng = Rng::new(5);
        let ds = gen_identifiability(12, 32, 800, 4, 0.0, &mut rng).unwrap();
        let codes = oracle_codes(&ds.x, &ds.prototypes).unwrap();
        let (_, mean) = identifiability_accuracy(&codes, &ds.y).unwrap();
        assert_eq!(mean, 1.0);
    }

    #[test]
    fn independent_codes_score_majority_rate() {
        // Codes carry no information: accuracy per class lands near
        // max(p, 1-p) where p is the class prevalence.
        let mut rng = Rng::new(6);
        let n = 4000;
        let c = 10;
        let ds = gen_identifiability(c, 16, n, 4, 0.0, &mut rng).unwrap();
        let z = Matrix::from_vec(
            n,
            6,
            (0..n * 6).map(|_| rng.uniform()).collect(),
        )
        .unwrap();
        let (per_class, _) = identifiability_accuracy(&z, &ds.y).unwrap();
        let p = 0.4; // 4 of 10
        let majority = (1.0f64 - p).max(p);
        for (j, &acc) in per_class.iter().enumerate() {
            // The all-negative fallback guarantees at least the empirical
            // negative rate of the evaluation half.
            let neg_rate = (n / 2..n).filter(|&i| ds.y.get(i, j) == 0.0).count() as f64
                / (n - n / 2) as f64;
            assert!(acc >= neg_rate - 1e-12, "class {j} below fallback: {acc}");
            assert!(
                (acc - majority).abs() <= 0.03,
                "class {j} far from majority rate: {acc}"
            );
        }
    }

    #[test]
    fn perfect_indicator_column_scores_one() {
        let mut rng = Rng::new(7);
        let ds = gen_identifiability(9, 12, 200, 2, 0.0, &mut rng).unwrap();
        // Use the label matrix itself as codes.
        let (per_class, mean) = identifiability_accuracy(&ds.y, &ds.y).unwrap();
        assert_eq!(mean, 1.0, "{per_class:?}");
    }

    #[test]
    fn accuracy_invariant_to_monotone_transforms() {
        let mut rng = Rng::new(8);
        let ds = gen_identifiability(9, 12, 400, 3, 0.02, &mut rng).unwrap();
        let codes = oracle_codes(&ds.x, &ds.prototypes).unwrap();
        let (per_a, _) = identifiability_accuracy(&codes, &ds.y).unwrap();
        // Strictly increasing transform per column: x -> exp(2x) - 0.5.
        let warped = codes.map(|v| (2.0 * v).exp() - 0.5);
        let (per_b, _) = identifiability_accuracy(&warped, &ds.y).unwrap();
        for (a, b) in per_a.iter().zip(&per_b) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_class_rejected() {
        let z = Matrix::zeros(8, 2);
        let mut y = Matrix::zeros(8, 2);
        for i in 0..8 {
            y.set(i, 0, (i % 2) as f64);
            y.set(i, 1, 1.0); // constant
        }
        match identifiability_accuracy(&z, &y) {
            Err(Error::UndefinedClass { class }) => assert_eq!(class, 1),
            other => panic!("expected UndefinedClass, got {other:?}"),
        }
    }

    #[test]
    fn plausibility_oracle_scores_one() {
        let mut rng = Rng::new(9);
        let (_, truth) = gen_plausibility(8, 16, 50, 3, 0.0, &mut rng).unwrap();
        let score = plausibility_score(&truth.directions, &truth.directions).unwrap();
        assert!((score - 1.0).abs() < 1e-12);
    }

    #[test]
    fn plausibility_null_space_scores_zero() {
        // Directions along the first c axes, atoms along the remaining axes.
        let c = 4;
        let d = 10;
        let dirs = Matrix::eye(c, d);
        let mut atoms = Matrix::zeros(3, d);
        for (i, row) in (c..c + 3).enumerate() {
            atoms.set(i, row, 1.0);
        }
        assert_eq!(plausibility_score(&atoms, &dirs).unwrap(), 0.0);
    }

    #[test]
    fn plausibility_matches_double_loop() {
        let mut rng = Rng::new(10);
        let (x, truth) = gen_plausibility(6, 12, 30, 2, 0.05, &mut rng).unwrap();
        let atoms = x.select_rows(&[0, 5, 11, 17]).normalize_rows();
        let got = plausibility_score(&atoms, &truth.directions).unwrap();
        let mut expected = 0.0;
        for i in 0..6 {
            let mut best = f64::NEG_INFINITY;
            for j in 0..4 {
                best = best.max(dot(truth.directions.row(i), atoms.row(j)));
            }
            expected += best / 6.0;
        }
        assert!((got - expected).abs() < 1e-12);
    }

    #[test]
    fn plausibility_never_decreases_with_more_atoms() {
        let mut rng = Rng::new(11);
        let (x, truth) = gen_plausibility(6, 12, 40, 2, 0.05, &mut rng).unwrap();
        let small = x.select_rows(&[0, 1, 2]);
        let large = x.select_rows(&[0, 1, 2, 3, 4, 5, 6]);
        let s_small = plausibility_score(&small, &truth.directions).unwrap();
        let s_large = plausibility_score(&large, &truth.directions).unwrap();
        assert!(s_large >= s_small - 1e-12);
    }

    #[test]
    fn plausibility_rejects_c_above_d() {
        let mut rng = Rng::new(12);
        assert!(gen_plausibility(10, 8, 20, 2, 0.0, &mut rng).is_err());
    }

    #[test]
    fn plausibility_invariant_under_atom_permutation() {
        let mut rng = Rng::new(13);
        let (x, truth) = gen_plausibility(5, 10, 20, 2, 0.05, &mut rng).unwrap();
        let atoms = x.select_rows(&[0, 3, 7, 9]);
        let permuted = atoms.select_rows(&[2, 0, 3, 1]);
        let a = plausibility_score(&atoms, &truth.directions).unwrap();
        let b = plausibility_score(&permuted, &truth.directions).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn oracle_row_in_identifiability_harness() {
        let run = IdentifiabilityRun {
            c: 9,
            d: 16,
            n: 400,
            objects_per_image: 4,
            noise_std: 0.0,
            data_seed: 3,
            methods: vec![Method::Oracle],
            train: TrainConfig::default(),
            distill: DistillConfig {
                n_prime: 64,
                kmeans_iters: 10,
                seed: 0,
            },
            rasae_delta: 0.1,
        };
        let scores = run_identifiability(&run).unwrap();
        assert_eq!(scores.len(), 1);
        assert_eq!(scores[0].method, "oracle");
        assert_eq!(scores[0].score, 1.0);
    }

    #[test]
    fn empty_method_list_rejected() {
        let run = IdentifiabilityRun {
            c: 9,
            d: 16,
            n: 40,
            objects_per_image: 2,
            noise_std: 0.0,
            data_seed: 3,
            methods: vec![],
            train: TrainConfig::default(),
            distill: DistillConfig::default(),
            rasae_delta: 0.1,
        };
        assert!(run_identifiability(&run).is_err());
    }
}
