//! SAE training: standardization, loss, analytic gradients, Adam, and the
//! projected training loop shared by all variants.
//!
//! The loss is the mean squared reconstruction error over batch rows,
//! `||A - Z D||_F^2 / n`, plus `l1 * ||Z||_1 / n` for the vanilla variant and
//! `l0 * ||Z||_0 / n` (soft L0 with kernel pseudo-gradients for theta) for
//! JumpReLU. Decoder gradients follow the closed form `2 (Z^T Z D - Z^T A) / n`;
//! archetypal parameters chain through `D = W C + Lambda`. Constraint
//! projections run after every optimizer step, so gradients are always taken
//! at feasible points.

use serde::{Deserialize, Serialize};

use crate::dictionaries::{ArchetypalDictionary, Dictionary, FreeDictionary};
use crate::encoders::{
    self, encode, jumprelu_pseudograd, EncoderParams, Nonlinearity,
};
use crate::error::{Error, Result};
use crate::matrix::{l2_norm, Matrix};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Vanilla,
    #[serde(rename = "topk")]
    TopK,
    Jump,
}

/// Dictionary parameterization to train. The archetypal kind carries its
/// fixed candidate matrix `C` (in standardized coordinates, typically
/// K-Means centroids from [`crate::distill::distill`]).
#[derive(Debug, Clone)]
pub enum DictKind {
    Free,
    Archetypal { candidates: Matrix },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// L1 penalty weight for the vanilla variant.
    pub l1_coeff: f64,
    /// Soft-L0 penalty weight for the JumpReLU variant.
    pub l0_coeff: f64,
    /// Number of kept units for the TopK variant.
    pub top_k: usize,
    /// Relaxation budget for archetypal dictionaries.
    pub delta: f64,
    pub seed: u64,
    /// Dictionary size defaults to `overcomplete_factor * d` when
    /// `dict_size` is unset.
    pub overcomplete_factor: f64,
    pub dict_size: Option<usize>,
    pub jump_bandwidth: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            batch_size: 256,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            l1_coeff: 1e-3,
            l0_coeff: 1e-3,
            top_k: 8,
            delta: 0.0,
            seed: 0,
            overcomplete_factor: 5.0,
            dict_size: None,
            jump_bandwidth: 1e-2,
        }
    }
}

impl TrainConfig {
    pub fn resolved_dict_size(&self, d: usize) -> usize {
        self.dict_size
            .unwrap_or(((self.overcomplete_factor * d as f64).round() as usize).max(1))
    }

    fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 || !self.learning_rate.is_finite() {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be at least 1"));
        }
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        if self.delta < 0.0 {
            return Err(Error::invalid("delta must be nonnegative"));
        }
        if self.jump_bandwidth <= 0.0 {
            return Err(Error::invalid("jump_bandwidth must be positive"));
        }
        Ok(())
    }
}

/// Per-feature affine transform fitted on training data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn apply(&self, a: &Matrix) -> Result<Matrix> {
        if a.cols() != self.mean.len() {
            return Err(Error::invalid(format!(
                "standardizer fitted on {} features, got {}",
                self.mean.len(),
                a.cols()
            )));
        }
        let mut out = a.clone();
        for i in 0..out.rows() {
            for ((v, &m), &s) in out.row_mut(i).iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - m) / s;
            }
        }
        Ok(out)
    }

    pub fn identity(d: usize) -> Self {
        Standardizer {
            mean: vec![0.0; d],
            std: vec![1.0; d],
        }
    }
}

/// Fit per-feature standardization (population moments) and return the
/// transformed matrix. Features with std below 1e-12 keep std 1 so constant
/// columns map to zero instead of blowing up.
pub fn standardize_fit(a: &Matrix) -> Result<(Standardizer, Matrix)> {
    if a.rows() < 2 {
        return Err(Error::invalid("standardization needs at least 2 rows"));
    }
    a.validate_finite()?;
    let n = a.rows() as f64;
    let mean = a.column_means();
    let mut var = vec![0.0; a.cols()];
    for row in a.iter_rows() {
        for ((v, &x), &m) in var.iter_mut().zip(row).zip(&mean) {
            let d = x - m;
            *v += d * d;
        }
    }
    let std: Vec<f64> = var
        .iter()
        .map(|&v| {
            let s = (v / n).sqrt();
            if s < 1e-12 {
                1.0
            } else {
                s
            }
        })
        .collect();
    let standardizer = Standardizer { mean, std };
    let a_std = standardizer.apply(a)?;
    Ok((standardizer, a_std))
}

/// Sparsity penalty weights baked into a trained model so the loss is a
/// function of `(data, model)` alone.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Penalties {
    pub l1: f64,
    pub l0: f64,
}

#[derive(Debug, Clone)]
pub struct SaeModel {
    pub encoder: EncoderParams,
    pub dictionary: Dictionary,
    pub standardizer: Standardizer,
    pub penalties: Penalties,
}

impl SaeModel {
    pub fn variant(&self) -> Variant {
        match self.encoder.nonlinearity {
            Nonlinearity::Relu => Variant::Vanilla,
            Nonlinearity::TopK { .. } => Variant::TopK,
            Nonlinearity::JumpRelu { .. } => Variant::Jump,
        }
    }

    /// Codes for standardized activations.
    pub fn encode(&self, a_std: &Matrix) -> Result<encoders::Codes> {
        encode(a_std, &self.encoder)
    }

    /// Reconstruction of standardized activations.
    pub fn reconstruct(&self, a_std: &Matrix) -> Result<Matrix> {
        let codes = self.encode(a_std)?;
        crate::dictionaries::decode(&codes, &self.dictionary)
    }

    pub fn atoms(&self) -> Matrix {
        self.dictionary.atoms()
    }

    /// Atom directions mapped back to raw data coordinates: undoing the
    /// per-feature scaling multiplies each atom elementwise by the stored
    /// stds (the mean shift does not affect directions).
    pub fn atoms_raw_space(&self) -> Matrix {
        let mut atoms = self.atoms();
        for i in 0..atoms.rows() {
            for (v, &s) in atoms.row_mut(i).iter_mut().zip(&self.standardizer.std) {
                *v *= s;
            }
        }
        atoms
    }
}

/// Mean squared reconstruction error plus the model's sparsity penalties.
pub fn reconstruction_loss(a: &Matrix, model: &SaeModel) -> Result<f64> {
    let stats = forward(a, model)?;
    Ok(stats.loss)
}

#[derive(Debug, Clone)]
pub struct GradientSet {
    pub w_enc: Matrix,
    pub bias: Vec<f64>,
    pub dict: DictGrads,
    pub theta: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub enum DictGrads {
    Free(Matrix),
    Archetypal { weights: Matrix, relaxation: Matrix },
}

/// Analytic gradients of the training loss on `batch`.
pub fn gradients(batch: &Matrix, model: &SaeModel) -> Result<GradientSet> {
    let (grads, _) = forward_backward(batch, model)?;
    Ok(grads)
}

struct ForwardStats {
    loss: f64,
    r2_batch: f64,
    l0_mean: f64,
}

fn forward(a: &Matrix, model: &SaeModel) -> Result<ForwardStats> {
    let n = a.rows();
    if n == 0 {
        return Err(Error::invalid("empty batch"));
    }
    let codes = model.encode(a)?;
    let z = codes.matrix();
    let atoms = model.dictionary.atoms();
    let recon = z.matmul(&atoms)?;
    let resid = recon.sub(a)?;
    let n_f = n as f64;

    let mut loss = resid.frob_norm_sq() / n_f;
    if model.penalties.l1 > 0.0 {
        let l1_sum: f64 = z.data().iter().sum(); // z >= 0
        loss += model.penalties.l1 * l1_sum / n_f;
    }
    let nnz = z.data().iter().filter(|&&v| v != 0.0).count();
    if model.penalties.l0 > 0.0 {
        loss += model.penalties.l0 * nnz as f64 / n_f;
    }

    let col_means = a.column_means();
    let mut centered_sq = 0.0;
    for row in a.iter_rows() {
        for (&x, &m) in row.iter().zip(&col_means) {
            centered_sq += (x - m) * (x - m);
        }
    }
    let r2_batch = if centered_sq > 0.0 {
        1.0 - resid.frob_norm_sq() / centered_sq
    } else {
        0.0
    };
    Ok(ForwardStats {
        loss,
        r2_batch,
        l0_mean: nnz as f64 / n_f,
    })
}

fn forward_backward(batch: &Matrix, model: &SaeModel) -> Result<(GradientSet, ForwardStats)> {
    let n = batch.rows();
    if n == 0 {
        return Err(Error::invalid("empty batch"));
    }
    let pre = encoders::pre_activations(batch, &model.encoder)?;
    let z = encoders::apply_nonlinearity(&pre, &model.encoder.nonlinearity)?;
    let atoms = model.dictionary.atoms();
    let recon = z.matmul(&atoms)?;
    let resid = recon.sub(batch)?;
    let n_f = n as f64;
    let scale = 2.0 / n_f;

    // Decoder gradient: 2 (Z^T Z D - Z^T A) / n == 2 Z^T (Z D - A) / n.
    let d_atoms = z.matmul_at(&resid)?.scale(scale);

    // Code gradient, then chain through the nonlinearity mask.
    let mut d_z = resid.matmul_bt(&atoms)?.scale(scale);

    // Threshold pseudo-gradient needs the reconstruction part of d_z (the
    // kernel factor is evaluated at the raw pre-activation), plus the
    // soft-L0 penalty term.
    let theta_grad = if let Nonlinearity::JumpRelu { theta, bandwidth } =
        &model.encoder.nonlinearity
    {
        let k = theta.len();
        let mut grad = vec![0.0; k];
        for i in 0..n {
            let pre_row = pre.row(i);
            let dz_row = d_z.row(i);
            for j in 0..k {
                let (_, d_theta) = jumprelu_pseudograd(pre_row[j], theta[j], *bandwidth);
                grad[j] += dz_row[j] * d_theta;
                if model.penalties.l0 > 0.0 {
                    grad[j] += model.penalties.l0 / n_f
                        * encoders::soft_l0_theta_grad(pre_row[j], theta[j], *bandwidth);
                }
            }
        }
        Some(grad)
    } else {
        None
    };

    if model.penalties.l1 > 0.0 {
        let bump = model.penalties.l1 / n_f;
        for (g, &zv) in d_z.data_mut().iter_mut().zip(z.data()) {
            if zv > 0.0 {
                *g += bump;
            }
        }
    }
    let mut d_pre = d_z;
    match &model.encoder.nonlinearity {
        Nonlinearity::Relu => {
            for (g, &p) in d_pre.data_mut().iter_mut().zip(pre.data()) {
                if p <= 0.0 {
                    *g = 0.0;
                }
            }
        }
        Nonlinearity::TopK { .. } => {
            for (g, &zv) in d_pre.data_mut().iter_mut().zip(z.data()) {
                if zv == 0.0 {
                    *g = 0.0;
                }
            }
        }
        Nonlinearity::JumpRelu { .. } => {
            for (g, &zv) in d_pre.data_mut().iter_mut().zip(z.data()) {
                if zv == 0.0 {
                    *g = 0.0;
                }
            }
        }
    }

    let w_enc_grad = batch.matmul_at(&d_pre)?;
    let bias_grad = d_pre.column_sums();

    let dict_grads = match &model.dictionary {
        Dictionary::Free(_) => DictGrads::Free(d_atoms),
        Dictionary::Archetypal(arch) => {
            let weights = d_atoms.matmul_bt(arch.candidates())?;
            DictGrads::Archetypal {
                weights,
                relaxation: d_atoms,
            }
        }
    };

    // Forward stats reuse the already-computed residual.
    let mut loss = resid.frob_norm_sq() / n_f;
    if model.penalties.l1 > 0.0 {
        loss += model.penalties.l1 * z.data().iter().sum::<f64>() / n_f;
    }
    let nnz = z.data().iter().filter(|&&v| v != 0.0).count();
    if model.penalties.l0 > 0.0 {
        loss += model.penalties.l0 * nnz as f64 / n_f;
    }
    let col_means = batch.column_means();
    let mut centered_sq = 0.0;
    for row in batch.iter_rows() {
        for (&x, &m) in row.iter().zip(&col_means) {
            centered_sq += (x - m) * (x - m);
        }
    }
    let stats = ForwardStats {
        loss,
        r2_batch: if centered_sq > 0.0 {
            1.0 - resid.frob_norm_sq() / centered_sq
        } else {
            0.0
        },
        l0_mean: nnz as f64 / n_f,
    };

    Ok((
        GradientSet {
            w_enc: w_enc_grad,
            bias: bias_grad,
            dict: dict_grads,
            theta: theta_grad,
        },
        stats,
    ))
}

/// One Adam moment buffer per parameter tensor.
pub(crate) struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub(crate) fn new(len: usize) -> Self {
        AdamState {
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    pub(crate) fn update(&mut self, params: &mut [f64], grads: &[f64], cfg: &TrainConfig, t: usize) {
        let t = t as i32;
        let correction =
            (1.0 - cfg.beta2.powi(t)).sqrt() / (1.0 - cfg.beta1.powi(t));
        let lr_t = cfg.learning_rate * correction;
        for ((p, &g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            *p -= lr_t * *m / (v.sqrt() + cfg.epsilon);
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CurvePoint {
    pub step: usize,
    pub loss: f64,
    pub r2_batch: f64,
    pub l0_mean: f64,
}

#[derive(Debug)]
pub struct TrainOutput {
    pub model: SaeModel,
    pub curve: Vec<CurvePoint>,
}

/// Train an SAE on raw activations. Standardization is fitted here and the
/// fitted transform is stored in the returned model; archetypal candidates
/// are expected in standardized coordinates already.
pub fn train(
    a: &Matrix,
    config: &TrainConfig,
    variant: Variant,
    dict_kind: DictKind,
) -> Result<TrainOutput> {
    config.validate()?;
    let (standardizer, a_std) = standardize_fit(a)?;
    train_standardized(&a_std, standardizer, config, variant, dict_kind)
}

/// Training core operating on already-standardized data.
pub fn train_standardized(
    a_std: &Matrix,
    standardizer: Standardizer,
    config: &TrainConfig,
    variant: Variant,
    dict_kind: DictKind,
) -> Result<TrainOutput> {
    config.validate()?;
    let n = a_std.rows();
    let d = a_std.cols();
    let k = config.resolved_dict_size(d);
    let mut rng = Rng::new(config.seed);

    // JumpReLU thresholds are optimized in log space to stay positive.
    let theta_init = 0.1f64;
    let mut log_theta = vec![theta_init.ln(); k];
    let nonlinearity = match variant {
        Variant::Vanilla => Nonlinearity::Relu,
        Variant::TopK => {
            if config.top_k > k {
                return Err(Error::invalid(format!(
                    "top_k {} exceeds dictionary size {k}",
                    config.top_k
                )));
            }
            Nonlinearity::TopK { k: config.top_k }
        }
        Variant::Jump => Nonlinearity::JumpRelu {
            theta: vec![theta_init; k],
            bandwidth: config.jump_bandwidth,
        },
    };
    let encoder = EncoderParams::init(d, k, nonlinearity, &mut rng)?;

    let mut dictionary = match dict_kind {
        DictKind::Free => {
            let bound = 1.0 / (d as f64).sqrt();
            let data = (0..k * d).map(|_| rng.uniform_in(-bound, bound)).collect();
            let mut free = FreeDictionary::new(Matrix::from_vec(k, d, data)?)?;
            free.project();
            Dictionary::Free(free)
        }
        DictKind::Archetypal { candidates } => {
            if candidates.cols() != d {
                return Err(Error::invalid(format!(
                    "candidates have {} features but data has {d}",
                    candidates.cols()
                )));
            }
            let mut dict = ArchetypalDictionary::new(candidates, k, config.delta)?;
            if std::env::var("W_EG_MULT").is_ok() {
                // EG needs full support: identity-like init plus a small
                // uniform floor.
                let n_prime = dict.weights.cols();
                let floor = 0.05 / n_prime as f64;
                let eye = Matrix::eye(k, n_prime);
                dict.weights = eye.map(|v| v + floor);
                dict.project();
            }
            Dictionary::Archetypal(dict)
        }
    };
    dictionary.project();

    let penalties = match variant {
        Variant::Vanilla => Penalties {
            l1: config.l1_coeff,
            l0: 0.0,
        },
        Variant::TopK => Penalties { l1: 0.0, l0: 0.0 },
        Variant::Jump => Penalties {
            l1: 0.0,
            l0: config.l0_coeff,
        },
    };

    let mut model = SaeModel {
        encoder,
        dictionary,
        standardizer,
        penalties,
    };

    let mut adam_w_enc = AdamState::new(d * k);
    let mut adam_bias = AdamState::new(k);
    let mut adam_dict_a = AdamState::new(match &model.dictionary {
        Dictionary::Free(f) => f.atoms.data().len(),
        Dictionary::Archetypal(arch) => arch.weights.data().len(),
    });
    let mut adam_dict_b = AdamState::new(match &model.dictionary {
        Dictionary::Free(_) => 0,
        Dictionary::Archetypal(arch) => arch.relaxation.data().len(),
    });
    let mut adam_theta = AdamState::new(k);

    let mut curve = Vec::new();
    let mut step = 0usize;
    let mut order: Vec<usize> = (0..n).collect();

    for _epoch in 0..config.epochs {
        rng.shuffle(&mut order);
        for chunk in order.chunks(config.batch_size) {
            let batch = a_std.select_rows(chunk);
            let (grads, stats) = forward_backward(&batch, &model)?;
            if !stats.loss.is_finite() {
                return Err(Error::TrainingDiverged { step });
            }
            step += 1;

            adam_w_enc.update(
                model.encoder.w_enc.data_mut(),
                grads.w_enc.data(),
                config,
                step,
            );
            adam_bias.update(&mut model.encoder.bias, &grads.bias, config, step);
            match (&mut model.dictionary, grads.dict) {
                (Dictionary::Free(free), DictGrads::Free(g)) => {
                    adam_dict_a.update(free.atoms.data_mut(), g.data(), config, step);
                }
                (
                    Dictionary::Archetypal(arch),
                    DictGrads::Archetypal {
                        weights,
                        relaxation,
                    },
                ) => {
                    // Temporary experiment: optimizer choice for W via env.
                    if let Ok(mult) = std::env::var("W_EG_MULT") {
                        let lr_w: f64 = config.learning_rate * mult.parse::<f64>().unwrap();
                        for (p, &g) in arch.weights.data_mut().iter_mut().zip(weights.data()) {
                            *p *= (-lr_w * g).exp();
                        }
                    } else if let Ok(mult) = std::env::var("W_SGD_MULT") {
                        let lr_w: f64 = config.learning_rate * mult.parse::<f64>().unwrap();
                        for (p, &g) in arch.weights.data_mut().iter_mut().zip(weights.data()) {
                            *p -= lr_w * g;
                        }
                    } else {
                        adam_dict_a.update(arch.weights.data_mut(), weights.data(), config, step);
                    }
                    adam_dict_b.update(
                        arch.relaxation.data_mut(),
                        relaxation.data(),
                        config,
                        step,
                    );
                }
                _ => unreachable!("gradient kind always matches dictionary kind"),
            }
            if let Some(theta_grad) = grads.theta {
                if let Nonlinearity::JumpRelu { theta, .. } = &mut model.encoder.nonlinearity {
                    // d loss / d log(theta) = theta * d loss / d theta.
                    let log_grads: Vec<f64> = theta_grad
                        .iter()
                        .zip(theta.iter())
                        .map(|(&g, &t)| g * t)
                        .collect();
                    adam_theta.update(&mut log_theta, &log_grads, config, step);
                    for (t, &lt) in theta.iter_mut().zip(&log_theta) {
                        *t = lt.exp();
                    }
                }
            }

            model.dictionary.project();
            // Blown-up parameters (overflow during the update or rows that
            // collapsed to zero under projection) surface as divergence here
            // rather than as NaNs a step later.
            if !parameters_healthy(&model) {
                return Err(Error::TrainingDiverged { step });
            }
            debug_assert!(dictionary_feasible(&model.dictionary));

            curve.push(CurvePoint {
                step,
                loss: stats.loss,
                r2_batch: stats.r2_batch,
                l0_mean: stats.l0_mean,
            });
        }
    }

    model.dictionary.project();
    Ok(TrainOutput { model, curve })
}

fn parameters_healthy(model: &SaeModel) -> bool {
    model.encoder.w_enc.is_finite()
        && model.encoder.bias.iter().all(|v| v.is_finite())
        && dictionary_feasible(&model.dictionary)
}

fn dictionary_feasible(dict: &Dictionary) -> bool {
    match dict {
        Dictionary::Free(f) => (0..f.atoms.rows())
            .all(|i| (l2_norm(f.atoms.row(i)) - 1.0).abs() <= 1e-9),
        Dictionary::Archetypal(a) => {
            let rows_ok = (0..a.weights.rows()).all(|i| {
                let row = a.weights.row(i);
                row.iter().all(|&v| v >= 0.0)
                    && (row.iter().sum::<f64>() - 1.0).abs() <= 1e-9
            });
            let lambda_ok = (0..a.relaxation.rows())
                .all(|i| l2_norm(a.relaxation.row(i)) <= a.delta + 1e-9);
            rows_ok && lambda_ok
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionaries::project_row_stochastic;

    fn matrices_bit_identical(a: &Matrix, b: &Matrix) -> bool {
        a.rows() == b.rows()
            && a.cols() == b.cols()
            && a.data()
                .iter()
                .zip(b.data())
                .all(|(x, y)| x.to_bits() == y.to_bits())
    }

    fn random_matrix(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
        Matrix::from_vec(
            rows,
            cols,
            (0..rows * cols).map(|_| rng.normal(0.0, 1.0)).collect(),
        )
        .unwrap()
    }

    fn free_model(n_feats: usize, k: usize, nl: Nonlinearity, rng: &mut Rng) -> SaeModel {
        let encoder = EncoderParams::init(n_feats, k, nl, rng).unwrap();
        let mut free = FreeDictionary::new(random_matrix(k, n_feats, rng)).unwrap();
        free.project();
        SaeModel {
            encoder,
            dictionary: Dictionary::Free(free),
            standardizer: Standardizer::identity(n_feats),
            penalties: Penalties { l1: 0.0, l0: 0.0 },
        }
    }

    #[test]
    fn standardize_constant_column_zeroes() {
        let a = Matrix::from_vec(3, 2, vec![5.0, 1.0, 5.0, 2.0, 5.0, 3.0]).unwrap();
        let (_, a_std) = standardize_fit(&a).unwrap();
        for i in 0..3 {
            assert_eq!(a_std.get(i, 0), 0.0);
        }
    }

    #[test]
    fn standardize_two_point_column() {
        let a = Matrix::from_vec(2, 1, vec![0.0, 2.0]).unwrap();
        let (s, a_std) = standardize_fit(&a).unwrap();
        assert!((s.mean[0] - 1.0).abs() < 1e-12);
        assert!((s.std[0] - 1.0).abs() < 1e-12);
        assert_eq!(a_std.data(), &[-1.0, 1.0]);
    }

    #[test]
    fn standardize_moments_recomputed() {
        let mut rng = Rng::new(8);
        let a = random_matrix(50, 6, &mut rng);
        let (_, a_std) = standardize_fit(&a).unwrap();
        let means = a_std.column_means();
        for m in means {
            assert!(m.abs() < 1e-9);
        }
        let n = a_std.rows() as f64;
        for j in 0..6 {
            let var: f64 = (0..a_std.rows())
                .map(|i| a_std.get(i, j) * a_std.get(i, j))
                .sum::<f64>()
                / n;
            assert!((var.sqrt() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn standardize_rejects_single_row() {
        let a = Matrix::zeros(1, 3);
        assert!(standardize_fit(&a).is_err());
    }

    #[test]
    fn loss_zero_on_perfect_reconstruction() {
        // Identity encoder and identity dictionary on nonnegative data.
        let a = Matrix::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let model = SaeModel {
            encoder: EncoderParams::new(
                Matrix::identity(2),
                vec![0.0; 2],
                Nonlinearity::Relu,
            )
            .unwrap(),
            dictionary: Dictionary::Free(
                FreeDictionary::new(Matrix::identity(2)).unwrap(),
            ),
            standardizer: Standardizer::identity(2),
            penalties: Penalties { l1: 0.0, l0: 0.0 },
        };
        assert!(reconstruction_loss(&a, &model).unwrap() < 1e-30);
    }

    #[test]
    fn loss_with_dead_encoder_is_mean_frob() {
        // Huge negative bias kills every code.
        let mut rng = Rng::new(4);
        let a = random_matrix(6, 3, &mut rng);
        let mut model = free_model(3, 5, Nonlinearity::Relu, &mut rng);
        model.encoder.bias = vec![-1e6; 5];
        let loss = reconstruction_loss(&a, &model).unwrap();
        let expected = a.frob_norm_sq() / 6.0;
        assert!((loss - expected).abs() < 1e-12);
    }

    #[test]
    fn loss_matches_direct_summation() {
        let mut rng = Rng::new(5);
        let a = random_matrix(7, 4, &mut rng);
        let model = free_model(4, 6, Nonlinearity::Relu, &mut rng);
        let loss = reconstruction_loss(&a, &model).unwrap();

        let z = model.encode(&a).unwrap();
        let recon = z.matrix().matmul(&model.atoms()).unwrap();
        let mut direct = 0.0;
        for i in 0..7 {
            for j in 0..4 {
                let diff = a.get(i, j) - recon.get(i, j);
                direct += diff * diff;
            }
        }
        direct /= 7.0;
        assert!((loss - direct).abs() < 1e-12);
    }

    #[test]
    fn decoder_gradient_matches_closed_form() {
        let mut rng = Rng::new(11);
        let a = random_matrix(9, 5, &mut rng);
        let model = free_model(5, 7, Nonlinearity::TopK { k: 3 }, &mut rng);
        let grads = gradients(&a, &model).unwrap();
        let DictGrads::Free(d_atoms) = &grads.dict else {
            panic!("free model")
        };

        // Closed form evaluated independently: 2 (Z^T Z D - Z^T A) / n.
        let z = model.encode(&a).unwrap().into_matrix();
        let d = model.atoms();
        let ztz = z.matmul_at(&z).unwrap();
        let closed = ztz
            .matmul(&d)
            .unwrap()
            .sub(&z.matmul_at(&a).unwrap())
            .unwrap()
            .scale(2.0 / 9.0);
        let diff = d_atoms.sub(&closed).unwrap();
        assert!(diff.frob_norm() < 1e-10, "diff {}", diff.frob_norm());
    }

    #[test]
    fn zero_codes_zero_decoder_gradient() {
        let mut rng = Rng::new(12);
        let a = random_matrix(5, 3, &mut rng);
        let mut model = free_model(3, 4, Nonlinearity::Relu, &mut rng);
        model.encoder.bias = vec![-1e6; 4];
        let grads = gradients(&a, &model).unwrap();
        let DictGrads::Free(d_atoms) = &grads.dict else {
            panic!("free model")
        };
        assert_eq!(d_atoms.frob_norm(), 0.0);
    }

    /// Loss as a plain function of a model clone with one parameter nudged.
    fn loss_with(model: &SaeModel, batch: &Matrix, edit: impl Fn(&mut SaeModel)) -> f64 {
        let mut m = model.clone();
        edit(&mut m);
        reconstruction_loss(batch, &m).unwrap()
    }

    /// True when no pre-activation sits within `margin` of a nonlinearity
    /// kink, so central differences stay on one smooth piece.
    fn away_from_kinks(model: &SaeModel, batch: &Matrix, margin: f64) -> bool {
        let pre = encoders::pre_activations(batch, &model.encoder).unwrap();
        match &model.encoder.nonlinearity {
            Nonlinearity::Relu => pre.data().iter().all(|&p| p.abs() > margin),
            Nonlinearity::JumpRelu { theta, .. } => (0..pre.rows()).all(|i| {
                pre.row(i)
                    .iter()
                    .zip(theta)
                    .all(|(&p, &t)| (p - t).abs() > margin)
            }),
            Nonlinearity::TopK { k } => (0..pre.rows()).all(|i| {
                let mut vals: Vec<f64> = pre.row(i).to_vec();
                vals.sort_by(|a, b| b.partial_cmp(a).unwrap());
                let gap_ok = if *k == 0 || *k >= vals.len() {
                    true
                } else {
                    (vals[*k - 1] - vals[*k]).abs() > margin
                };
                gap_ok && vals.iter().all(|&v| v.abs() > margin)
            }),
        }
    }

    fn check_fd(
        model: &SaeModel,
        _batch: &Matrix,
        analytic: f64,
        numeric: f64,
        label: &str,
    ) {
        let denom = analytic.abs().max(numeric.abs());
        if denom < 1e-9 {
            return; // both effectively zero
        }
        let rel = (analytic - numeric).abs() / denom;
        assert!(
            rel <= 1e-5,
            "{label}: analytic {analytic} vs fd {numeric} (rel {rel:.2e}); model {:?}",
            model.encoder.nonlinearity
        );
    }

    fn finite_difference_check(model: &SaeModel, batch: &Matrix) {
        let h = 1e-6;
        let grads = gradients(batch, model).unwrap();

        for (idx, &g) in grads.w_enc.data().iter().enumerate() {
            let plus = loss_with(model, batch, |m| m.encoder.w_enc.data_mut()[idx] += h);
            let minus = loss_with(model, batch, |m| m.encoder.w_enc.data_mut()[idx] -= h);
            check_fd(model, batch, g, (plus - minus) / (2.0 * h), "w_enc");
        }
        for (idx, &g) in grads.bias.iter().enumerate() {
            let plus = loss_with(model, batch, |m| m.encoder.bias[idx] += h);
            let minus = loss_with(model, batch, |m| m.encoder.bias[idx] -= h);
            check_fd(model, batch, g, (plus - minus) / (2.0 * h), "bias");
        }
        match &grads.dict {
            DictGrads::Free(d_atoms) => {
                for (idx, &g) in d_atoms.data().iter().enumerate() {
                    let plus = loss_with(model, batch, |m| {
                        let Dictionary::Free(f) = &mut m.dictionary else {
                            unreachable!()
                        };
                        f.atoms.data_mut()[idx] += h;
                    });
                    let minus = loss_with(model, batch, |m| {
                        let Dictionary::Free(f) = &mut m.dictionary else {
                            unreachable!()
                        };
                        f.atoms.data_mut()[idx] -= h;
                    });
                    check_fd(model, batch, g, (plus - minus) / (2.0 * h), "atoms");
                }
            }
            DictGrads::Archetypal {
                weights,
                relaxation,
            } => {
                for (idx, &g) in weights.data().iter().enumerate() {
                    let plus = loss_with(model, batch, |m| {
                        let Dictionary::Archetypal(a) = &mut m.dictionary else {
                            unreachable!()
                        };
                        a.weights.data_mut()[idx] += h;
                    });
                    let minus = loss_with(model, batch, |m| {
                        let Dictionary::Archetypal(a) = &mut m.dictionary else {
                            unreachable!()
                        };
                        a.weights.data_mut()[idx] -= h;
                    });
                    check_fd(model, batch, g, (plus - minus) / (2.0 * h), "weights");
                }
                for (idx, &g) in relaxation.data().iter().enumerate() {
                    let plus = loss_with(model, batch, |m| {
                        let Dictionary::Archetypal(a) = &mut m.dictionary else {
                            unreachable!()
                        };
                        a.relaxation.data_mut()[idx] += h;
                    });
                    let minus = loss_with(model, batch, |m| {
                        let Dictionary::Archetypal(a) = &mut m.dictionary else {
                            unreachable!()
                        };
                        a.relaxation.data_mut()[idx] -= h;
                    });
                    check_fd(model, batch, g, (plus - minus) / (2.0 * h), "relaxation");
                }
            }
        }
    }

    #[test]
    fn finite_differences_relu_and_topk_free() {
        let mut found = 0;
        let mut seed = 0u64;
        while found < 6 {
            seed += 1;
            let mut rng = Rng::new(seed);
            let batch = random_matrix(10, 6, &mut rng);
            let nl = if found % 2 == 0 {
                Nonlinearity::Relu
            } else {
                Nonlinearity::TopK { k: 3 }
            };
            let mut model = free_model(6, 8, nl, &mut rng);
            model.penalties.l1 = if found % 2 == 0 { 0.01 } else { 0.0 };
            if !away_from_kinks(&model, &batch, 1e-4) {
                continue;
            }
            finite_difference_check(&model, &batch);
            found += 1;
        }
    }

    #[test]
    fn finite_differences_archetypal() {
        let mut found = 0;
        let mut seed = 100u64;
        while found < 4 {
            seed += 1;
            let mut rng = Rng::new(seed);
            let batch = random_matrix(10, 6, &mut rng);
            let candidates = random_matrix(5, 6, &mut rng);
            let raw = random_matrix(8, 5, &mut rng);
            let arch = ArchetypalDictionary::from_parts(
                project_row_stochastic(&raw),
                candidates,
                Matrix::zeros(8, 6),
                0.5,
            )
            .unwrap();
            let encoder =
                EncoderParams::init(6, 8, Nonlinearity::TopK { k: 3 }, &mut rng).unwrap();
            let model = SaeModel {
                encoder,
                dictionary: Dictionary::Archetypal(arch),
                standardizer: Standardizer::identity(6),
                penalties: Penalties { l1: 0.0, l0: 0.0 },
            };
            if !away_from_kinks(&model, &batch, 1e-4) {
                continue;
            }
            finite_difference_check(&model, &batch);
            found += 1;
        }
    }

    #[test]
    fn finite_differences_jump_away_from_thresholds() {
        let mut found = 0;
        let mut seed = 200u64;
        while found < 3 {
            seed += 1;
            let mut rng = Rng::new(seed);
            let batch = random_matrix(10, 6, &mut rng);
            let nl = Nonlinearity::JumpRelu {
                theta: vec![0.3; 8],
                bandwidth: 0.01,
            };
            let model = free_model(6, 8, nl, &mut rng);
            if !away_from_kinks(&model, &batch, 1e-3) {
                continue;
            }
            // theta is deliberately excluded: its gradient is a kernel
            // pseudo-derivative, checked by the Monte-Carlo oracle instead.
            finite_difference_check(&model, &batch);
            found += 1;
        }
    }

    fn small_planted_data(n: usize, d: usize, rng: &mut Rng) -> Matrix {
        // Nonnegative combinations of a few fixed directions plus noise.
        let c = 2 * d;
        let protos = random_matrix(c, d, rng).normalize_rows();
        let mut rows = Vec::with_capacity(n);
        for _ in 0..n {
            let support = rng.distinct_indices(c, 3);
            let mut row = vec![0.0; d];
            for &s in &support {
                let gain = rng.uniform_in(0.5, 1.5);
                for (r, &p) in row.iter_mut().zip(protos.row(s)) {
                    *r += gain * p;
                }
            }
            for r in row.iter_mut() {
                *r += rng.normal(0.0, 0.02);
            }
            rows.push(row);
        }
        Matrix::from_rows(&rows).unwrap()
    }

    #[test]
    fn train_smoke_loss_decreases_full_batch() {
        let mut rng = Rng::new(77);
        let a = small_planted_data(500, 16, &mut rng);
        let config = TrainConfig {
            epochs: 10,
            batch_size: 500,
            learning_rate: 1e-3,
            dict_size: Some(32),
            top_k: 3,
            ..TrainConfig::default()
        };
        let out = train(&a, &config, Variant::TopK, DictKind::Free).unwrap();
        let losses: Vec<f64> = out.curve.iter().map(|p| p.loss).collect();
        for w in losses.windows(2) {
            assert!(
                w[1] <= w[0] + 1e-9,
                "full-batch loss increased: {} -> {}",
                w[0],
                w[1]
            );
        }
    }

    #[test]
    fn train_same_seed_bit_identical() {
        let mut rng = Rng::new(88);
        let a = small_planted_data(120, 8, &mut rng);
        let config = TrainConfig {
            epochs: 3,
            batch_size: 32,
            dict_size: Some(16),
            top_k: 3,
            seed: 5,
            ..TrainConfig::default()
        };
        let run = |variant| {
            let out = train(&a, &config, variant, DictKind::Free).unwrap();
            out.model
        };
        for variant in [Variant::Vanilla, Variant::TopK, Variant::Jump] {
            let m1 = run(variant);
            let m2 = run(variant);
            assert!(matrices_bit_identical(&m1.encoder.w_enc, &m2.encoder.w_enc));
            assert!(matrices_bit_identical(&m1.atoms(), &m2.atoms()));
            assert!(m1
                .encoder
                .bias
                .iter()
                .zip(&m2.encoder.bias)
                .all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }

    #[test]
    fn train_archetypal_keeps_certificates() {
        let mut rng = Rng::new(99);
        let a = small_planted_data(150, 8, &mut rng);
        let (_, a_std) = standardize_fit(&a).unwrap();
        let candidates = kmeans_candidates(&a_std, 20);
        let config = TrainConfig {
            epochs: 3,
            batch_size: 50,
            dict_size: Some(12),
            top_k: 3,
            delta: 0.0,
            ..TrainConfig::default()
        };
        let out = train(
            &a,
            &config,
            Variant::TopK,
            DictKind::Archetypal { candidates },
        )
        .unwrap();
        let Dictionary::Archetypal(arch) = &out.model.dictionary else {
            panic!("archetypal requested")
        };
        // Atoms equal W C exactly (delta = 0 kills Lambda) and W stays in
        // the simplex: the convex certificate of Proposition 1.
        for i in 0..arch.weights.rows() {
            let row = arch.weights.row(i);
            assert!(row.iter().all(|&v| v >= 0.0));
            assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        }
        let atoms = out.model.atoms();
        let wc = arch.weights.matmul(arch.candidates()).unwrap();
        assert!(atoms.sub(&wc).unwrap().frob_norm() <= 1e-9);
    }

    fn kmeans_candidates(a_std: &Matrix, m: usize) -> Matrix {
        crate::numerics::kmeans(a_std, m, 20, &mut Rng::new(0)).unwrap()
    }

    #[test]
    fn train_divergence_reported_with_step() {
        let mut rng = Rng::new(101);
        let a = small_planted_data(60, 6, &mut rng);
        let config = TrainConfig {
            epochs: 5,
            batch_size: 30,
            learning_rate: 1e300, // guaranteed blow-up
            dict_size: Some(8),
            top_k: 2,
            ..TrainConfig::default()
        };
        match train(&a, &config, Variant::TopK, DictKind::Free) {
            Err(Error::TrainingDiverged { step }) => assert!(step >= 1),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn planted_model_recoverable_with_topk() {
        // Matched-sparsity TopK on planted data reaches R^2 >= 0.9. The
        // planted directions come in +/- pairs so the population mean is
        // zero and standardization only rescales.
        let mut rng = Rng::new(2025);
        let (n, d, c, support) = (600, 12, 16, 3);
        let half = Matrix::from_vec(
            c / 2,
            d,
            (0..c / 2 * d).map(|_| rng.normal(0.0, 1.0)).collect(),
        )
        .unwrap()
        .normalize_rows();
        let mut protos = Matrix::zeros(c, d);
        for i in 0..c / 2 {
            protos.row_mut(2 * i).copy_from_slice(half.row(i));
            for (v, &h) in protos.row_mut(2 * i + 1).iter_mut().zip(half.row(i)) {
                *v = -h;
            }
        }
        let mut rows = Vec::with_capacity(n);
        for _ in 0..n {
            let sel = rng.distinct_indices(c, support);
            let mut row = vec![0.0; d];
            for &s in &sel {
                let g = rng.uniform_in(0.5, 1.5);
                for (r, &p) in row.iter_mut().zip(protos.row(s)) {
                    *r += g * p;
                }
            }
            for r in row.iter_mut() {
                *r += rng.normal(0.0, 0.02);
            }
            rows.push(row);
        }
        let a = Matrix::from_rows(&rows).unwrap();

        let config = TrainConfig {
            epochs: 200,
            batch_size: 64,
            learning_rate: 1e-2,
            dict_size: Some(32),
            top_k: support,
            seed: 1,
            ..TrainConfig::default()
        };
        let out = train(&a, &config, Variant::TopK, DictKind::Free).unwrap();
        let (_, a_std) = standardize_fit(&a).unwrap();
        let recon = out.model.reconstruct(&a_std).unwrap();
        let r2 = crate::metrics::r2(&a_std, &recon).unwrap();
        assert!(r2 >= 0.9, "final R^2 {r2}");
    }
}
