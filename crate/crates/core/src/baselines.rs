//! Classical dictionary-learning baselines: Semi-NMF, Convex-NMF, K-Means
//! coding, and PCA.
//!
//! All four emit a `k x d` atom matrix and codes in the same shape as SAE
//! models, so the metrics module applies unchanged. The NMF variants run
//! full-batch projected Adam with ReLU projections after every step.

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::numerics::{kmeans, singular_values, svd_right_vectors};
use crate::rng::Rng;
use crate::training::{AdamState, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    SemiNmf,
    ConvexNmf,
    KMeansCoding,
    Pca,
}

#[derive(Debug, Clone)]
pub struct BaselineModel {
    pub kind: BaselineKind,
    /// `k x d` dictionary.
    pub atoms: Matrix,
    /// Convex-NMF only: nonnegative mixing over training rows (`k x n`),
    /// the certificate that atoms lie in `cone(A)`.
    pub mixing: Option<Matrix>,
    /// PCA only: feature means removed before projection.
    pub mean: Option<Vec<f64>>,
}

impl BaselineModel {
    pub fn num_atoms(&self) -> usize {
        self.atoms.rows()
    }

    /// Codes for (possibly new) data under the fitted dictionary.
    ///
    /// K-Means assigns one-hot rows, PCA projects onto the centered basis,
    /// and the NMF variants solve a nonnegative least squares per row by
    /// projected gradient with a fixed Lipschitz step.
    pub fn encode(&self, a: &Matrix) -> Result<Matrix> {
        if a.cols() != self.atoms.cols() {
            return Err(Error::invalid(format!(
                "data has {} features but baseline atoms have {}",
                a.cols(),
                self.atoms.cols()
            )));
        }
        match self.kind {
            BaselineKind::KMeansCoding => {
                let mut z = Matrix::zeros(a.rows(), self.atoms.rows());
                for i in 0..a.rows() {
                    let c = nearest_row(&self.atoms, a.row(i));
                    z.set(i, c, 1.0);
                }
                Ok(z)
            }
            BaselineKind::Pca => {
                let centered = self.center(a)?;
                centered.matmul_bt(&self.atoms)
            }
            BaselineKind::SemiNmf | BaselineKind::ConvexNmf => {
                nonnegative_codes(a, &self.atoms)
            }
        }
    }

    /// `Z` times atoms, undoing PCA centering where applicable.
    pub fn reconstruct(&self, z: &Matrix) -> Result<Matrix> {
        let mut recon = z.matmul(&self.atoms)?;
        if let Some(mean) = &self.mean {
            for i in 0..recon.rows() {
                for (v, &m) in recon.row_mut(i).iter_mut().zip(mean) {
                    *v += m;
                }
            }
        }
        Ok(recon)
    }

    fn center(&self, a: &Matrix) -> Result<Matrix> {
        let Some(mean) = &self.mean else {
            return Ok(a.clone());
        };
        let mut out = a.clone();
        for i in 0..out.rows() {
            for (v, &m) in out.row_mut(i).iter_mut().zip(mean) {
                *v -= m;
            }
        }
        Ok(out)
    }
}

fn nearest_row(rows: &Matrix, point: &[f64]) -> usize {
    let mut best = 0;
    let mut best_d2 = f64::INFINITY;
    for r in 0..rows.rows() {
        let d2: f64 = rows
            .row(r)
            .iter()
            .zip(point)
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum();
        if d2 < best_d2 {
            best_d2 = d2;
            best = r;
        }
    }
    best
}

/// Nonnegative least squares per row: projected gradient descent on
/// `||a - z D||^2` with step `1 / (2 sigma_1(D)^2)`.
fn nonnegative_codes(a: &Matrix, atoms: &Matrix) -> Result<Matrix> {
    let top = singular_values(atoms)?[0];
    if top == 0.0 {
        return Ok(Matrix::zeros(a.rows(), atoms.rows()));
    }
    let step = 1.0 / (2.0 * top * top);
    let mut z = Matrix::zeros(a.rows(), atoms.rows());
    for _ in 0..300 {
        let resid = z.matmul(atoms)?.sub(a)?;
        let grad = resid.matmul_bt(atoms)?.scale(2.0);
        for (zv, &g) in z.data_mut().iter_mut().zip(grad.data()) {
            *zv = (*zv - step * g).max(0.0);
        }
    }
    Ok(z)
}

/// Semi-NMF: `min ||A - Z D||_F^2 + l1 ||Z||_1` with `Z >= 0` and
/// unconstrained `D` kept on unit-norm rows.
pub fn fit_seminmf(
    a: &Matrix,
    k: usize,
    l1: f64,
    iters: usize,
    rng: &mut Rng,
) -> Result<BaselineModel> {
    if k == 0 {
        return Err(Error::invalid("seminmf needs k >= 1"));
    }
    a.validate_finite()?;
    let (n, d) = (a.rows(), a.cols());
    let cfg = adam_config();

    let mut z = Matrix::from_vec(n, k, (0..n * k).map(|_| rng.uniform() * 0.1).collect())?;
    let mut atoms = Matrix::from_vec(
        k,
        d,
        (0..k * d).map(|_| rng.normal(0.0, 1.0)).collect(),
    )?
    .normalize_rows();

    let mut adam_z = AdamState::new(n * k);
    let mut adam_d = AdamState::new(k * d);
    let scale = 2.0 / n as f64;

    for t in 1..=iters {
        let resid = z.matmul(&atoms)?.sub(a)?;
        let loss = (resid.frob_norm_sq() + l1 * z.data().iter().sum::<f64>()) / n as f64;
        if !loss.is_finite() {
            return Err(Error::TrainingDiverged { step: t });
        }
        let mut grad_z = resid.matmul_bt(&atoms)?.scale(scale);
        if l1 > 0.0 {
            let bump = l1 / n as f64;
            for (g, &zv) in grad_z.data_mut().iter_mut().zip(z.data()) {
                if zv > 0.0 {
                    *g += bump;
                }
            }
        }
        let grad_d = z.matmul_at(&resid)?.scale(scale);

        adam_z.update(z.data_mut(), grad_z.data(), &cfg, t);
        adam_d.update(atoms.data_mut(), grad_d.data(), &cfg, t);

        for v in z.data_mut() {
            *v = v.max(0.0);
        }
        atoms = atoms.normalize_rows();
    }

    Ok(BaselineModel {
        kind: BaselineKind::SemiNmf,
        atoms,
        mixing: None,
        mean: None,
    })
}

/// Convex-NMF: atoms are nonnegative mixtures of data rows, `D = W A` with
/// `W >= 0` (not row-normalized), codes `Z >= 0`.
pub fn fit_convexnmf(
    a: &Matrix,
    k: usize,
    l1: f64,
    iters: usize,
    rng: &mut Rng,
) -> Result<BaselineModel> {
    if k == 0 {
        return Err(Error::invalid("convexnmf needs k >= 1"));
    }
    a.validate_finite()?;
    let n = a.rows();
    let cfg = adam_config();

    let mut z = Matrix::from_vec(n, k, (0..n * k).map(|_| rng.uniform() * 0.1).collect())?;
    let mut mixing = Matrix::from_vec(
        k,
        n,
        (0..k * n).map(|_| rng.uniform() * 2.0 / n as f64).collect(),
    )?;

    let mut adam_z = AdamState::new(n * k);
    let mut adam_w = AdamState::new(k * n);
    let scale = 2.0 / n as f64;

    for t in 1..=iters {
        let atoms = mixing.matmul(a)?;
        let resid = z.matmul(&atoms)?.sub(a)?;
        let loss = (resid.frob_norm_sq() + l1 * z.data().iter().sum::<f64>()) / n as f64;
        if !loss.is_finite() {
            return Err(Error::TrainingDiverged { step: t });
        }
        let mut grad_z = resid.matmul_bt(&atoms)?.scale(scale);
        if l1 > 0.0 {
            let bump = l1 / n as f64;
            for (g, &zv) in grad_z.data_mut().iter_mut().zip(z.data()) {
                if zv > 0.0 {
                    *g += bump;
                }
            }
        }
        let grad_atoms = z.matmul_at(&resid)?.scale(scale);
        let grad_w = grad_atoms.matmul_bt(a)?;

        adam_z.update(z.data_mut(), grad_z.data(), &cfg, t);
        adam_w.update(mixing.data_mut(), grad_w.data(), &cfg, t);

        for v in z.data_mut() {
            *v = v.max(0.0);
        }
        for v in mixing.data_mut() {
            *v = v.max(0.0);
        }
    }

    let atoms = mixing.matmul(a)?;
    Ok(BaselineModel {
        kind: BaselineKind::ConvexNmf,
        atoms,
        mixing: Some(mixing),
        mean: None,
    })
}

/// PCA coding: atoms are the top-k right singular vectors of the centered
/// data; codes are projections onto them.
pub fn fit_pca(a: &Matrix, k: usize) -> Result<BaselineModel> {
    if k == 0 || k > a.rows().min(a.cols()) {
        return Err(Error::invalid(format!(
            "pca needs 1 <= k <= min(n, d) = {}, got {k}",
            a.rows().min(a.cols())
        )));
    }
    a.validate_finite()?;
    let mean = a.column_means();
    let mut centered = a.clone();
    for i in 0..centered.rows() {
        for (v, &m) in centered.row_mut(i).iter_mut().zip(&mean) {
            *v -= m;
        }
    }
    let (_, vectors) = svd_right_vectors(&centered)?;
    let atoms = vectors.select_rows(&(0..k).collect::<Vec<_>>());
    Ok(BaselineModel {
        kind: BaselineKind::Pca,
        atoms,
        mixing: None,
        mean: Some(mean),
    })
}

/// K-Means coding: centroids as atoms, one-hot nearest-centroid codes.
pub fn fit_kmeans_coding(a: &Matrix, k: usize, rng: &mut Rng) -> Result<BaselineModel> {
    let centroids = kmeans(a, k, 100, rng)?;
    Ok(BaselineModel {
        kind: BaselineKind::KMeansCoding,
        atoms: centroids,
        mixing: None,
        mean: None,
    })
}

fn adam_config() -> TrainConfig {
    TrainConfig {
        learning_rate: 3e-3,
        ..TrainConfig::default()
    }
}
