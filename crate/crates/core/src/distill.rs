//! Candidate-archetype distillation: reduce the activation matrix to `n'`
//! K-Means centroids in standardized coordinates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::numerics::kmeans;
use crate::rng::Rng;
use crate::training::standardize_fit;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DistillConfig {
    pub n_prime: usize,
    pub kmeans_iters: usize,
    pub seed: u64,
}

impl Default for DistillConfig {
    fn default() -> Self {
        DistillConfig {
            n_prime: 512,
            kmeans_iters: 25,
            seed: 0,
        }
    }
}

/// Distill raw activations into `n'` candidate archetypes. Data is
/// standardized first (training applies the same transform), so the returned
/// centroids live in the coordinates the trainer sees. Each centroid is a
/// mean of assigned rows, hence inside the convex hull of the data.
pub fn distill(a: &Matrix, cfg: &DistillConfig) -> Result<Matrix> {
    let (_, a_std) = standardize_fit(a)?;
    distill_standardized(&a_std, cfg)
}

/// Distillation core for data that is already standardized.
pub fn distill_standardized(a_std: &Matrix, cfg: &DistillConfig) -> Result<Matrix> {
    if cfg.n_prime == 0 {
        return Err(Error::invalid("n_prime must be at least 1"));
    }
    if cfg.n_prime > a_std.rows() {
        return Err(Error::invalid(format!(
            "n_prime {} exceeds the {} available rows",
            cfg.n_prime,
            a_std.rows()
        )));
    }
    let mut rng = Rng::new(cfg.seed);
    kmeans(a_std, cfg.n_prime, cfg.kmeans_iters.max(1), &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn n_prime_equals_n_returns_points() {
        // Distinct points, one cluster each: centroids are a permutation of
        // the (standardized) rows.
        let a = Matrix::from_vec(4, 1, vec![0.0, 10.0, 20.0, 30.0]).unwrap();
        let cfg = DistillConfig {
            n_prime: 4,
            kmeans_iters: 50,
            seed: 3,
        };
        let c = distill(&a, &cfg).unwrap();
        let (_, a_std) = standardize_fit(&a).unwrap();
        let mut got: Vec<f64> = c.data().to_vec();
        let mut want: Vec<f64> = a_std.data().to_vec();
        got.sort_by(|x, y| x.partial_cmp(y).unwrap());
        want.sort_by(|x, y| x.partial_cmp(y).unwrap());
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-9);
        }
    }

    #[test]
    fn two_blob_centroids_are_blob_means() {
        let mut rows = Vec::new();
        for i in 0..30 {
            rows.push(vec![(i % 3) as f64 * 0.01, 0.0]);
        }
        for i in 0..30 {
            rows.push(vec![5.0 + (i % 3) as f64 * 0.01, 5.0]);
        }
        let a = Matrix::from_rows(&rows).unwrap();
        let (_, a_std) = standardize_fit(&a).unwrap();
        let cfg = DistillConfig {
            n_prime: 2,
            kmeans_iters: 50,
            seed: 1,
        };
        let c = distill(&a, &cfg).unwrap();
        // Direct means of the standardized blobs.
        for blob in 0..2 {
            let mut mean = vec![0.0, 0.0];
            for i in (blob * 30)..(blob * 30 + 30) {
                mean[0] += a_std.get(i, 0) / 30.0;
                mean[1] += a_std.get(i, 1) / 30.0;
            }
            let matched = (0..2).any(|r| {
                (c.get(r, 0) - mean[0]).abs() < 1e-9 && (c.get(r, 1) - mean[1]).abs() < 1e-9
            });
            assert!(matched);
        }
    }

    #[test]
    fn n_prime_too_large_rejected() {
        let a = Matrix::zeros(5, 2);
        let cfg = DistillConfig {
            n_prime: 6,
            ..DistillConfig::default()
        };
        assert!(distill(&a, &cfg).is_err());
    }

    #[test]
    fn deterministic_under_seed() {
        let mut rng = Rng::new(9);
        let a = Matrix::from_vec(
            50,
            3,
            (0..150).map(|_| rng.normal(0.0, 1.0)).collect(),
        )
        .unwrap();
        let cfg = DistillConfig {
            n_prime: 8,
            kmeans_iters: 20,
            seed: 42,
        };
        let c1 = distill(&a, &cfg).unwrap();
        let c2 = distill(&a, &cfg).unwrap();
        assert!(c1
            .data()
            .iter()
            .zip(c2.data())
            .all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}
