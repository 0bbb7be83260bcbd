//! Lloyd's algorithm with k-means++ seeding.
//!
//! Deterministic given the seed: assignment ties and farthest-point
//! re-seeding both break toward the lowest index.

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::Rng;

/// Cluster `x` (n x d) into `m` centroids (m x d).
///
/// Every centroid is the mean of its assigned points, so each lies in the
/// convex hull of the data; clusters that empty out are re-seeded to the
/// point farthest from its current centroid.
pub fn kmeans(x: &Matrix, m: usize, max_iters: usize, rng: &mut Rng) -> Result<Matrix> {
    kmeans_with_history(x, m, max_iters, rng).map(|(c, _)| c)
}

/// Same as [`kmeans`] but also returns the objective (sum of squared
/// distances to the assigned centroid) recorded after each assignment pass.
pub(crate) fn kmeans_with_history(
    x: &Matrix,
    m: usize,
    max_iters: usize,
    rng: &mut Rng,
) -> Result<(Matrix, Vec<f64>)> {
    let n = x.rows();
    let d = x.cols();
    if m == 0 || m > n {
        return Err(Error::invalid(format!(
            "kmeans needs 1 <= m <= n, got m={m}, n={n}"
        )));
    }
    if max_iters == 0 {
        return Err(Error::invalid("kmeans needs max_iters >= 1"));
    }
    x.validate_finite()?;

    let mut centroids = seed_plus_plus(x, m, rng);
    let mut assignment = vec![usize::MAX; n];
    let mut history = Vec::new();

    for _ in 0..max_iters {
        // Assignment pass.
        let mut changed = false;
        let mut objective = 0.0;
        let mut dist_to_own = vec![0.0; n];
        for i in 0..n {
            let (best, best_d2) = nearest(&centroids, x.row(i));
            if assignment[i] != best {
                assignment[i] = best;
                changed = true;
            }
            dist_to_own[i] = best_d2;
            objective += best_d2;
        }
        history.push(objective);
        if !changed {
            break;
        }

        // Update pass: means per cluster.
        let mut sums = Matrix::zeros(m, d);
        let mut counts = vec![0usize; m];
        for i in 0..n {
            let c = assignment[i];
            counts[c] += 1;
            for (s, &v) in sums.row_mut(c).iter_mut().zip(x.row(i)) {
                *s += v;
            }
        }
        for c in 0..m {
            if counts[c] > 0 {
                let inv = 1.0 / counts[c] as f64;
                for (dst, &s) in centroids.row_mut(c).iter_mut().zip(sums.row(c)) {
                    *dst = s * inv;
                }
            }
        }
        // Re-seed empty clusters, lowest cluster index first, each taking
        // the current farthest point (ties to the lowest point index).
        for c in 0..m {
            if counts[c] > 0 {
                continue;
            }
            let far = (0..n)
                .max_by(|&a, &b| {
                    dist_to_own[a]
                        .partial_cmp(&dist_to_own[b])
                        .unwrap()
                        .then(b.cmp(&a))
                })
                .expect("n >= 1");
            centroids.row_mut(c).copy_from_slice(x.row(far));
            dist_to_own[far] = 0.0;
        }
    }

    Ok((centroids, history))
}

/// k-means++ seeding: first center uniform, later centers sampled with
/// probability proportional to squared distance from the chosen set.
fn seed_plus_plus(x: &Matrix, m: usize, rng: &mut Rng) -> Matrix {
    let n = x.rows();
    let mut centroids = Matrix::zeros(m, x.cols());
    let first = rng.index(n);
    centroids.row_mut(0).copy_from_slice(x.row(first));

    let mut d2: Vec<f64> = (0..n)
        .map(|i| squared_distance(x.row(i), centroids.row(0)))
        .collect();
    for c in 1..m {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            rng.weighted_index(&d2)
        } else {
            // All remaining points coincide with chosen centers; take the
            // lowest index so the choice stays deterministic.
            0
        };
        centroids.row_mut(c).copy_from_slice(x.row(pick));
        for i in 0..n {
            let dist = squared_distance(x.row(i), centroids.row(c));
            if dist < d2[i] {
                d2[i] = dist;
            }
        }
    }
    centroids
}

fn nearest(centroids: &Matrix, point: &[f64]) -> (usize, f64) {
    let mut best = 0;
    let mut best_d2 = f64::INFINITY;
    for c in 0..centroids.rows() {
        let d2 = squared_distance(point, centroids.row(c));
        if d2 < best_d2 {
            best_d2 = d2;
            best = c;
        }
    }
    (best, best_d2)
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_blobs() -> Matrix {
        let mut rows = Vec::new();
        let mut rng = Rng::new(5);
        for _ in 0..40 {
            rows.push(vec![rng.normal(0.0, 0.05), rng.normal(0.0, 0.05)]);
        }
        for _ in 0..40 {
            rows.push(vec![rng.normal(10.0, 0.05), rng.normal(10.0, 0.05)]);
        }
        Matrix::from_rows(&rows).unwrap()
    }

    #[test]
    fn separated_blobs_recover_means() {
        let x = two_blobs();
        let mut rng = Rng::new(1);
        let centroids = kmeans(&x, 2, 50, &mut rng).unwrap();

        // Recompute per-blob means directly and match centroids to blobs.
        let mut blob_means = [vec![0.0, 0.0], vec![0.0, 0.0]];
        for i in 0..40 {
            blob_means[0][0] += x.get(i, 0) / 40.0;
            blob_means[0][1] += x.get(i, 1) / 40.0;
            blob_means[1][0] += x.get(40 + i, 0) / 40.0;
            blob_means[1][1] += x.get(40 + i, 1) / 40.0;
        }
        for blob in &blob_means {
            let matched = (0..2).any(|c| {
                squared_distance(centroids.row(c), blob) < 1e-18
            });
            assert!(matched, "no centroid equals the blob mean {blob:?}");
        }
    }

    #[test]
    fn identical_points_single_cluster() {
        let x = Matrix::from_rows(&vec![vec![3.0, -1.0]; 10]).unwrap();
        let mut rng = Rng::new(2);
        let centroids = kmeans(&x, 1, 10, &mut rng).unwrap();
        assert_eq!(centroids.row(0), &[3.0, -1.0]);
    }

    #[test]
    fn m_larger_than_n_rejected() {
        let x = Matrix::zeros(3, 2);
        let mut rng = Rng::new(0);
        assert!(kmeans(&x, 4, 10, &mut rng).is_err());
    }

    #[test]
    fn objective_non_increasing() {
        let x = two_blobs();
        let mut rng = Rng::new(9);
        let (_, history) = kmeans_with_history(&x, 5, 40, &mut rng).unwrap();
        for w in history.windows(2) {
            assert!(
                w[1] <= w[0] + 1e-9,
                "objective increased: {} -> {}",
                w[0],
                w[1]
            );
        }
    }

    #[test]
    fn seeded_runs_identical() {
        let x = two_blobs();
        let a = kmeans(&x, 3, 30, &mut Rng::new(123)).unwrap();
        let b = kmeans(&x, 3, 30, &mut Rng::new(123)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn centroids_inside_convex_hull() {
        // Means of assigned points cannot leave the bounding box.
        let x = two_blobs();
        let centroids = kmeans(&x, 4, 30, &mut Rng::new(4)).unwrap();
        let (mut lo, mut hi) = (vec![f64::INFINITY; 2], vec![f64::NEG_INFINITY; 2]);
        for row in x.iter_rows() {
            for j in 0..2 {
                lo[j] = lo[j].min(row[j]);
                hi[j] = hi[j].max(row[j]);
            }
        }
        for c in centroids.iter_rows() {
            for j in 0..2 {
                assert!(c[j] >= lo[j] - 1e-12 && c[j] <= hi[j] + 1e-12);
            }
        }
    }
}
