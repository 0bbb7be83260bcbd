//! Optimal linear sum assignment via shortest augmenting paths with dual
//! potentials (Jonker-Volgenant style), O(k^3).

use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone)]
pub struct Assignment {
    /// `permutation[i]` is the column assigned to row `i`.
    pub permutation: Vec<usize>,
    /// Total cost of the assignment under the original cost matrix.
    pub value: f64,
}

/// Solve the assignment problem on a square cost matrix.
pub fn linear_assignment(cost: &Matrix, direction: Direction) -> Result<Assignment> {
    if cost.rows() != cost.cols() {
        return Err(Error::invalid(format!(
            "assignment requires a square cost matrix, got {}x{}",
            cost.rows(),
            cost.cols()
        )));
    }
    cost.validate_finite()?;
    let n = cost.rows();
    if n == 0 {
        return Ok(Assignment {
            permutation: vec![],
            value: 0.0,
        });
    }

    let sign = match direction {
        Direction::Minimize => 1.0,
        Direction::Maximize => -1.0,
    };
    let at = |i: usize, j: usize| sign * cost.get(i, j);

    // 1-indexed buffers; index 0 is the virtual unmatched slot.
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut matched_row = vec![0usize; n + 1]; // column -> row (1-indexed)
    let mut way = vec![0usize; n + 1];

    for i in 1..=n {
        matched_row[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = matched_row[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = at(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[matched_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if matched_row[j0] == 0 {
                break;
            }
        }
        // Walk the augmenting path back to the root.
        while j0 != 0 {
            let j1 = way[j0];
            matched_row[j0] = matched_row[j1];
            j0 = j1;
        }
    }

    let mut permutation = vec![0usize; n];
    for j in 1..=n {
        permutation[matched_row[j] - 1] = j - 1;
    }
    let value = permutation
        .iter()
        .enumerate()
        .map(|(i, &j)| cost.get(i, j))
        .sum();
    Ok(Assignment { permutation, value })
}
