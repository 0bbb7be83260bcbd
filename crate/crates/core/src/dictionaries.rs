//! Dictionary parameterizations.
//!
//! A free dictionary is a plain atom matrix with unit-norm rows. An
//! archetypal dictionary materializes its atoms as `D = W C + Lambda` where
//! `W` is row-stochastic over a fixed candidate set `C` and `Lambda` is a
//! relaxation whose rows are norm-bounded by `delta`. With `delta = 0` every
//! atom carries an explicit convex-combination certificate (its row of `W`).

use crate::encoders::Codes;
use crate::error::{Error, Result};
use crate::matrix::{l2_norm, Matrix};

/// Standard SAE decoder: `k x d` atoms, one per row.
#[derive(Debug, Clone)]
pub struct FreeDictionary {
    pub atoms: Matrix,
}

impl FreeDictionary {
    pub fn new(atoms: Matrix) -> Result<Self> {
        atoms.validate_finite()?;
        Ok(FreeDictionary { atoms })
    }

    pub fn num_atoms(&self) -> usize {
        self.atoms.rows()
    }

    /// Renormalize every atom to the unit sphere (the training projection).
    pub fn project(&mut self) {
        self.atoms = self.atoms.normalize_rows();
    }
}

/// Convex-combination decoder with relaxation.
#[derive(Debug, Clone)]
pub struct ArchetypalDictionary {
    /// `k x n'` mixing weights, row-stochastic after projection.
    pub weights: Matrix,
    /// `n' x d` candidate archetypes, fixed at construction.
    candidates: Matrix,
    /// `k x d` relaxation term, per-row norm at most `delta` after projection.
    pub relaxation: Matrix,
    /// Relaxation budget.
    pub delta: f64,
}

impl ArchetypalDictionary {
    /// Identity-like initialization: `W = eye(k, n')`, `Lambda = 0`,
    /// then projected so invariants hold from the start.
    pub fn new(candidates: Matrix, k: usize, delta: f64) -> Result<Self> {
        if delta < 0.0 || !delta.is_finite() {
            return Err(Error::invalid("delta must be a nonnegative finite scalar"));
        }
        if candidates.rows() == 0 || candidates.cols() == 0 {
            return Err(Error::invalid("candidate matrix must be non-empty"));
        }
        candidates.validate_finite()?;
        let weights = Matrix::eye(k, candidates.rows());
        let relaxation = Matrix::zeros(k, candidates.cols());
        let mut dict = ArchetypalDictionary {
            weights,
            candidates,
            relaxation,
            delta,
        };
        dict.project();
        Ok(dict)
    }

    pub fn from_parts(
        weights: Matrix,
        candidates: Matrix,
        relaxation: Matrix,
        delta: f64,
    ) -> Result<Self> {
        if delta < 0.0 || !delta.is_finite() {
            return Err(Error::invalid("delta must be a nonnegative finite scalar"));
        }
        if weights.cols() != candidates.rows() {
            return Err(Error::invalid(format!(
                "weights {}x{} do not mix {} candidates",
                weights.rows(),
                weights.cols(),
                candidates.rows()
            )));
        }
        if relaxation.rows() != weights.rows() || relaxation.cols() != candidates.cols() {
            return Err(Error::invalid("relaxation shape must be k x d"));
        }
        weights.validate_finite()?;
        candidates.validate_finite()?;
        relaxation.validate_finite()?;
        Ok(ArchetypalDictionary {
            weights,
            candidates,
            relaxation,
            delta,
        })
    }

    pub fn candidates(&self) -> &Matrix {
        &self.candidates
    }

    pub fn num_atoms(&self) -> usize {
        self.weights.rows()
    }

    /// Apply both constraint projections in place.
    pub fn project(&mut self) {
        self.weights = project_row_stochastic(&self.weights);
        self.relaxation =
            clamp_relaxation(&self.relaxation, self.delta).expect("delta validated >= 0");
    }

    /// `D = W C + Lambda`. Call [`project`](Self::project) first if the
    /// parameters may have drifted off their constraint sets.
    pub fn materialize(&self) -> Matrix {
        let wc = self
            .weights
            .matmul(&self.candidates)
            .expect("shapes validated at construction");
        wc.add(&self.relaxation).expect("shapes validated")
    }
}

/// Either dictionary kind, as stored in a trained model.
#[derive(Debug, Clone)]
pub enum Dictionary {
    Free(FreeDictionary),
    Archetypal(ArchetypalDictionary),
}

impl Dictionary {
    pub fn num_atoms(&self) -> usize {
        match self {
            Dictionary::Free(d) => d.num_atoms(),
            Dictionary::Archetypal(d) => d.num_atoms(),
        }
    }

    /// The materialized `k x d` atom matrix.
    pub fn atoms(&self) -> Matrix {
        match self {
            Dictionary::Free(d) => d.atoms.clone(),
            Dictionary::Archetypal(d) => d.materialize(),
        }
    }

    pub fn project(&mut self) {
        match self {
            Dictionary::Free(d) => d.project(),
            Dictionary::Archetypal(d) => d.project(),
        }
    }
}

/// Project onto the row-stochastic set: elementwise ReLU, then divide each
/// row by its sum. Rows that are entirely non-positive fall back to the
/// uniform row so the result always lies in the simplex.
///
/// Normalization repeats until the row is a bitwise fixpoint of
/// divide-by-sum, which makes the projection exactly idempotent.
pub fn project_row_stochastic(w: &Matrix) -> Matrix {
    let n = w.cols();
    let mut out = w.map(|v| v.max(0.0));
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let sum: f64 = row.iter().sum();
        if !(sum > 0.0 && sum.is_finite()) {
            let uniform = 1.0 / n as f64;
            for v in row.iter_mut() {
                *v = uniform;
            }
        }
        for _ in 0..32 {
            let sum: f64 = row.iter().sum();
            let mut changed = false;
            for v in row.iter_mut() {
                let divided = *v / sum;
                if divided.to_bits() != v.to_bits() {
                    *v = divided;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
    }
    out
}

/// Scale each row of `lambda` down to norm `delta` if it exceeds the budget;
/// rows already within budget are returned unchanged.
pub fn clamp_relaxation(lambda: &Matrix, delta: f64) -> Result<Matrix> {
    if delta < 0.0 || !delta.is_finite() {
        return Err(Error::invalid("delta must be a nonnegative finite scalar"));
    }
    let mut out = lambda.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let norm = l2_norm(row);
        if norm > delta {
            let scale = if norm > 0.0 { delta / norm } else { 0.0 };
            for v in row.iter_mut() {
                *v *= scale;
            }
        }
    }
    Ok(out)
}

/// Reconstruct activations: `Z` times the (materialized) atom matrix.
pub fn decode(codes: &Codes, dict: &Dictionary) -> Result<Matrix> {
    let atoms = dict.atoms();
    if codes.matrix().cols() != atoms.rows() {
        return Err(Error::invalid(format!(
            "codes have {} concepts but dictionary has {} atoms",
            codes.matrix().cols(),
            atoms.rows()
        )));
    }
    codes.matrix().matmul(&atoms)
}
