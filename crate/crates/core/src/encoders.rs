//! Affine encoder with the three SAE nonlinearities.
//!
//! Pre-activations are `P = A W_enc + b`; the nonlinearity then maps each row
//! to nonnegative codes. TopK applies ReLU before selecting the K largest
//! entries (so rows may carry fewer than K nonzeros), and JumpReLU is a hard
//! threshold whose training gradient for the threshold comes from a Silverman
//! kernel pseudo-derivative.

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Nonlinearity {
    Relu,
    TopK { k: usize },
    JumpRelu { theta: Vec<f64>, bandwidth: f64 },
}

/// Encoder parameters: `W_enc` is `d x k`, the bias has length `k`.
#[derive(Debug, Clone)]
pub struct EncoderParams {
    pub w_enc: Matrix,
    pub bias: Vec<f64>,
    pub nonlinearity: Nonlinearity,
}

impl EncoderParams {
    pub fn new(w_enc: Matrix, bias: Vec<f64>, nonlinearity: Nonlinearity) -> Result<Self> {
        w_enc.validate_finite()?;
        let k = w_enc.cols();
        if bias.len() != k {
            return Err(Error::invalid(format!(
                "bias length {} does not match {} concepts",
                bias.len(),
                k
            )));
        }
        match &nonlinearity {
            Nonlinearity::TopK { k: keep } => {
                if *keep > k {
                    return Err(Error::invalid(format!(
                        "TopK keeps {keep} of only {k} concepts"
                    )));
                }
            }
            Nonlinearity::JumpRelu { theta, bandwidth } => {
                if theta.len() != k {
                    return Err(Error::invalid("theta length must match concept count"));
                }
                if *bandwidth <= 0.0 || !bandwidth.is_finite() {
                    return Err(Error::invalid("bandwidth must be positive"));
                }
            }
            Nonlinearity::Relu => {}
        }
        Ok(EncoderParams {
            w_enc,
            bias,
            nonlinearity,
        })
    }

    /// Fan-in initialization: `W_enc` i.i.d. uniform in `[-1/sqrt(d), 1/sqrt(d)]`,
    /// zero bias.
    pub fn init(d: usize, k: usize, nonlinearity: Nonlinearity, rng: &mut Rng) -> Result<Self> {
        let bound = 1.0 / (d as f64).sqrt();
        let data = (0..d * k).map(|_| rng.uniform_in(-bound, bound)).collect();
        let w_enc = Matrix::from_vec(d, k, data)?;
        EncoderParams::new(w_enc, vec![0.0; k], nonlinearity)
    }

    pub fn num_concepts(&self) -> usize {
        self.w_enc.cols()
    }
}

/// Nonnegative codes, `n x k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Codes {
    z: Matrix,
}

impl Codes {
    /// Wrap a matrix as codes, rejecting negative entries.
    pub fn from_matrix(z: Matrix) -> Result<Self> {
        if z.data().iter().any(|&v| v < 0.0) {
            return Err(Error::invalid("codes must be nonnegative"));
        }
        Ok(Codes { z })
    }

    pub fn matrix(&self) -> &Matrix {
        &self.z
    }

    pub fn into_matrix(self) -> Matrix {
        self.z
    }

    /// Mean number of nonzero entries per row.
    pub fn mean_l0(&self) -> f64 {
        if self.z.rows() == 0 {
            return 0.0;
        }
        let nonzeros = self.z.data().iter().filter(|&&v| v != 0.0).count();
        nonzeros as f64 / self.z.rows() as f64
    }
}

/// Encode activations into nonnegative codes.
pub fn encode(a: &Matrix, params: &EncoderParams) -> Result<Codes> {
    if a.cols() != params.w_enc.rows() {
        return Err(Error::invalid(format!(
            "activations have {} features but encoder expects {}",
            a.cols(),
            params.w_enc.rows()
        )));
    }
    let mut pre = a.matmul(&params.w_enc)?;
    for i in 0..pre.rows() {
        for (p, &b) in pre.row_mut(i).iter_mut().zip(&params.bias) {
            *p += b;
        }
    }
    let z = apply_nonlinearity(&pre, &params.nonlinearity)?;
    Ok(Codes { z })
}

/// Pre-activations (no nonlinearity); the training loop needs them to build
/// masks and threshold gradients.
pub(crate) fn pre_activations(a: &Matrix, params: &EncoderParams) -> Result<Matrix> {
    let mut pre = a.matmul(&params.w_enc)?;
    for i in 0..pre.rows() {
        for (p, &b) in pre.row_mut(i).iter_mut().zip(&params.bias) {
            *p += b;
        }
    }
    Ok(pre)
}

pub(crate) fn apply_nonlinearity(pre: &Matrix, nl: &Nonlinearity) -> Result<Matrix> {
    match nl {
        Nonlinearity::Relu => Ok(pre.map(|v| v.max(0.0))),
        Nonlinearity::TopK { k } => {
            let mut out = Matrix::zeros(pre.rows(), pre.cols());
            for i in 0..pre.rows() {
                let selected = topk_select(pre.row(i), *k)?;
                out.row_mut(i).copy_from_slice(&selected);
            }
            Ok(out)
        }
        Nonlinearity::JumpRelu { theta, bandwidth } => {
            if *bandwidth <= 0.0 {
                return Err(Error::invalid("bandwidth must be positive"));
            }
            let mut out = Matrix::zeros(pre.rows(), pre.cols());
            for i in 0..pre.rows() {
                for ((o, &p), &t) in out.row_mut(i).iter_mut().zip(pre.row(i)).zip(theta) {
                    *o = if p > t { p } else { 0.0 };
                }
            }
            Ok(out)
        }
    }
}

/// ReLU, then zero all but the `k` largest entries. Ties keep the lowest
/// index; rows with fewer than `k` positive entries keep what they have.
pub fn topk_select(v: &[f64], k: usize) -> Result<Vec<f64>> {
    if k > v.len() {
        return Err(Error::invalid(format!(
            "cannot keep {k} entries of a length-{} vector",
            v.len()
        )));
    }
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[b].partial_cmp(&v[a]).unwrap().then(a.cmp(&b)));
    let mut out = vec![0.0; v.len()];
    for &idx in order.iter().take(k) {
        if v[idx] > 0.0 {
            out[idx] = v[idx];
        }
    }
    Ok(out)
}

/// Silverman kernel `K(u) = 1/2 exp(-|u|/sqrt 2) sin(|u|/sqrt 2 + pi/4)`.
/// Integrates to 1 over the real line.
pub fn silverman_kernel(u: f64) -> f64 {
    let a = u.abs() / std::f64::consts::SQRT_2;
    0.5 * (-a).exp() * (a + std::f64::consts::FRAC_PI_4).sin()
}

/// Straight-through gradients for `jumprelu(pre) = pre * H(pre - theta)`.
///
/// Returns `(d_out/d_pre, d_out/d_theta)`: the pre-activation passes the
/// Heaviside mask straight through, while the threshold gets the kernel
/// pseudo-derivative `-(theta/bandwidth) K((pre - theta)/bandwidth)`.
pub fn jumprelu_pseudograd(pre: f64, theta: f64, bandwidth: f64) -> (f64, f64) {
    let d_pre = if pre > theta { 1.0 } else { 0.0 };
    let d_theta = -(theta / bandwidth) * silverman_kernel((pre - theta) / bandwidth);
    (d_pre, d_theta)
}

/// Kernel pseudo-derivative of the soft-L0 term `H(pre - theta)` with
/// respect to `theta`.
pub(crate) fn soft_l0_theta_grad(pre: f64, theta: f64, bandwidth: f64) -> f64 {
    -silverman_kernel((pre - theta) / bandwidth) / bandwidth
}
