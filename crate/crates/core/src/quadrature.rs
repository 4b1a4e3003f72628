//! Gauss–Hermite tensor quadrature for Gaussian expectations.

use nalgebra::{Cholesky, DMatrix, SymmetricEigen};

use crate::exec::{pairwise_sum, Execution};
use crate::linalg::{Mat, Vect};
use crate::{Error, Result};

/// Nodes and weights for `E[f(Z)]`, `Z ~ N(0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussHermite {
    /// Golub–Welsch on the Jacobi matrix of the orthonormal probabilists'
    /// Hermite polynomials, followed by Newton polishing of every node.
    /// Weights are `1 / Σₖ pₖ(xᵢ)²` with `pₖ` orthonormal.
    pub fn new(order: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::InvalidParameter("quadrature order must be >= 1".into()));
        }
        let jacobi = DMatrix::from_fn(order, order, |i, j| {
            if i + 1 == j || j + 1 == i {
                (i.max(j) as f64).sqrt()
            } else {
                0.0
            }
        });
        let mut nodes: Vec<f64> = SymmetricEigen::new(jacobi).eigenvalues.iter().copied().collect();
        nodes.sort_by(|a, b| a.total_cmp(b));

        let mut weights = Vec::with_capacity(order);
        for x in nodes.iter_mut() {
            for _ in 0..3 {
                let (pn, pn1, _) = orthonormal_hermite(order, *x);
                // p_n' = √n p_{n−1}
                let d = (order as f64).sqrt() * pn1;
                if d != 0.0 {
                    *x -= pn / d;
                }
            }
            let (_, _, sum_sq) = orthonormal_hermite(order, *x);
            weights.push(1.0 / sum_sq);
        }
        // Symmetrize against rounding: the rule is even.
        let n = order;
        for i in 0..n / 2 {
            let x = 0.5 * (nodes[n - 1 - i] - nodes[i]);
            let w = 0.5 * (weights[i] + weights[n - 1 - i]);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Ok(GaussHermite { nodes, weights })
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `E[f(X)]` for `X ~ N(mean, cov)` on the tensor grid `x = μ + L u`,
    /// `L Lᵀ = cov`.
    ///
    /// Grid points are grouped into fixed chunks along the innermost axis;
    /// each chunk is summed in order and the chunk sums are combined
    /// pairwise, so the value does not depend on the execution policy.
    pub fn expectation<F>(&self, mean: &Vect, cov: &Mat, exec: Execution, f: F) -> Result<f64>
    where
        F: Fn(&Vect) -> f64 + Sync + Send,
    {
        let dim = mean.len();
        if cov.nrows() != dim || cov.ncols() != dim {
            return Err(Error::Shape("mean and covariance dimensions differ".into()));
        }
        let l = Cholesky::new(cov.clone())
            .ok_or_else(|| Error::InvalidParameter("covariance must be positive definite".into()))?
            .l();
        let n = self.order();
        let n_chunks = n.checked_pow(dim as u32 - 1).ok_or_else(|| Error::InvalidParameter("grid too large".into()))?;

        let chunk_sums = exec.map_indexed(n_chunks, |chunk| {
            let mut digits = vec![0usize; dim];
            let mut rest = chunk;
            for d in digits.iter_mut().skip(1) {
                *d = rest % n;
                rest /= n;
            }
            let outer_w: f64 = digits.iter().skip(1).map(|&k| self.weights[k]).product();
            let mut u = Vect::zeros(dim);
            for (axis, &k) in digits.iter().enumerate().skip(1) {
                u[axis] = self.nodes[k];
            }
            let mut acc = 0.0;
            for k in 0..n {
                u[0] = self.nodes[k];
                let x = mean + &l * &u;
                acc += self.weights[k] * outer_w * f(&x);
            }
            acc
        });
        Ok(pairwise_sum(&chunk_sums))
    }
}

/// `(p_n(x), p_{n−1}(x), Σ_{k<n} p_k(x)²)` for the orthonormal
/// probabilists' Hermite polynomials.
fn orthonormal_hermite(n: usize, x: f64) -> (f64, f64, f64) {
    let mut prev = 0.0;
    let mut cur = 1.0;
    let mut sum_sq = 0.0;
    for k in 0..n {
        sum_sq += cur * cur;
        let next = (x * cur - (k as f64).sqrt() * prev) / ((k + 1) as f64).sqrt();
        prev = cur;
        cur = next;
    }
    (cur, prev, sum_sq)
}
