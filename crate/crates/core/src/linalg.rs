//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type Vect = DVector<f64>;

pub fn symmetrize(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

pub fn is_symmetric(m: &Mat, rel_tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let scale = m.amax().max(f64::MIN_POSITIVE);
    (m - m.transpose()).amax() <= rel_tol * scale
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn sym_eigenvalues(m: &Mat) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(symmetrize(m)).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

/// Largest absolute eigenvalue of a symmetric matrix.
pub fn sym_spectral_norm(m: &Mat) -> f64 {
    sym_eigenvalues(m).iter().fold(0.0f64, |acc, e| acc.max(e.abs()))
}

/// Checks `min eig ≥ −rel_tol·‖m‖` and returns the minimum eigenvalue.
pub fn check_psd(m: &Mat, rel_tol: f64) -> Result<f64> {
    let ev = sym_eigenvalues(m);
    let min = ev.first().copied().unwrap_or(0.0);
    let norm = ev.iter().fold(0.0f64, |acc, e| acc.max(e.abs()));
    if min < -rel_tol * norm {
        return Err(Error::NotPositiveSemidefinite { min_eigenvalue: min });
    }
    Ok(min)
}

/// Moore–Penrose inverse of a symmetric PSD matrix together with the
/// orthogonal projector onto its range.
///
/// Eigenvalues below `rel_cutoff·‖m‖` count as zero.
#[derive(Debug, Clone)]
pub struct SymPseudoInverse {
    pub pinv: Mat,
    pub range_projector: Mat,
    pub rank: usize,
}

impl SymPseudoInverse {
    pub fn new(m: &Mat, rel_cutoff: f64) -> Self {
        let n = m.nrows();
        let eig = SymmetricEigen::new(symmetrize(m));
        let norm = eig.eigenvalues.iter().fold(0.0f64, |acc, e| acc.max(e.abs()));
        let cutoff = rel_cutoff * norm;
        let mut pinv = Mat::zeros(n, n);
        let mut proj = Mat::zeros(n, n);
        let mut rank = 0;
        for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
            if norm > 0.0 && lambda.abs() > cutoff {
                let u = eig.eigenvectors.column(k);
                let outer = u * u.transpose();
                pinv += &outer / lambda;
                proj += outer;
                rank += 1;
            }
        }
        SymPseudoInverse { pinv, range_projector: proj, rank }
    }

    /// Frobenius norm of the component of `x` outside the range.
    pub fn out_of_range(&self, x: &Mat) -> f64 {
        (x - &self.range_projector * x).norm()
    }
}

/// Inverse of a symmetric positive-definite matrix, or `None`.
pub fn spd_inverse(m: &Mat) -> Option<Mat> {
    let chol = nalgebra::Cholesky::new(symmetrize(m))?;
    Some(symmetrize(&chol.inverse()))
}

/// `ln det m` for a symmetric positive-definite matrix.
pub fn spd_log_det(m: &Mat) -> Option<f64> {
    let chol = nalgebra::Cholesky::new(symmetrize(m))?;
    Some(2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

pub fn from_rows(rows: &[Vec<f64>]) -> Result<Mat> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != m) {
        return Err(Error::Shape("ragged matrix rows".into()));
    }
    Ok(Mat::from_fn(n, m, |i, j| rows[i][j]))
}

pub fn to_rows(m: &Mat) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}
