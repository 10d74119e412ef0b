//! Small complex linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

pub const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
pub const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };
pub const J: Complex64 = Complex64 { re: 0.0, im: 1.0 };

pub fn cis(phase: f64) -> Complex64 {
    Complex64::from_polar(1.0, phase)
}

/// Ratio of extreme singular values (infinite for a singular matrix).
pub fn condition_number(m: &CMat) -> f64 {
    let sv = m.clone().singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 { f64::INFINITY } else { max / min }
}

/// Condition number of a Hermitian positive semidefinite matrix from its eigenvalues.
pub fn hermitian_condition(m: &CMat) -> f64 {
    let eig = m.clone().symmetric_eigenvalues();
    let max = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    if min <= 0.0 { f64::INFINITY } else { max / min }
}

/// Solves `A X = B` for Hermitian positive definite `A`.
pub fn solve_hpd(a: &CMat, b: &CMat, context: &str) -> Result<CMat> {
    let chol = a.clone().cholesky().ok_or_else(|| Error::Singular(context.to_string()))?;
    Ok(chol.solve(b))
}

/// Real-valued variant of [`solve_hpd`].
pub fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>, context: &str) -> Result<DVector<f64>> {
    let chol = a.clone().cholesky().ok_or_else(|| Error::Singular(context.to_string()))?;
    Ok(chol.solve(b))
}

/// Moore-Penrose pseudo-inverse.
pub fn pinv(m: &CMat) -> Result<CMat> {
    m.clone()
        .pseudo_inverse(1e-12)
        .map_err(|e| Error::NumericalDegeneracy(e.to_string()))
}

/// Frobenius norm of `a - b` relative to `b`.
pub fn rel_error(a: &CMat, b: &CMat) -> f64 {
    let denom = b.norm();
    if denom == 0.0 { (a - b).norm() } else { (a - b).norm() / denom }
}

/// Makes a numerically Hermitian matrix exactly Hermitian.
pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()).scale(0.5)
}
