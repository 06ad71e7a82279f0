//! Small dense complex linear-algebra helpers on top of nalgebra.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Returns `(m + mᴴ) / 2`.
pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * Complex64::new(0.5, 0.0)
}

/// Largest absolute deviation from Hermitian symmetry, relative to the
/// largest entry magnitude (or absolute when the matrix is tiny).
pub fn hermitian_defect(m: &CMatrix) -> f64 {
    let scale = m.iter().map(|z| z.norm()).fold(1.0_f64, f64::max);
    let diff = m - m.adjoint();
    diff.iter().map(|z| z.norm()).fold(0.0, f64::max) / scale
}

pub fn cholesky(m: &CMatrix) -> Result<Cholesky<Complex64, Dyn>> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            found: m.ncols(),
        });
    }
    let chol = Cholesky::new(m.clone()).ok_or(Error::NotPositiveDefinite)?;
    // The complex factorization takes square roots of complex pivots, so a
    // negative pivot shows up as an imaginary diagonal rather than a failure.
    let l = chol.l_dirty();
    let ok = (0..m.nrows()).all(|k| {
        let d = l[(k, k)];
        d.re > 0.0 && d.re.is_finite() && d.im.abs() <= 1e-12 * d.re
    });
    if ok {
        Ok(chol)
    } else {
        Err(Error::NotPositiveDefinite)
    }
}

/// Natural log-determinant of a Hermitian positive-definite matrix.
pub fn ln_det_hpd(m: &CMatrix) -> Result<f64> {
    let chol = cholesky(m)?;
    let l = chol.l_dirty();
    let mut acc = 0.0;
    for k in 0..m.nrows() {
        let d = l[(k, k)].re;
        if !d.is_finite() || d <= 0.0 {
            return Err(Error::NotPositiveDefinite);
        }
        acc += d.ln();
    }
    Ok(2.0 * acc)
}

/// Base-2 log-determinant of a Hermitian positive-definite matrix.
pub fn log2_det_hpd(m: &CMatrix) -> Result<f64> {
    Ok(ln_det_hpd(m)? / std::f64::consts::LN_2)
}

/// `I + H·diag(c)·Hᴴ`, symmetrized.
pub fn identity_plus_sandwich(h: &CMatrix, diag: &[f64]) -> CMatrix {
    let m = h.nrows();
    let mut scaled = h.clone();
    for (j, &c) in diag.iter().enumerate() {
        scaled.column_mut(j).scale_mut(c);
    }
    let mut out = scaled * h.adjoint();
    for k in 0..m {
        out[(k, k)] += Complex64::new(1.0, 0.0);
    }
    hermitian_part(&out)
}

pub fn frobenius(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}
