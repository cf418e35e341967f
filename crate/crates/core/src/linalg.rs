//! Dense complex linear-algebra helpers on top of `nalgebra`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

pub const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
pub const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

/// Orthonormal basis for the column span of `cols`, built column by column in order.
///
/// Each candidate is orthogonalised twice against the accepted basis and dropped when its
/// residual norm falls below `rel_tol` times the largest column norm.
pub fn orthonormal_basis(cols: &CMat, rel_tol: f64) -> CMat {
    let scale = (0..cols.ncols())
        .map(|j| cols.column(j).norm())
        .fold(0.0, f64::max);
    orthonormal_basis_above(cols, rel_tol * scale)
}

/// [`orthonormal_basis`] with an absolute drop threshold; columns with residual norm at or below
/// `threshold` are discarded.
pub fn orthonormal_basis_above(cols: &CMat, threshold: f64) -> CMat {
    let rows = cols.nrows();
    let mut basis: Vec<CVec> = Vec::new();
    for j in 0..cols.ncols() {
        if basis.len() == rows {
            break;
        }
        let mut v: CVec = cols.column(j).into_owned();
        for _ in 0..2 {
            for q in &basis {
                let c = q.dotc(&v);
                v.axpy(-c, q, ONE);
            }
        }
        let n = v.norm();
        if n > threshold && n > 0.0 {
            v.unscale_mut(n);
            basis.push(v);
        }
    }
    if basis.is_empty() {
        CMat::zeros(rows, 0)
    } else {
        CMat::from_columns(&basis)
    }
}

/// Pivot ratio `min L_ii^2 / max L_ii^2` below which a factorisation counts as singular.
const SINGULAR_PIVOT_RATIO: f64 = 1e-13;

/// Cholesky factor of a Hermitian matrix together with its squared pivots, or `None` when a
/// pivot is not real and positive. The complex square root never fails, so the sign of every
/// pivot has to be checked explicitly.
pub fn hermitian_cholesky(a: CMat) -> Option<(Cholesky<Complex64, Dyn>, Vec<f64>)> {
    let chol = Cholesky::new(a)?;
    let mut pivots = Vec::with_capacity(chol.l_dirty().nrows());
    for z in chol.l_dirty().diagonal().iter() {
        if !(z.re > 0.0 && z.im.abs() <= 1e-8 * z.re) {
            return None;
        }
        pivots.push(z.re * z.re);
    }
    Some((chol, pivots))
}

/// Solves `a x = b` for Hermitian positive-definite `a`.
///
/// Matrices that are singular up to rounding are rejected instead of solved with tiny pivots.
pub fn solve_hpd(a: CMat, b: &CMat) -> Result<CMat> {
    let (chol, pivots) = hermitian_cholesky(a).ok_or(Error::Singular)?;
    let lo = pivots.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = pivots.iter().copied().fold(0.0, f64::max);
    if pivots.is_empty() || !(lo > SINGULAR_PIVOT_RATIO * hi) {
        return Err(Error::Singular);
    }
    Ok(chol.solve(b))
}

/// Largest absolute eigenvalue of a Hermitian matrix.
pub fn hermitian_spectral_norm(m: &CMat) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    hermitize(m)
        .symmetric_eigenvalues()
        .iter()
        .fold(0.0, |acc: f64, v| acc.max(v.abs()))
}

/// Eigenvalues of a Hermitian matrix in ascending order.
pub fn hermitian_eigenvalues(m: &CMat) -> Vec<f64> {
    let mut ev: Vec<f64> = hermitize(m).symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// `(m + m^H) / 2`.
pub fn hermitize(m: &CMat) -> CMat {
    (m + m.adjoint()).scale(0.5)
}

/// Largest entrywise deviation from Hermitian symmetry.
pub fn hermitian_defect(m: &CMat) -> f64 {
    (m - m.adjoint()).iter().fold(0.0, |acc: f64, z| acc.max(z.norm()))
}

/// `Re(x^H m x)`.
pub fn quadratic_form(m: &CMat, x: &CVec) -> f64 {
    x.dotc(&(m * x)).re
}

/// Unit-modulus phasor `e^{j theta}`.
pub fn phasor(theta: f64) -> Complex64 {
    Complex64::from_polar(1.0, theta)
}
