//! Dense complex linear-algebra helpers on top of `nalgebra`.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::{Error, Result};

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Column-wise Kronecker product: column `k` of the result is `a[:, k] ⊗ b[:, k]`.
pub fn khatri_rao(a: &CMat, b: &CMat) -> CMat {
    assert_eq!(a.ncols(), b.ncols(), "khatri_rao needs equal column counts");
    let (ra, rb) = (a.nrows(), b.nrows());
    CMat::from_fn(ra * rb, a.ncols(), |r, k| a[(r / rb, k)] * b[(r % rb, k)])
}

/// `(A + Aᴴ) / 2`.
pub fn hermitian_part(a: &CMat) -> CMat {
    (a + a.adjoint()).scale(0.5)
}

/// Column-major vectorization.
pub fn vec_of(a: &CMat) -> CVec {
    CVec::from_column_slice(a.as_slice())
}

/// Largest eigenpair of a Hermitian matrix. The eigenvector has unit norm and
/// its largest-magnitude entry rotated onto the positive real axis.
pub fn dominant_eigenpair(h: &CMat) -> Result<(f64, CVec)> {
    if h.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Numerical("eigen-solve on non-finite matrix".into()));
    }
    let eig = SymmetricEigen::new(h.clone());
    let (idx, &lambda) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .ok_or_else(|| Error::Numerical("empty matrix".into()))?;
    let mut v: CVec = eig.eigenvectors.column(idx).into_owned();
    let norm = v.norm();
    if !(norm.is_finite() && norm > 0.0) {
        return Err(Error::Numerical("eigen-solver returned a degenerate vector".into()));
    }
    v.unscale_mut(norm);
    Ok((lambda, fix_global_phase(v)))
}

/// Rotates `v` so that its largest-magnitude entry is real and positive.
pub fn fix_global_phase(mut v: CVec) -> CVec {
    let pivot = v.iter().copied().max_by(|a, b| a.norm_sqr().total_cmp(&b.norm_sqr())).unwrap_or(ONE);
    if pivot.norm() > 0.0 {
        let rot = pivot.conj() / pivot.norm();
        v.iter_mut().for_each(|z| *z *= rot);
    }
    v
}

/// `(ΦᴴΦ)⁻¹` for a full-column-rank `Φ`.
pub fn gram_inverse(phi: &CMat) -> Result<CMat> {
    let gram = phi.adjoint() * phi;
    let chol = Cholesky::new(gram).ok_or_else(|| Error::Singular("design matrix is not full column rank".into()))?;
    let diag = chol.l_dirty().diagonal();
    let max = diag.iter().map(|z| z.re).fold(0.0, f64::max);
    let min = diag.iter().map(|z| z.re).fold(f64::INFINITY, f64::min);
    if !(min > 1e-10 * max) {
        return Err(Error::Singular("design matrix is numerically rank deficient".into()));
    }
    Ok(chol.inverse())
}

/// 2-norm condition number of `Φ`, from the eigenvalues of `ΦᴴΦ`.
pub fn condition_number(phi: &CMat) -> f64 {
    let gram = phi.adjoint() * phi;
    let ev = SymmetricEigen::new(gram).eigenvalues;
    let max = ev.iter().cloned().fold(f64::MIN, f64::max);
    let min = ev.iter().cloned().fold(f64::MAX, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        (max / min).sqrt()
    }
}

pub fn diag_vec(v: &CVec) -> CMat {
    CMat::from_diagonal(v)
}
