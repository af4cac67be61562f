//! Thin complex linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

pub type CVec = DVector<Complex64>;
pub type CMat = DMatrix<Complex64>;

/// `a^H b`.
#[inline]
pub fn inner(a: &CVec, b: &CVec) -> Complex64 {
    a.dotc(b)
}

#[inline]
pub fn norm_sqr(v: &CVec) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

/// Unit-norm copy of `v`, or `None` when `v` is (numerically) zero.
pub fn normalized(v: &CVec) -> Option<CVec> {
    let n = norm_sqr(v).sqrt();
    if n > 0.0 && n.is_finite() {
        Some(v.unscale(n))
    } else {
        None
    }
}

/// `a a^H`.
pub fn outer(a: &CVec) -> CMat {
    a * a.adjoint()
}

/// Largest elementwise deviation `|A_ij - conj(A_ji)|`.
pub fn hermitian_defect(m: &CMat) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            let d = (m[(i, j)] - m[(j, i)].conj()).norm();
            worst = worst.max(d);
        }
    }
    worst
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(m: &CMat) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Eigenvalues of a real symmetric matrix, ascending.
pub fn symmetric_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Largest eigenpair of `Σ_i c_i v_i v_i^H`, computed in the span of the
/// `v_i` through a thin QR factorization. `None` for an empty or zero span.
pub fn low_rank_top_eigen(vectors: &[&CVec], coefs: &[f64]) -> Option<(f64, CVec)> {
    if vectors.is_empty() {
        return None;
    }
    let b = CMat::from_columns(vectors.iter().map(|v| (*v).clone()).collect::<Vec<_>>().as_slice());
    let qr = b.qr();
    let (q, r) = (qr.q(), qr.r());
    let d = CMat::from_diagonal(&CVec::from_iterator(coefs.len(), coefs.iter().map(|c| Complex64::new(*c, 0.0))));
    let mut c = &r * d * r.adjoint();
    c = (&c + c.adjoint()).scale(0.5);
    let eig = SymmetricEigen::new(c);
    let (i, lambda) = eig.eigenvalues.iter().copied().enumerate().max_by(|a, b| a.1.total_cmp(&b.1))?;
    let v = &q * eig.eigenvectors.column(i);
    normalized(&v).map(|v| (lambda, v))
}

pub fn all_finite(v: &CVec) -> bool {
    v.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}
