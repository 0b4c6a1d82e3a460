//! Dense complex linear algebra on top of `nalgebra`.
//!
//! Everything here works on Hermitian matrices. Inverses of positive definite
//! matrices are applied through a cached Cholesky factor ([`HpdFactor`]).

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use num_complex::Complex64;

use crate::{Error, Result};

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

pub fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

pub fn identity(m: usize) -> CMat {
    CMat::identity(m, m)
}

/// Largest absolute entry, used as a cheap scale for relative tolerances.
pub fn max_abs(a: &CMat) -> f64 {
    a.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

/// Largest deviation from Hermitian symmetry, relative to the largest entry.
pub fn hermitian_defect(a: &CMat) -> f64 {
    let n = a.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    let scale = max_abs(a);
    if scale == 0.0 {
        0.0
    } else {
        worst / scale
    }
}

pub fn is_hermitian(a: &CMat, rel_tol: f64) -> bool {
    a.is_square() && hermitian_defect(a) <= rel_tol
}

/// Replaces `a` by `(a + a^H) / 2`.
pub fn symmetrize(a: &mut CMat) {
    let n = a.nrows();
    for i in 0..n {
        a[(i, i)].im = 0.0;
        for j in (i + 1)..n {
            let v = (a[(i, j)] + a[(j, i)].conj()) * 0.5;
            a[(i, j)] = v;
            a[(j, i)] = v.conj();
        }
    }
}

/// Eigen-decomposition of a Hermitian matrix. Eigenvalues are not sorted.
pub fn hermitian_eigen(a: &CMat) -> (DVector<f64>, CMat) {
    let mut h = a.clone();
    symmetrize(&mut h);
    let eig = SymmetricEigen::new(h);
    (eig.eigenvalues, eig.eigenvectors)
}

pub fn hermitian_eigenvalues(a: &CMat) -> DVector<f64> {
    let mut h = a.clone();
    symmetrize(&mut h);
    h.symmetric_eigenvalues()
}

pub fn lambda_min(a: &CMat) -> f64 {
    hermitian_eigenvalues(a).min()
}

pub fn lambda_max(a: &CMat) -> f64 {
    hermitian_eigenvalues(a).max()
}

/// Spectral norm of a Hermitian matrix.
pub fn hermitian_norm2(a: &CMat) -> f64 {
    hermitian_eigenvalues(a).iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Hermitian square root of a PSD matrix.
///
/// Eigenvalues below zero but within `rel_tol * ||a||_2` are clipped to zero;
/// anything more negative is rejected.
pub fn psd_sqrt(a: &CMat, rel_tol: f64) -> Result<CMat> {
    let (vals, vecs) = hermitian_eigen(a);
    let scale = vals.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let min = vals.min();
    if min < -rel_tol * scale {
        return Err(Error::Indefinite {
            what: "square root of correlation matrix".into(),
            min_eigenvalue: min,
        });
    }
    let n = a.nrows();
    let mut scaled = vecs.clone();
    for (col, &v) in vals.iter().enumerate() {
        let s = v.max(0.0).sqrt();
        for row in 0..n {
            scaled[(row, col)] *= s;
        }
    }
    Ok(&scaled * vecs.adjoint())
}

/// `tr(a b)` without forming the product.
pub fn trace_product(a: &CMat, b: &CMat) -> Complex64 {
    debug_assert_eq!(a.ncols(), b.nrows());
    debug_assert_eq!(a.nrows(), b.ncols());
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

/// Hermitian form `x^H a y`.
pub fn sesquilinear(x: &CVec, a: &CMat, y: &CVec) -> Complex64 {
    x.dotc(&(a * y))
}

/// Adds `alpha * x x^H` to `a` in place.
pub fn add_outer(a: &mut CMat, x: &CVec, alpha: f64) {
    let n = x.len();
    for col in 0..n {
        let xc = x[col].conj() * alpha;
        for row in 0..n {
            a[(row, col)] += x[row] * xc;
        }
    }
}

/// Cholesky factor of a Hermitian positive definite matrix.
#[derive(Clone, Debug)]
pub struct HpdFactor {
    chol: Cholesky<Complex64, Dyn>,
}

impl HpdFactor {
    pub fn new(a: &CMat) -> Result<Self> {
        let mut h = a.clone();
        symmetrize(&mut h);
        Cholesky::new(h)
            .map(|chol| Self { chol })
            .ok_or_else(|| Error::NotPositiveDefinite(format!("{}x{} Hermitian matrix", a.nrows(), a.ncols())))
    }

    pub fn dim(&self) -> usize {
        self.chol.l_dirty().nrows()
    }

    pub fn solve_vec(&self, b: &CVec) -> CVec {
        self.chol.solve(b)
    }

    pub fn solve_mat(&self, b: &CMat) -> CMat {
        self.chol.solve(b)
    }

    /// `x^H a^{-1} x`, real and nonnegative for a PD `a`.
    pub fn inv_quad(&self, x: &CVec) -> f64 {
        x.dotc(&self.solve_vec(x)).re
    }

    /// Explicit inverse.
    pub fn inverse(&self) -> CMat {
        let mut inv = self.chol.inverse();
        symmetrize(&mut inv);
        inv
    }

    pub fn original(&self) -> CMat {
        let l = self.chol.l();
        &l * l.adjoint()
    }
}

/// Solves a small general complex system by Gaussian elimination with partial
/// pivoting (used for the L x L matrices of the SINR formulas).
pub fn small_inverse(a: &CMat) -> Result<CMat> {
    a.clone()
        .try_inverse()
        .ok_or_else(|| Error::InvalidInput(format!("singular {}x{} matrix", a.nrows(), a.ncols())))
}
