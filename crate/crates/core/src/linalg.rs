//! Dense matrix primitives: compact SVD with a fixed sign convention, exact and
//! smoothed orthogonalization, the Newton–Schulz polynomial iteration, and
//! seeded Gaussian / orthonormal sampling.
//!
//! Matrices are `nalgebra` values; SVDs are delegated to `faer`, whose
//! bidiagonal SVD stays accurate on rank-deficient input. Everything here is a
//! pure function of its arguments; randomness is owned per call through an
//! explicit seed.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::RANK_CUTOFF_REL;

pub type Matrix = DMatrix<f64>;

/// Fails when any entry is NaN or infinite.
pub fn ensure_finite(m: &Matrix, what: &str) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::invalid(format!("{what} has non-finite entries")))
    }
}

/// Builds a matrix from row-major data, rejecting non-finite entries.
pub fn matrix_from_rows(rows: usize, cols: usize, data: &[f64]) -> Result<Matrix> {
    if data.len() != rows * cols {
        return Err(Error::invalid(format!("expected {} entries for a {rows}x{cols} matrix, got {}", rows * cols, data.len())));
    }
    let m = Matrix::from_row_slice(rows, cols, data);
    ensure_finite(&m, "matrix")?;
    Ok(m)
}

/// `m = U diag(s) Vᵀ` with orthonormal columns in `u` (m×k) and `v` (n×k).
#[derive(Debug, Clone, PartialEq)]
pub struct SvdTriple {
    pub u: Matrix,
    pub s: Vec<f64>,
    pub v: Matrix,
}

impl SvdTriple {
    pub fn rank(&self) -> usize {
        self.s.len()
    }

    pub fn reconstruct(&self) -> Matrix {
        let mut us = self.u.clone();
        for (j, &sj) in self.s.iter().enumerate() {
            us.column_mut(j).scale_mut(sj);
        }
        us * self.v.transpose()
    }
}

fn to_faer(m: &Matrix) -> faer::Mat<f64> {
    faer::Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// Thin SVD keeping all min(m, n) values, sorted non-increasing.
///
/// Each left vector is flipped, together with its right vector, so that its
/// largest-magnitude entry is nonnegative (first index wins ties).
pub fn svd_thin(m: &Matrix) -> Result<SvdTriple> {
    ensure_finite(m, "svd input")?;
    let (rows, cols) = m.shape();
    let k = rows.min(cols);
    if k == 0 {
        return Ok(SvdTriple { u: Matrix::zeros(rows, 0), s: vec![], v: Matrix::zeros(cols, 0) });
    }
    let svd = to_faer(m).thin_svd().map_err(|e| Error::Decomposition(format!("SVD of {rows}x{cols} matrix failed: {e:?}")))?;
    let (fu, fs, fv) = (svd.U(), svd.S(), svd.V());
    let singular: Vec<f64> = (0..k).map(|i| fs[i]).collect();
    let u_raw = Matrix::from_fn(rows, k, |i, j| fu[(i, j)]);
    let v_raw = Matrix::from_fn(cols, k, |i, j| fv[(i, j)]);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| singular[j].total_cmp(&singular[i]).then(i.cmp(&j)));

    let mut u = Matrix::zeros(rows, k);
    let mut v = Matrix::zeros(cols, k);
    let mut s = Vec::with_capacity(k);
    for (dst, &src) in order.iter().enumerate() {
        let mut ucol = u_raw.column(src).clone_owned();
        let mut vcol = v_raw.column(src).clone_owned();
        let mut pivot = 0;
        for i in 1..rows {
            if ucol[i].abs() > ucol[pivot].abs() {
                pivot = i;
            }
        }
        if ucol[pivot] < 0.0 {
            ucol.neg_mut();
            vcol.neg_mut();
        }
        u.set_column(dst, &ucol);
        v.set_column(dst, &vcol);
        s.push(singular[src].max(0.0));
    }
    Ok(SvdTriple { u, s, v })
}

/// Compact SVD: the thin SVD restricted to values above the rank cutoff.
pub fn svd_compact(m: &Matrix) -> Result<SvdTriple> {
    let full = svd_thin(m)?;
    let smax = full.s.first().copied().unwrap_or(0.0);
    let k = full.s.iter().take_while(|&&x| x > RANK_CUTOFF_REL * smax && x > 0.0).count();
    Ok(SvdTriple { u: full.u.columns(0, k).into_owned(), s: full.s[..k].to_vec(), v: full.v.columns(0, k).into_owned() })
}

/// Singular values only, sorted non-increasing, all min(m, n) of them.
pub fn singular_values(m: &Matrix) -> Result<Vec<f64>> {
    ensure_finite(m, "svd input")?;
    let (rows, cols) = m.shape();
    if rows.min(cols) == 0 {
        return Ok(vec![]);
    }
    let mut s: Vec<f64> = to_faer(m)
        .singular_values()
        .map_err(|e| Error::Decomposition(format!("SVD of {rows}x{cols} matrix failed: {e:?}")))?
        .into_iter()
        .map(|x| x.max(0.0))
        .collect();
    s.sort_by(|a, b| b.total_cmp(a));
    Ok(s)
}

/// Spectral norm (largest singular value).
pub fn spectral_norm(m: &Matrix) -> Result<f64> {
    Ok(singular_values(m)?.first().copied().unwrap_or(0.0))
}

/// `𝒯(m) = U Vᵀ` over the compact SVD; the zero matrix maps to zero.
pub fn orthogonalize_exact(m: &Matrix) -> Result<Matrix> {
    let t = svd_compact(m)?;
    if t.rank() == 0 {
        return Ok(Matrix::zeros(m.nrows(), m.ncols()));
    }
    Ok(&t.u * t.v.transpose())
}

/// `𝒯_β(m) = (m mᵀ + βI)^{-1/2} m`: each singular value σ becomes σ/√(σ²+β).
pub fn orthogonalize_smoothed(m: &Matrix, beta: f64) -> Result<Matrix> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::invalid(format!("beta must be positive and finite, got {beta}")));
    }
    let mut t = svd_thin(m)?;
    if t.rank() == 0 {
        return Ok(Matrix::zeros(m.nrows(), m.ncols()));
    }
    for x in t.s.iter_mut() {
        *x /= (*x * *x + beta).sqrt();
    }
    Ok(t.reconstruct())
}

/// Coefficients of the odd quintic `p(x) = a x + b x³ + c x⁵`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NsCoeffs {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl NsCoeffs {
    /// The scalar map applied to each singular value by one iteration.
    pub fn apply(&self, x: f64) -> f64 {
        let x2 = x * x;
        x * (self.a + x2 * (self.b + self.c * x2))
    }
}

/// Newton–Schulz iteration from `X₀ = m/‖m‖_F`:
/// `X ← aX + b(XXᵀ)X + c(XXᵀ)²X`, repeated `iterations` times.
pub fn newton_schulz(m: &Matrix, iterations: usize, coeffs: NsCoeffs) -> Result<Matrix> {
    ensure_finite(m, "Newton–Schulz input")?;
    if iterations == 0 {
        return Err(Error::invalid("Newton–Schulz needs at least one iteration"));
    }
    let norm = m.norm();
    if norm == 0.0 {
        return Err(Error::invalid("Newton–Schulz input is the zero matrix"));
    }
    let mut x = m / norm;
    let wide = x.nrows() <= x.ncols();
    for _ in 0..iterations {
        // Work with the smaller Gram matrix; both forms are the same polynomial.
        if wide {
            let gram = &x * x.transpose();
            let poly = &gram * coeffs.b + &gram * &gram * coeffs.c;
            x = &x * coeffs.a + poly * &x;
        } else {
            let gram = x.transpose() * &x;
            let poly = &gram * coeffs.b + &gram * &gram * coeffs.c;
            x = &x * coeffs.a + &x * poly;
        }
    }
    Ok(x)
}

/// Standard normal entries, generated in row-major order from `seed`.
pub fn sample_gaussian(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data: Vec<f64> = (0..rows * cols).map(|_| StandardNormal.sample(&mut rng)).collect();
    Matrix::from_row_slice(rows, cols, &data)
}

/// Orthonormal columns from the QR factorization of a seeded Gaussian,
/// with column signs chosen so that R has a nonnegative diagonal.
pub fn sample_orthonormal(rows: usize, cols: usize, seed: u64) -> Result<Matrix> {
    if cols > rows {
        return Err(Error::invalid(format!("cannot fit {cols} orthonormal columns in dimension {rows}")));
    }
    Ok(orthonormalize(sample_gaussian(rows, cols, seed)))
}

/// Q of the thin QR of `m`, signed so that `diag(R) >= 0`.
pub(crate) fn orthonormalize(m: Matrix) -> Matrix {
    let qr = m.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..q.ncols() {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// R factor of the thin QR (k×cols, k = min(rows, cols)).
pub(crate) fn qr_r(m: &Matrix) -> Matrix {
    m.clone().qr().r()
}

/// Frobenius inner product.
pub fn frobenius_inner(a: &Matrix, b: &Matrix) -> f64 {
    a.dot(b)
}
