//! Dense matrix primitives shared by the rest of the crate.
//!
//! Every matrix is complex (`CMatrix`); real-valued quantities carry a zero
//! imaginary part. The DFT pair is unnormalized forward and `1/M` inverse, and
//! all transforms in the crate go through [`dft`]/[`idft`] or their column-wise
//! variants.
//!
//! Decompositions are delegated to `faer` (sequential; results do not depend on
//! the number of worker threads), transforms to `rustfft`.

use faer::{Mat, Side};
use rustfft::FftPlanner;

use crate::error::{Error, Result};

pub use num_complex::Complex64 as c64;

/// Complex dense matrix, column-major.
pub type CMatrix = Mat<c64>;
/// Real dense matrix, column-major.
pub type RMatrix = Mat<f64>;

/// Thin SVD `a = u * diag(sigma) * v^H` with `sigma` nonincreasing.
#[derive(Debug, Clone)]
pub struct SvdResult {
    pub u: CMatrix,
    pub sigma: Vec<f64>,
    pub v: CMatrix,
}

impl SvdResult {
    /// Rebuilds `u * diag(sigma) * v^H`.
    pub fn reconstruct(&self) -> CMatrix {
        self.reconstruct_with(|s| s)
    }

    /// Rebuilds the matrix after mapping every singular value through `f`.
    /// Columns whose mapped value is exactly zero are skipped.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> CMatrix {
        let (m, n) = (self.u.nrows(), self.v.nrows());
        let kept: Vec<(usize, f64)> =
            self.sigma.iter().enumerate().map(|(i, &s)| (i, f(s))).filter(|&(_, s)| s != 0.0).collect();
        if kept.is_empty() {
            return CMatrix::zeros(m, n);
        }
        let us = CMatrix::from_fn(m, kept.len(), |i, c| self.u[(i, kept[c].0)] * kept[c].1);
        let v = CMatrix::from_fn(n, kept.len(), |i, c| self.v[(i, kept[c].0)]);
        us * v.adjoint()
    }
}

/// The five matrix norms used by the solver and the power definitions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Norms {
    pub frobenius: f64,
    pub spectral: f64,
    pub nuclear: f64,
    pub l1: f64,
    pub linf: f64,
}

pub(crate) fn ensure_finite(a: &CMatrix, context: &'static str) -> Result<()> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Err(Error::dims(context, "non-empty matrix", format!("{}x{}", a.nrows(), a.ncols())));
    }
    for j in 0..a.ncols() {
        if a.col_as_slice(j).iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::ContractViolation(format!("{context}: matrix has non-finite entries")));
        }
    }
    Ok(())
}

/// Thin singular value decomposition.
pub fn svd(a: &CMatrix) -> Result<SvdResult> {
    ensure_finite(a, "svd")?;
    let dec = a
        .thin_svd()
        .map_err(|e| Error::NumericalFailure(format!("SVD did not converge: {e:?}")))?;
    let s = dec.S().column_vector();
    let sigma: Vec<f64> = (0..s.nrows()).map(|i| s[i].re.max(0.0)).collect();
    let mut out = SvdResult {
        u: dec.U().to_owned(),
        sigma,
        v: dec.V().to_owned(),
    };
    if out.sigma.windows(2).any(|w| w[0] < w[1]) {
        sort_svd(&mut out);
    }
    Ok(out)
}

fn sort_svd(res: &mut SvdResult) {
    let mut order: Vec<usize> = (0..res.sigma.len()).collect();
    order.sort_by(|&a, &b| res.sigma[b].total_cmp(&res.sigma[a]));
    let u = CMatrix::from_fn(res.u.nrows(), order.len(), |i, j| res.u[(i, order[j])]);
    let v = CMatrix::from_fn(res.v.nrows(), order.len(), |i, j| res.v[(i, order[j])]);
    res.sigma = order.iter().map(|&k| res.sigma[k]).collect();
    res.u = u;
    res.v = v;
}

/// Singular values only, nonincreasing.
pub fn singular_values(a: &CMatrix) -> Result<Vec<f64>> {
    ensure_finite(a, "singular_values")?;
    let mut s = a
        .singular_values()
        .map_err(|e| Error::NumericalFailure(format!("SVD did not converge: {e:?}")))?;
    s.sort_by(|x, y| y.total_cmp(x));
    Ok(s)
}

const HERMITIAN_TOL: f64 = 1e-10;

/// Eigendecomposition of a Hermitian matrix, `a = q * diag(gamma) * q^H`.
/// Eigenvalues are returned in nondecreasing order.
pub fn eig_hermitian(a: &CMatrix) -> Result<(CMatrix, Vec<f64>)> {
    ensure_finite(a, "eig_hermitian")?;
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::dims("eig_hermitian", "square matrix", format!("{}x{}", n, a.ncols())));
    }
    let scale = linf_norm(a).max(1.0);
    for j in 0..n {
        for i in j..n {
            if (a[(i, j)] - a[(j, i)].conj()).norm() > HERMITIAN_TOL * scale {
                return Err(Error::ContractViolation(format!(
                    "eig_hermitian: entry ({i},{j}) breaks Hermitian symmetry"
                )));
            }
        }
    }
    let dec = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::NumericalFailure(format!("eigendecomposition failed: {e:?}")))?;
    let s = dec.S().column_vector();
    let gamma = (0..n).map(|i| s[i].re).collect();
    Ok((dec.U().to_owned(), gamma))
}

/// Real symmetric counterpart of [`eig_hermitian`].
pub fn eig_symmetric(a: &RMatrix) -> Result<(RMatrix, Vec<f64>)> {
    let n = a.nrows();
    if a.ncols() != n || n == 0 {
        return Err(Error::dims("eig_symmetric", "non-empty square matrix", format!("{}x{}", n, a.ncols())));
    }
    let scale = (0..n)
        .flat_map(|j| (0..n).map(move |i| (i, j)))
        .map(|(i, j)| a[(i, j)].abs())
        .fold(1.0_f64, f64::max);
    for j in 0..n {
        for i in j..n {
            let (x, y) = (a[(i, j)], a[(j, i)]);
            if !x.is_finite() || (x - y).abs() > HERMITIAN_TOL * scale {
                return Err(Error::ContractViolation(format!(
                    "eig_symmetric: entry ({i},{j}) is non-finite or breaks symmetry"
                )));
            }
        }
    }
    let dec = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::NumericalFailure(format!("eigendecomposition failed: {e:?}")))?;
    let s = dec.S().column_vector();
    let gamma = (0..n).map(|i| s[i]).collect();
    Ok((dec.U().to_owned(), gamma))
}

/// Forward DFT, unscaled: `X[k] = sum_m x[m] exp(-2 pi i k m / M)`.
pub fn dft(x: &[c64]) -> Vec<c64> {
    let mut buf = x.to_vec();
    if !buf.is_empty() {
        FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
    }
    buf
}

/// Inverse DFT, scaled by `1/M` so that `idft(dft(x)) == x`.
pub fn idft(x: &[c64]) -> Vec<c64> {
    let mut buf = x.to_vec();
    if !buf.is_empty() {
        FftPlanner::new().plan_fft_inverse(buf.len()).process(&mut buf);
        let scale = 1.0 / buf.len() as f64;
        buf.iter_mut().for_each(|z| *z *= scale);
    }
    buf
}

/// Applies [`dft`] to every column of `a`.
pub fn dft_columns(a: &CMatrix) -> CMatrix {
    let mut out = a.clone();
    let m = out.nrows();
    let plan = FftPlanner::new().plan_fft_forward(m);
    for j in 0..out.ncols() {
        plan.process(out.col_as_slice_mut(j));
    }
    out
}

/// Applies [`idft`] to every column of `a`.
pub fn idft_columns(a: &CMatrix) -> CMatrix {
    let mut out = a.clone();
    let m = out.nrows();
    let plan = FftPlanner::new().plan_fft_inverse(m);
    let scale = 1.0 / m as f64;
    for j in 0..out.ncols() {
        let col = out.col_as_slice_mut(j);
        plan.process(col);
        col.iter_mut().for_each(|z| *z *= scale);
    }
    out
}

/// `m x m` circulant matrix whose first column is `h` zero-padded to `m`;
/// column `j` is the first column cyclically shifted down by `j`.
pub fn circulant(h: &[c64], m: usize) -> Result<CMatrix> {
    if h.is_empty() || h.len() > m {
        return Err(Error::dims("circulant", format!("1..={m} taps"), h.len()));
    }
    Ok(CMatrix::from_fn(m, m, |i, j| {
        let k = (i + m - j) % m;
        h.get(k).copied().unwrap_or_default()
    }))
}

/// Shrinkage `(a/|a|) max(|a| - mu, 0)`; reduces to `sgn(a) max(|a|-mu, 0)`
/// on the real axis.
#[inline]
pub fn soft_threshold(a: c64, mu: f64) -> c64 {
    let mag = a.norm();
    if mag <= mu || mag == 0.0 {
        c64::new(0.0, 0.0)
    } else {
        a * ((mag - mu) / mag)
    }
}

/// Elementwise [`soft_threshold`].
pub fn soft_threshold_matrix(a: &CMatrix, mu: f64) -> CMatrix {
    CMatrix::from_fn(a.nrows(), a.ncols(), |i, j| soft_threshold(a[(i, j)], mu))
}

pub fn frobenius_norm(a: &CMatrix) -> f64 {
    (0..a.ncols())
        .map(|j| a.col_as_slice(j).iter().map(|z| z.norm_sqr()).sum::<f64>())
        .sum::<f64>()
        .sqrt()
}

/// Largest entry magnitude.
pub fn linf_norm(a: &CMatrix) -> f64 {
    (0..a.ncols())
        .flat_map(|j| a.col_as_slice(j).iter().map(|z| z.norm()))
        .fold(0.0, f64::max)
}

/// Sum of entry magnitudes.
pub fn l1_norm(a: &CMatrix) -> f64 {
    (0..a.ncols())
        .map(|j| a.col_as_slice(j).iter().map(|z| z.norm()).sum::<f64>())
        .sum()
}

/// Largest singular value.
pub fn spectral_norm(a: &CMatrix) -> Result<f64> {
    if linf_norm(a) == 0.0 {
        return Ok(0.0);
    }
    Ok(singular_values(a)?.first().copied().unwrap_or(0.0))
}

pub fn norms(a: &CMatrix) -> Result<Norms> {
    ensure_finite(a, "norms")?;
    let sigma = if linf_norm(a) == 0.0 {
        Vec::new()
    } else {
        singular_values(a)?
    };
    Ok(Norms {
        frobenius: frobenius_norm(a),
        spectral: sigma.first().copied().unwrap_or(0.0),
        nuclear: sigma.iter().sum(),
        l1: l1_norm(a),
        linf: linf_norm(a),
    })
}

/// Lifts a real matrix into the complex field.
pub fn to_complex(a: &RMatrix) -> CMatrix {
    CMatrix::from_fn(a.nrows(), a.ncols(), |i, j| c64::new(a[(i, j)], 0.0))
}

/// `a + b` for equally-shaped matrices.
pub(crate) fn add(a: &CMatrix, b: &CMatrix) -> CMatrix {
    CMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] + b[(i, j)])
}

/// `a - b` for equally-shaped matrices.
#[cfg(test)]
pub(crate) fn sub(a: &CMatrix, b: &CMatrix) -> CMatrix {
    CMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] - b[(i, j)])
}

pub(crate) fn scale(a: &CMatrix, s: f64) -> CMatrix {
    CMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] * s)
}

pub(crate) fn same_shape(a: &CMatrix, b: &CMatrix, context: &'static str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::dims(
            context,
            format!("{}x{}", a.nrows(), a.ncols()),
            format!("{}x{}", b.nrows(), b.ncols()),
        ));
    }
    Ok(())
}
