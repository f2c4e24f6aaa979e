//! FastICA with a `tanh` contrast, extracting components one at a time.
//!
//! Data are centered, whitened with `Q Gamma^{-1/2} Q^T` from the
//! eigendecomposition of the sample covariance (averaging over columns), then
//! each weight vector follows the fixed-point update
//! `w <- E{x g(w^T x)} - E{g'(w^T x)} w`, is Gram-Schmidt orthogonalized
//! against the components already accepted and renormalized.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::numerics::{eig_symmetric, CMatrix, RMatrix};
use crate::seed::{self, Seed};

/// Fresh random starts allowed per component after the first one fails.
pub const DEFAULT_RESTARTS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IcaParams {
    pub n_components: usize,
    /// Converged once `|<w_new, w_old>| > 1 - tol`.
    pub tol: f64,
    pub max_iter: usize,
    pub max_restarts: usize,
    pub seed: Seed,
}

impl IcaParams {
    pub fn new(n_components: usize, seed: Seed) -> Self {
        Self {
            n_components,
            tol: 1e-6,
            max_iter: 200,
            max_restarts: DEFAULT_RESTARTS,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_components == 0 {
            return Err(Error::Parameter("ICA needs at least one component".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Parameter(format!("ICA tolerance must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::Parameter("ICA max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SeparationResult {
    /// Estimated sources, `n_components x N`.
    pub sources: RMatrix,
    /// Rows are the weight vectors in the whitened space.
    pub unmixing: RMatrix,
    /// Whitening transform applied to the centered data.
    pub whitening: RMatrix,
    pub iterations_per_component: Vec<usize>,
    pub converged: bool,
}

/// Removes each row's mean.
pub fn center(x: &RMatrix) -> Result<(RMatrix, Vec<f64>)> {
    let (k, n) = (x.nrows(), x.ncols());
    if n < 2 {
        return Err(Error::Parameter(format!("centering needs at least 2 samples, got {n}")));
    }
    let means: Vec<f64> = (0..k).map(|i| (0..n).map(|j| x[(i, j)]).sum::<f64>() / n as f64).collect();
    Ok((RMatrix::from_fn(k, n, |i, j| x[(i, j)] - means[i]), means))
}

/// Sample covariance `X X^T / N` of already-centered rows.
pub fn covariance(x: &RMatrix) -> RMatrix {
    let n = x.ncols() as f64;
    let mut c = x * x.transpose();
    for j in 0..c.ncols() {
        for i in 0..c.nrows() {
            c[(i, j)] /= n;
        }
    }
    // exact symmetry for the eigensolver
    for j in 0..c.ncols() {
        for i in j + 1..c.nrows() {
            let v = 0.5 * (c[(i, j)] + c[(j, i)]);
            c[(i, j)] = v;
            c[(j, i)] = v;
        }
    }
    c
}

/// Whitens centered data; returns `(T x, T)` with `T = Q Gamma^{-1/2} Q^T`.
pub fn whiten(x: &RMatrix) -> Result<(RMatrix, RMatrix)> {
    let k = x.nrows();
    if k == 0 || x.ncols() < 2 {
        return Err(Error::Parameter(format!("whitening needs a non-empty row set and >= 2 samples, got {}x{}", k, x.ncols())));
    }
    let cov = covariance(x);
    let (q, gamma) = eig_symmetric(&cov)?;
    let largest = gamma.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let smallest = gamma.iter().copied().fold(f64::INFINITY, f64::min);
    if !(largest > 0.0) || smallest <= 1e-10 * largest {
        return Err(Error::DegenerateInput(format!(
            "covariance is rank-deficient (eigenvalues {smallest:e} .. {largest:e})"
        )));
    }
    let scaled = RMatrix::from_fn(k, k, |i, j| q[(i, j)] / gamma[j].sqrt());
    let transform = &scaled * q.transpose();
    Ok((&transform * x, transform))
}

/// Elementwise real part.
pub fn take_real(x: &CMatrix) -> RMatrix {
    RMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)].re)
}

fn orthogonalize(w: &mut [f64], accepted: &[Vec<f64>]) {
    for b in accepted {
        let dot: f64 = w.iter().zip(b).map(|(a, b)| a * b).sum();
        w.iter_mut().zip(b).for_each(|(a, b)| *a -= dot * b);
    }
}

fn normalize(w: &mut [f64]) -> bool {
    let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(norm > 1e-12) || !norm.is_finite() {
        return false;
    }
    w.iter_mut().for_each(|v| *v /= norm);
    true
}

/// One fixed-point update on whitened data `z`.
fn fixed_point_update(z: &RMatrix, w: &[f64]) -> Vec<f64> {
    let (k, n) = (z.nrows(), z.ncols());
    let mut next = vec![0.0; k];
    let mut mean_deriv = 0.0;
    for j in 0..n {
        let col = z.col(j);
        let proj: f64 = (0..k).map(|i| w[i] * col[i]).sum();
        let g = proj.tanh();
        mean_deriv += 1.0 - g * g;
        for i in 0..k {
            next[i] += col[i] * g;
        }
    }
    let inv_n = 1.0 / n as f64;
    mean_deriv *= inv_n;
    for i in 0..k {
        next[i] = next[i] * inv_n - mean_deriv * w[i];
    }
    next
}

/// Separates `n_components` sources from the rows of `x`.
pub fn fast_ica(x: &RMatrix, params: &IcaParams) -> Result<SeparationResult> {
    params.validate()?;
    let k = x.nrows();
    if params.n_components > k {
        return Err(Error::Parameter(format!(
            "{} components requested from {} mixtures",
            params.n_components, k
        )));
    }
    if x.ncols() < 2 || (0..x.ncols()).any(|j| x.col(j).iter().any(|v| !v.is_finite())) {
        return Err(Error::ContractViolation("ICA input must be finite with at least 2 samples".into()));
    }
    let (centered, _) = center(x)?;
    let (z, whitening) = whiten(&centered)?;

    let mut rng = seed::rng(params.seed);
    let mut accepted: Vec<Vec<f64>> = Vec::with_capacity(params.n_components);
    let mut iterations = Vec::with_capacity(params.n_components);
    let mut all_converged = true;

    for _ in 0..params.n_components {
        let mut total_iter = 0;
        let mut done = false;
        let mut last = Vec::new();
        for _attempt in 0..=params.max_restarts {
            let mut w: Vec<f64> = (0..k).map(|_| rng.sample(StandardNormal)).collect();
            orthogonalize(&mut w, &accepted);
            if !normalize(&mut w) {
                continue;
            }
            for _ in 0..params.max_iter {
                total_iter += 1;
                let mut next = fixed_point_update(&z, &w);
                orthogonalize(&mut next, &accepted);
                if !normalize(&mut next) {
                    break;
                }
                let agreement: f64 = next.iter().zip(&w).map(|(a, b)| a * b).sum();
                w = next;
                if agreement.abs() > 1.0 - params.tol {
                    done = true;
                    break;
                }
            }
            last = w;
            if done {
                break;
            }
        }
        if !done {
            all_converged = false;
            if last.is_empty() {
                // every start collapsed; fall back to any direction orthogonal to the rest
                last = fallback_direction(k, &accepted);
            }
        }
        iterations.push(total_iter);
        accepted.push(last);
    }

    let unmixing = RMatrix::from_fn(params.n_components, k, |i, j| accepted[i][j]);
    let sources = &unmixing * &z;
    Ok(SeparationResult {
        sources,
        unmixing,
        whitening,
        iterations_per_component: iterations,
        converged: all_converged,
    })
}

fn fallback_direction(k: usize, accepted: &[Vec<f64>]) -> Vec<f64> {
    for axis in 0..k {
        let mut w = vec![0.0; k];
        w[axis] = 1.0;
        orthogonalize(&mut w, accepted);
        if normalize(&mut w) {
            return w;
        }
    }
    vec![0.0; k]
}
