//! Robust PCA by the inexact augmented Lagrangian method.
//!
//! Solves `min ||L||_* + lambda ||R||_1  s.t.  Q = L + R` by alternating a
//! singular value thresholding step for `L`, an entrywise shrinkage step for
//! `R` and a dual ascent step for the multiplier, with a geometrically growing
//! and capped penalty `mu`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{
    ensure_finite, frobenius_norm, linf_norm, soft_threshold, spectral_norm, svd, CMatrix,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RpcaParams {
    /// Sparsity weight; `None` selects `1/sqrt(M)` with `M` the row count.
    pub lambda: Option<f64>,
    /// `mu_0 = mu0_factor / ||Q||_2`.
    pub mu0_factor: f64,
    /// Penalty growth `rho` per iteration.
    pub mu_growth: f64,
    /// `mu` is capped at `mu_cap_factor * mu_0`.
    pub mu_cap_factor: f64,
    /// Stop when `||Q - L - R||_F / ||Q||_F < tol`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for RpcaParams {
    fn default() -> Self {
        Self {
            lambda: None,
            mu0_factor: 1.25,
            mu_growth: 1.5,
            mu_cap_factor: 1e7,
            tol: 1e-7,
            max_iter: 500,
        }
    }
}

impl RpcaParams {
    pub fn validate(&self) -> Result<()> {
        if let Some(l) = self.lambda {
            if !(l > 0.0 && l.is_finite()) {
                return Err(Error::Parameter(format!("lambda must be positive, got {l}")));
            }
        }
        if !(self.mu_growth > 1.0) {
            return Err(Error::Parameter(format!("mu growth must exceed 1, got {}", self.mu_growth)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Parameter(format!("tolerance must be positive, got {}", self.tol)));
        }
        if !(self.mu0_factor > 0.0) || !(self.mu_cap_factor >= 1.0) {
            return Err(Error::Parameter("mu schedule factors must be positive, cap >= 1".into()));
        }
        Ok(())
    }

    /// Weight actually used for an input with `rows` rows.
    pub fn lambda_for(&self, rows: usize) -> f64 {
        self.lambda.unwrap_or(1.0 / (rows as f64).sqrt())
    }
}

/// Low-rank plus sparse split of the solver input.
#[derive(Debug, Clone)]
pub struct DecompositionResult {
    pub low_rank: CMatrix,
    pub sparse: CMatrix,
    pub iterations: usize,
    /// Relative feasibility residual after each iteration.
    pub residual_history: Vec<f64>,
    pub converged: bool,
}

/// Solver iterate `(L_k, R_k, Lambda_k, mu_k)`.
#[derive(Debug, Clone)]
pub struct IalmState {
    pub low_rank: CMatrix,
    pub sparse: CMatrix,
    pub multiplier: CMatrix,
    pub mu: f64,
}

impl IalmState {
    /// Standard initialization: `Lambda_0 = Q / max(||Q||_2, ||Q||_inf / lambda)`,
    /// `R_0 = 0`, `mu_0 = mu0_factor / ||Q||_2`.
    pub fn initial(q: &CMatrix, lambda: f64, params: &RpcaParams) -> Result<Self> {
        let norm2 = spectral_norm(q)?;
        let dual = norm2.max(linf_norm(q) / lambda);
        Ok(Self {
            low_rank: CMatrix::zeros(q.nrows(), q.ncols()),
            sparse: CMatrix::zeros(q.nrows(), q.ncols()),
            multiplier: crate::numerics::scale(q, 1.0 / dual),
            mu: params.mu0_factor / norm2,
        })
    }
}

/// Singular value thresholding: the proximal map of `mu_inv * ||.||_*`.
pub fn svt_step(a: &CMatrix, mu_inv: f64) -> Result<CMatrix> {
    if !(mu_inv >= 0.0) {
        return Err(Error::Parameter(format!("threshold must be nonnegative, got {mu_inv}")));
    }
    if mu_inv == 0.0 {
        return Ok(a.clone());
    }
    let dec = svd(a)?;
    Ok(dec.reconstruct_with(|s| (s - mu_inv).max(0.0)))
}

/// One iALM sweep at fixed `mu`: low-rank step, sparse step, multiplier step.
/// The returned state still carries the old `mu`; the caller advances it.
pub fn ialm_step(q: &CMatrix, state: &IalmState, lambda: f64) -> Result<IalmState> {
    let mu = state.mu;
    let mu_inv = 1.0 / mu;
    let (m, n) = (q.nrows(), q.ncols());

    let svt_input = CMatrix::from_fn(m, n, |i, j| {
        q[(i, j)] - state.sparse[(i, j)] + state.multiplier[(i, j)] * mu_inv
    });
    let low_rank = svt_step(&svt_input, mu_inv)?;

    let shrink = lambda * mu_inv;
    let sparse = CMatrix::from_fn(m, n, |i, j| {
        soft_threshold(q[(i, j)] - low_rank[(i, j)] + state.multiplier[(i, j)] * mu_inv, shrink)
    });

    let multiplier = CMatrix::from_fn(m, n, |i, j| {
        state.multiplier[(i, j)] + (q[(i, j)] - low_rank[(i, j)] - sparse[(i, j)]) * mu
    });

    Ok(IalmState {
        low_rank,
        sparse,
        multiplier,
        mu,
    })
}

fn relative_residual(q: &CMatrix, l: &CMatrix, r: &CMatrix, q_norm: f64) -> f64 {
    let mut acc = 0.0;
    for j in 0..q.ncols() {
        let (qc, lc, rc) = (q.col_as_slice(j), l.col_as_slice(j), r.col_as_slice(j));
        for i in 0..qc.len() {
            acc += (qc[i] - lc[i] - rc[i]).norm_sqr();
        }
    }
    acc.sqrt() / q_norm
}

/// Decomposes `q` into low-rank and sparse parts.
///
/// Hitting `max_iter` is not an error: the last iterate comes back with
/// `converged = false`.
pub fn rpca_ialm(q: &CMatrix, params: &RpcaParams) -> Result<DecompositionResult> {
    params.validate()?;
    ensure_finite(q, "rpca_ialm")?;
    let q_norm = frobenius_norm(q);
    if q_norm == 0.0 {
        return Ok(DecompositionResult {
            low_rank: CMatrix::zeros(q.nrows(), q.ncols()),
            sparse: CMatrix::zeros(q.nrows(), q.ncols()),
            iterations: 0,
            residual_history: Vec::new(),
            converged: true,
        });
    }

    let lambda = params.lambda_for(q.nrows());
    let mut state = IalmState::initial(q, lambda, params)?;
    let mu_cap = params.mu_cap_factor * state.mu;
    let mut history = Vec::new();
    let mut converged = false;

    while history.len() < params.max_iter {
        state = ialm_step(q, &state, lambda)?;
        let residual = relative_residual(q, &state.low_rank, &state.sparse, q_norm);
        history.push(residual);
        if residual < params.tol {
            converged = true;
            break;
        }
        state.mu = (state.mu * params.mu_growth).min(mu_cap);
    }

    Ok(DecompositionResult {
        iterations: history.len(),
        low_rank: state.low_rank,
        sparse: state.sparse,
        residual_history: history,
        converged,
    })
}

/// `||L||_* + lambda ||R||_1`, the quantity the solver minimizes.
pub fn objective(low_rank: &CMatrix, sparse: &CMatrix, lambda: f64) -> Result<f64> {
    let nuclear: f64 = if linf_norm(low_rank) == 0.0 {
        0.0
    } else {
        crate::numerics::singular_values(low_rank)?.iter().sum()
    };
    Ok(nuclear + lambda * crate::numerics::l1_norm(sparse))
}
