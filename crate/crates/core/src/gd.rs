//! Baseline recovery: fixed-step gradient ascent on the one-bit log-likelihood.
//!
//! The iteration is `x <- x + step * grad_ll(x)`, run for exactly `max_iters`
//! updates from `x0` (no early stopping: the method is compared against the
//! unfolded network under a fixed complexity budget).

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::likelihood::{grad_log_likelihood, log_likelihood};
use crate::linalg::{self, axpy};
use crate::model::ProblemInstance;

#[derive(Debug, Clone, PartialEq)]
pub struct GdConfig {
    /// Fixed step size, > 0. Benchmark default 0.01.
    pub step: f64,
    /// Number of gradient updates, >= 1.
    pub max_iters: usize,
    /// Starting point; `None` means all-zeros, matching the network's x^(1).
    pub x0: Option<Vec<f64>>,
    /// Record the log-likelihood before the first and after every update.
    pub record_trajectory: bool,
}

impl GdConfig {
    pub fn new(step: f64, max_iters: usize) -> Self {
        GdConfig {
            step,
            max_iters,
            x0: None,
            record_trajectory: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::Config("step must be positive and finite"));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GdResult {
    pub x_hat: Vec<f64>,
    pub iters_run: usize,
    /// Log-likelihood at x0 and after each update (length `iters_run + 1`),
    /// when recording was requested.
    pub ll_trajectory: Option<Vec<f64>>,
    /// Norm of the last gradient evaluated (the one applied by the final
    /// update; evaluating at x_hat itself would break the budget).
    pub grad_norm_final: f64,
    /// Number of gradient evaluations performed; always equals `max_iters`.
    pub grad_evals: usize,
}

/// Runs `cfg.max_iters` gradient-ascent updates and returns the final iterate.
pub fn gd_recover(inst: &ProblemInstance, cfg: &GdConfig) -> Result<GdResult> {
    cfg.validate()?;
    let n = inst.h.cols();
    let mut x = match &cfg.x0 {
        Some(x0) => {
            if x0.len() != n {
                return Err(Error::DimMismatch {
                    what: "x0",
                    expected: n,
                    got: x0.len(),
                });
            }
            x0.clone()
        }
        None => vec![0.0; n],
    };

    let mut trajectory = if cfg.record_trajectory {
        let mut t = Vec::with_capacity(cfg.max_iters + 1);
        t.push(log_likelihood(inst, &x)?);
        Some(t)
    } else {
        None
    };

    let mut grad_evals = 0usize;
    let mut grad_norm_final = 0.0;
    for iter in 1..=cfg.max_iters {
        let g = grad_log_likelihood(inst, &x)?;
        grad_evals += 1;
        grad_norm_final = linalg::norm2(&g);
        axpy(&mut x, cfg.step, &g);
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::Diverged { iter });
        }
        if let Some(t) = trajectory.as_mut() {
            t.push(log_likelihood(inst, &x)?);
        }
    }

    Ok(GdResult {
        x_hat: x,
        iters_run: cfg.max_iters,
        ll_trajectory: trajectory,
        grad_norm_final,
        grad_evals,
    })
}

/// `||grad_ll(x)||_2`: zero exactly at stationary points of the likelihood.
pub fn stationarity_residual(inst: &ProblemInstance, x: &[f64]) -> Result<f64> {
    Ok(linalg::norm2(&grad_log_likelihood(inst, x)?))
}
