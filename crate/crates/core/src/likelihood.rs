//! Gaussian tail kernels and the one-bit log-likelihood.
//!
//! The likelihood of a sign observation is `Q(z)` with `z = (r/sigma)(tau - h'x)`,
//! and its gradient runs through `eta(z) = -phi(z)/Q(z)`, the negated inverse
//! Mills ratio. `Q` underflows to zero near `z = 38`, so every ratio against it
//! is routed through the scaled complementary error function
//! `erfcx(x) = exp(x^2) * erfc(x)`, which stays well-scaled there. Naive
//! pointwise division `Q'(z)/Q(z)` is deliberately absent from these paths.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::model::ProblemInstance;

const SQRT_2: f64 = core::f64::consts::SQRT_2;
const SQRT_PI: f64 = 1.772_453_850_905_516;
/// sqrt(2/pi) = -eta(0).
const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;

/// Arguments beyond this magnitude bypass the erfcx kernel: the positive side
/// uses the two-term asymptote `-x - 1/x`, the negative side the exact limit 0.
/// Keeps gradients finite and bounded when training drives `z` far out.
const ETA_CLAMP: f64 = 30.0;

/// Scaled complementary error function `exp(x^2) * erfc(x)`.
///
/// Relative error is a few 1e-14 over the range used by the likelihood
/// kernels (|x| <= 21.3, where the `exp` argument stays below 455). Overflows
/// to +inf below x ~ -26.6, like `exp(x^2)` itself.
pub fn erfcx(x: f64) -> f64 {
    if x < 0.0 {
        // erfc(x) = 2 - erfc(-x); the exp term dominates, no cancellation.
        return 2.0 * math::exp(x * x) - erfcx(-x);
    }
    if x <= 26.0 {
        // Both factors are representable here (erfc underflows only past 26.6).
        math::exp(x * x) * math::erfc(x)
    } else {
        // Asymptotic series 1/(x sqrt(pi)) * sum_k (-1)^k (2k-1)!! q^k with
        // q = 1/(2x^2); truncation error < 2e-18 relative for x >= 26.
        let q = 0.5 / (x * x);
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..=6u32 {
            term *= -(2.0 * k as f64 - 1.0) * q;
            sum += term;
        }
        sum / (x * SQRT_PI)
    }
}

/// Upper tail `Q(x) = 1 - Phi(x)` of the standard normal, via `erfc(x/sqrt(2))/2`.
pub fn q_tail(x: f64) -> f64 {
    0.5 * math::erfc(x / SQRT_2)
}

/// `ln Q(x)`, stable on both tails.
///
/// For x > 0 the tail is expanded as `-x^2/2 - ln 2 + ln erfcx(x/sqrt(2))`;
/// for x <= 0 as `ln(1 - Q(-x))`. Finite for any argument with `x^2`
/// representable; never -inf in the working range.
pub fn log_q_tail(x: f64) -> f64 {
    if x <= 0.0 {
        math::ln_1p(-q_tail(-x))
    } else {
        -0.5 * x * x - core::f64::consts::LN_2 + math::ln(erfcx(x / SQRT_2))
    }
}

/// `eta(x) = Q'(x)/Q(x) = -phi(x)/Q(x)`, the negated inverse Mills ratio.
///
/// Strictly negative and strictly decreasing; `eta(x) ~ -x - 1/x` for large
/// positive x. Outside `|x| <= 30` the asymptote (positive side) or the zero
/// limit (negative side) is returned, see `ETA_CLAMP`.
pub fn eta(x: f64) -> f64 {
    if x > ETA_CLAMP {
        -x - 1.0 / x
    } else if x < -ETA_CLAMP {
        0.0
    } else {
        -SQRT_2_OVER_PI / erfcx(x / SQRT_2)
    }
}

/// Derivative of `eta`, branch-consistent with the clamped `eta` above so that
/// finite differences of any composed function agree with the analytic chain.
pub fn eta_prime(x: f64) -> f64 {
    if x > ETA_CLAMP {
        -1.0 + 1.0 / (x * x)
    } else if x < -ETA_CLAMP {
        0.0
    } else {
        eta_prime_given(x, eta(x))
    }
}

/// `eta'(x)` when `eta(x)` is already known: `eta * (-x - eta)` on the erfcx
/// branch. Callers must pass an `eta_x` produced by [`eta`] at the same `x`.
pub fn eta_prime_given(x: f64, eta_x: f64) -> f64 {
    if x > ETA_CLAMP {
        -1.0 + 1.0 / (x * x)
    } else if x < -ETA_CLAMP {
        0.0
    } else {
        eta_x * (-x - eta_x)
    }
}

/// Elementwise [`eta`].
pub fn eta_vec(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&x| eta(x)).collect()
}

/// The semi-whitened one-bit operator: a diagonal with entries `d_i = r_i / sigma_i`,
/// applied as an elementwise scaling.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledOneBitOperator {
    d: Vec<f64>,
}

impl ScaledOneBitOperator {
    pub fn from_instance(inst: &ProblemInstance) -> Self {
        let d = inst
            .r
            .iter()
            .zip(inst.sigma2.iter())
            .map(|(&r, &s2)| r / math::sqrt(s2))
            .collect();
        ScaledOneBitOperator { d }
    }

    pub fn len(&self) -> usize {
        self.d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d.is_empty()
    }

    /// The diagonal entries `r_i / sigma_i`.
    pub fn entries(&self) -> &[f64] {
        &self.d
    }

    /// `out_i = d_i * v_i`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.d.len());
        self.d.iter().zip(v.iter()).map(|(d, v)| d * v).collect()
    }

    pub fn apply_into(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.d.len());
        debug_assert_eq!(out.len(), self.d.len());
        for ((o, &d), &x) in out.iter_mut().zip(self.d.iter()).zip(v.iter()) {
            *o = d * x;
        }
    }
}

fn check_x_len(inst: &ProblemInstance, x: &[f64]) -> Result<()> {
    if x.len() != inst.h.cols() {
        return Err(Error::DimMismatch {
            what: "x",
            expected: inst.h.cols(),
            got: x.len(),
        });
    }
    Ok(())
}

/// Whitened residual `z = Omega~ (tau - H x)`, the argument of the tail kernels.
pub fn whitened_residual(inst: &ProblemInstance, x: &[f64]) -> Result<Vec<f64>> {
    check_x_len(inst, x)?;
    let op = ScaledOneBitOperator::from_instance(inst);
    let hx = inst.h.matvec(x);
    let u: Vec<f64> = inst.tau.iter().zip(hx.iter()).map(|(t, y)| t - y).collect();
    Ok(op.apply(&u))
}

/// Log-likelihood `sum_i ln Q((r_i/sigma_i)(tau_i - h_i'x))`. Always <= 0.
pub fn log_likelihood(inst: &ProblemInstance, x: &[f64]) -> Result<f64> {
    let z = whitened_residual(inst, x)?;
    Ok(z.iter().map(|&zi| log_q_tail(zi)).sum())
}

/// Gradient of the log-likelihood: `-H' Omega~ eta(Omega~ (tau - H x))`.
pub fn grad_log_likelihood(inst: &ProblemInstance, x: &[f64]) -> Result<Vec<f64>> {
    let z = whitened_residual(inst, x)?;
    let op = ScaledOneBitOperator::from_instance(inst);
    let w: Vec<f64> = op
        .entries()
        .iter()
        .zip(z.iter())
        .map(|(&d, &zi)| d * eta(zi))
        .collect();
    let mut g = inst.h.tr_matvec(&w);
    for gj in g.iter_mut() {
        *gj = -*gj;
    }
    Ok(g)
}
