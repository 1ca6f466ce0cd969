//! Measurement model, synthetic data generation, and the NMSE metric.
//!
//! A problem instance is `y = H x + n`, observed only through
//! `r = sign(y - tau)` with per-measurement thresholds and noise variances.

use alloc::vec::Vec;

use rand::distr::{Distribution, Uniform};
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::math;
use crate::rng::{self, Prng};

/// Problem sizes: `m` one-bit measurements of an `n`-dimensional unknown.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProblemDims {
    pub m: usize,
    pub n: usize,
}

impl ProblemDims {
    pub fn new(m: usize, n: usize) -> Result<Self> {
        if m == 0 || n == 0 {
            return Err(Error::Config("dims must satisfy m >= 1 and n >= 1"));
        }
        Ok(ProblemDims { m, n })
    }
}

/// One synthetic recovery problem: sensing matrix, noise scales, thresholds,
/// ground truth, and the observed signs.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    /// Sensing matrix, `m x n`.
    pub h: Mat,
    /// Per-measurement noise variances, all > 0.
    pub sigma2: Vec<f64>,
    /// Quantization thresholds.
    pub tau: Vec<f64>,
    /// The unknown the instance was generated from.
    pub x_true: Vec<f64>,
    /// One-bit observations, entries exactly +1.0 or -1.0.
    pub r: Vec<f64>,
}

impl ProblemInstance {
    pub fn dims(&self) -> ProblemDims {
        ProblemDims {
            m: self.h.rows(),
            n: self.h.cols(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.h.rows();
        for (name, len) in [
            ("sigma2", self.sigma2.len()),
            ("tau", self.tau.len()),
            ("r", self.r.len()),
        ] {
            if len != m {
                return Err(Error::DimMismatch {
                    what: name,
                    expected: m,
                    got: len,
                });
            }
        }
        if self.x_true.len() != self.h.cols() {
            return Err(Error::DimMismatch {
                what: "x_true",
                expected: self.h.cols(),
                got: self.x_true.len(),
            });
        }
        if !self.sigma2.iter().all(|&s| s > 0.0 && s.is_finite()) {
            return Err(Error::Config("sigma2 entries must be positive and finite"));
        }
        if !self.r.iter().all(|&r| r == 1.0 || r == -1.0) {
            return Err(Error::Config("r entries must be +1 or -1"));
        }
        Ok(())
    }
}

/// Bounds and seed for synthetic instance generation.
///
/// The defaults are the benchmark presets: x ~ U(0,1) (the network's final
/// ReLU restricts recovery to nonnegative signals), tau ~ U(-1,4) bracketing
/// typical `Hx` values for standard-normal rows, sigma^2 ~ U(0.1,1).
#[derive(Debug, Clone, PartialEq)]
pub struct GenConfig {
    pub dims: ProblemDims,
    pub x_low: f64,
    pub x_high: f64,
    pub tau_low: f64,
    pub tau_high: f64,
    pub noise_low: f64,
    pub noise_high: f64,
    pub seed: u64,
}

impl GenConfig {
    pub fn new(dims: ProblemDims) -> Self {
        GenConfig {
            dims,
            x_low: 0.0,
            x_high: 1.0,
            tau_low: -1.0,
            tau_high: 4.0,
            noise_low: 0.1,
            noise_high: 1.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.m == 0 || self.dims.n == 0 {
            return Err(Error::Config("dims must satisfy m >= 1 and n >= 1"));
        }
        if !(self.x_low < self.x_high) {
            return Err(Error::Config("x bounds must satisfy x_low < x_high"));
        }
        if self.x_low < 0.0 {
            return Err(Error::Config(
                "x support must be nonnegative (final ReLU cannot represent negative signals)",
            ));
        }
        if !(self.tau_low < self.tau_high) {
            return Err(Error::Config("tau bounds must satisfy tau_low < tau_high"));
        }
        if !(self.noise_low > 0.0 && self.noise_low < self.noise_high) {
            return Err(Error::Config(
                "noise bounds must satisfy 0 < noise_low < noise_high",
            ));
        }
        Ok(())
    }
}

/// Elementwise `sign(y - tau)` with the tie `y = tau` mapped to +1.
pub fn quantize(y: &[f64], tau: &[f64]) -> Result<Vec<f64>> {
    if y.len() != tau.len() {
        return Err(Error::DimMismatch {
            what: "quantize thresholds",
            expected: y.len(),
            got: tau.len(),
        });
    }
    Ok(y.iter()
        .zip(tau.iter())
        .map(|(&yi, &ti)| if yi >= ti { 1.0 } else { -1.0 })
        .collect())
}

/// Normalized mean square error `||x_true - x_hat||^2 / ||x_true||^2`.
pub fn nmse(x_true: &[f64], x_hat: &[f64]) -> Result<f64> {
    if x_true.len() != x_hat.len() {
        return Err(Error::DimMismatch {
            what: "nmse estimate",
            expected: x_true.len(),
            got: x_hat.len(),
        });
    }
    let denom: f64 = x_true.iter().map(|v| v * v).sum();
    if denom <= 0.0 {
        return Err(Error::ZeroSignal);
    }
    let num: f64 = x_true
        .iter()
        .zip(x_hat.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(num / denom)
}

/// `m x n` matrix with i.i.d. standard normal entries, drawn row-major.
pub fn sample_gaussian_matrix(dims: ProblemDims, rng: &mut Prng) -> Mat {
    let data = (0..dims.m * dims.n)
        .map(|_| StandardNormal.sample(rng))
        .collect();
    Mat::from_vec(dims.m, dims.n, data)
}

/// Generates one instance from `cfg.seed`. Pure: identical inputs produce
/// bit-identical instances.
pub fn generate_instance(cfg: &GenConfig, h_fixed: Option<&Mat>) -> Result<ProblemInstance> {
    let mut rng = rng::seeded(cfg.seed);
    generate_instance_with(&mut rng, cfg, h_fixed)
}

/// Generates one instance from an explicit generator handle (`cfg.seed` is
/// ignored). Draw order is fixed as part of the determinism contract:
/// H (only when not fixed), then x, tau, sigma^2, noise. Drawing x first means
/// trial streams share their ground-truth ensemble across different `m`.
pub fn generate_instance_with(
    rng: &mut Prng,
    cfg: &GenConfig,
    h_fixed: Option<&Mat>,
) -> Result<ProblemInstance> {
    cfg.validate()?;
    let (m, n) = (cfg.dims.m, cfg.dims.n);
    let h = match h_fixed {
        Some(h) => {
            if h.rows() != m || h.cols() != n {
                return Err(Error::DimMismatch {
                    what: "h_fixed rows x cols",
                    expected: m * n,
                    got: h.rows() * h.cols(),
                });
            }
            h.clone()
        }
        None => sample_gaussian_matrix(cfg.dims, rng),
    };

    let ux = Uniform::new(cfg.x_low, cfg.x_high).expect("validated bounds");
    let ut = Uniform::new(cfg.tau_low, cfg.tau_high).expect("validated bounds");
    let un = Uniform::new(cfg.noise_low, cfg.noise_high).expect("validated bounds");

    let x_true: Vec<f64> = (0..n).map(|_| ux.sample(rng)).collect();
    let tau: Vec<f64> = (0..m).map(|_| ut.sample(rng)).collect();
    let sigma2: Vec<f64> = (0..m).map(|_| un.sample(rng)).collect();

    let mut y = h.matvec(&x_true);
    for (yi, &s2) in y.iter_mut().zip(sigma2.iter()) {
        let z: f64 = StandardNormal.sample(rng);
        *yi += math::sqrt(s2) * z;
    }
    let r = quantize(&y, &tau)?;

    Ok(ProblemInstance {
        h,
        sigma2,
        tau,
        x_true,
        r,
    })
}
