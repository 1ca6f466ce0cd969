//! DeepRec: the K-layer unfolded network.
//!
//! Layer k computes, with `Om` the semi-whitened one-bit diagonal of the
//! instance (entries `r_i/sigma_i`):
//!
//! ```text
//! z = W1 (Om tau) - W2 (Om H x) + b1
//! p = eta(z)
//! t = H' (Om p)
//! x_next = relu(W3 [x; t] + b2)
//! ```
//!
//! With `W1 = W2 = I`, `b1 = 0`, `W3 = [I | -delta I]`, `b2 = 0`, layer k is
//! exactly one fixed-step gradient-ascent update clipped by the final ReLU:
//! `z` is the whitened residual `Om (tau - H x)` for any instance, and
//! `x_next = relu(x + delta * grad_ll(x))`. Both pre-nonlinearity branches
//! carry the `Om` scaling; without it on the `H x` branch no fixed weights
//! could reproduce the ascent step across instances with heterogeneous noise.

use alloc::vec;
use alloc::vec::Vec;

use rand::distr::Distribution;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::likelihood::{eta, ScaledOneBitOperator};
use crate::linalg::Mat;
use crate::model::{ProblemDims, ProblemInstance};
use crate::rng;

/// The only activation the architecture uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
}

/// Trainable parameters of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    /// m x m, multiplies the whitened thresholds.
    pub w1: Mat,
    /// m x m, multiplies the whitened mapped estimate.
    pub w2: Mat,
    /// n x 2n, mixes `[x; t]` into the next estimate.
    pub w3: Mat,
    /// Length m.
    pub b1: Vec<f64>,
    /// Length n.
    pub b2: Vec<f64>,
}

impl LayerParams {
    pub fn zeros(dims: ProblemDims) -> Self {
        LayerParams {
            w1: Mat::zeros(dims.m, dims.m),
            w2: Mat::zeros(dims.m, dims.m),
            w3: Mat::zeros(dims.n, 2 * dims.n),
            b1: vec![0.0; dims.m],
            b2: vec![0.0; dims.n],
        }
    }

    pub fn validate(&self, dims: ProblemDims) -> Result<()> {
        let (m, n) = (dims.m, dims.n);
        let checks = [
            ("w1", self.w1.rows() == m && self.w1.cols() == m),
            ("w2", self.w2.rows() == m && self.w2.cols() == m),
            ("w3", self.w3.rows() == n && self.w3.cols() == 2 * n),
            ("b1", self.b1.len() == m),
            ("b2", self.b2.len() == n),
        ];
        for (what, ok) in checks {
            if !ok {
                return Err(Error::DimMismatch {
                    what,
                    expected: m,
                    got: 0,
                });
            }
        }
        let finite = self.w1.is_finite()
            && self.w2.is_finite()
            && self.w3.is_finite()
            && self.b1.iter().all(|v| v.is_finite())
            && self.b2.iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::Config("layer parameters must be finite"));
        }
        Ok(())
    }

    /// The five parameter blocks as slices, in serialization order.
    pub fn blocks(&self) -> [&[f64]; 5] {
        [
            self.w1.data(),
            self.w2.data(),
            self.w3.data(),
            &self.b1,
            &self.b2,
        ]
    }

    pub fn blocks_mut(&mut self) -> [&mut [f64]; 5] {
        [
            self.w1.data_mut(),
            self.w2.data_mut(),
            self.w3.data_mut(),
            &mut self.b1,
            &mut self.b2,
        ]
    }
}

/// Per-layer intermediates of one forward pass, for backpropagation and
/// diagnostics. All four lists have length K; the input of layer k is
/// `x_next[k-1]` (all-zeros for k = 0).
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub z: Vec<Vec<f64>>,
    pub p: Vec<Vec<f64>>,
    pub t: Vec<Vec<f64>>,
    pub x_next: Vec<Vec<f64>>,
}

/// The unfolded network: dimensions, the structural step size its layers were
/// initialized from, and K layers of trainable parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct UnfoldedNetwork {
    pub dims: ProblemDims,
    pub delta: f64,
    pub layers: Vec<LayerParams>,
    pub activation: Activation,
}

impl UnfoldedNetwork {
    /// Initialization reproducing fixed-step gradient ascent: identity W1/W2,
    /// `W3 = [I | -delta I]`, zero biases.
    pub fn gd_equivalent(dims: ProblemDims, k_layers: usize, delta: f64) -> Result<Self> {
        if k_layers == 0 {
            return Err(Error::Config("k_layers must be >= 1"));
        }
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::Config("delta must be positive and finite"));
        }
        let (m, n) = (dims.m, dims.n);
        if m == 0 || n == 0 {
            return Err(Error::Config("dims must satisfy m >= 1 and n >= 1"));
        }
        let mut w3 = Mat::zeros(n, 2 * n);
        for j in 0..n {
            w3.set(j, j, 1.0);
            w3.set(j, n + j, -delta);
        }
        let layer = LayerParams {
            w1: Mat::identity(m),
            w2: Mat::identity(m),
            w3,
            b1: vec![0.0; m],
            b2: vec![0.0; n],
        };
        Ok(UnfoldedNetwork {
            dims,
            delta,
            layers: vec![layer; k_layers],
            activation: Activation::Relu,
        })
    }

    /// GD-equivalent initialization plus i.i.d. zero-mean Gaussian
    /// perturbations of standard deviation `perturb_scale` on every weight
    /// entry (biases untouched). `perturb_scale = 0` reproduces
    /// [`Self::gd_equivalent`] exactly.
    pub fn random(
        dims: ProblemDims,
        k_layers: usize,
        delta: f64,
        seed: u64,
        perturb_scale: f64,
    ) -> Result<Self> {
        if !(perturb_scale >= 0.0 && perturb_scale.is_finite()) {
            return Err(Error::Config("perturb_scale must be >= 0"));
        }
        let mut net = Self::gd_equivalent(dims, k_layers, delta)?;
        let mut rng = rng::seeded(seed);
        for layer in net.layers.iter_mut() {
            for w in [&mut layer.w1, &mut layer.w2, &mut layer.w3] {
                for v in w.data_mut().iter_mut() {
                    let g: f64 = StandardNormal.sample(&mut rng);
                    *v += perturb_scale * g;
                }
            }
        }
        Ok(net)
    }

    pub fn k_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Config("network must have at least one layer"));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::Config("delta must be positive and finite"));
        }
        for layer in &self.layers {
            layer.validate(self.dims)?;
        }
        Ok(())
    }

    /// Runs the network on one instance. Returns the estimate `x^(K+1)` and,
    /// when `keep_trace` is set, the per-layer intermediates.
    pub fn forward(
        &self,
        inst: &ProblemInstance,
        keep_trace: bool,
    ) -> Result<(Vec<f64>, Option<ForwardTrace>)> {
        let dims = inst.dims();
        if dims != self.dims {
            return Err(Error::DimMismatch {
                what: "instance dims",
                expected: self.dims.m,
                got: dims.m,
            });
        }
        let (m, n) = (dims.m, dims.n);
        let op = ScaledOneBitOperator::from_instance(inst);
        let v = op.apply(&inst.tau); // Om tau, shared by every layer

        let mut trace = if keep_trace {
            Some(ForwardTrace {
                z: Vec::with_capacity(self.layers.len()),
                p: Vec::with_capacity(self.layers.len()),
                t: Vec::with_capacity(self.layers.len()),
                x_next: Vec::with_capacity(self.layers.len()),
            })
        } else {
            None
        };

        let mut x = vec![0.0; n];
        let mut hx = vec![0.0; m];
        let mut s = vec![0.0; m];
        let mut a1 = vec![0.0; m];
        let mut a2 = vec![0.0; m];
        let mut cat = vec![0.0; 2 * n];

        for (k, layer) in self.layers.iter().enumerate() {
            inst.h.matvec_into(&x, &mut hx);
            op.apply_into(&hx, &mut s); // Om H x
            layer.w1.matvec_into(&v, &mut a1);
            layer.w2.matvec_into(&s, &mut a2);
            let z: Vec<f64> = (0..m).map(|i| a1[i] - a2[i] + layer.b1[i]).collect();
            let p: Vec<f64> = z.iter().map(|&zi| eta(zi)).collect();
            let dp = op.apply(&p);
            let t = inst.h.tr_matvec(&dp);

            cat[..n].copy_from_slice(&x);
            cat[n..].copy_from_slice(&t);
            let mut x_next = layer.w3.matvec(&cat);
            for (xi, bi) in x_next.iter_mut().zip(layer.b2.iter()) {
                *xi += bi;
            }
            // Finiteness is checked on the pre-activation: relu would mask a
            // NaN or -inf as 0.
            let finite = z.iter().all(|v| v.is_finite())
                && t.iter().all(|v| v.is_finite())
                && x_next.iter().all(|v| v.is_finite());
            if !finite {
                return Err(Error::NonFiniteLayer { layer: k + 1 });
            }
            for xi in x_next.iter_mut() {
                *xi = xi.max(0.0);
            }

            if let Some(tr) = trace.as_mut() {
                tr.z.push(z);
                tr.p.push(p);
                tr.t.push(t);
                tr.x_next.push(x_next.clone());
            }
            x = x_next;
        }

        Ok((x, trace))
    }
}
