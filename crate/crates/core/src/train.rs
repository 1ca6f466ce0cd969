//! Supervised training of the unfolded network: least-squares loss, manual
//! reverse-mode gradients through the layer recursion, ADAM with exponential
//! step decay, and online batch sampling with a fixed sensing matrix.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::likelihood::{eta_prime_given, ScaledOneBitOperator};
use crate::linalg::axpy;
use crate::linalg::Mat;
use crate::math;
use crate::model::{generate_instance_with, nmse, GenConfig, ProblemInstance};
use crate::net::{ForwardTrace, LayerParams, UnfoldedNetwork};
use crate::rng;

/// Stream of the generator family reserved for the held-out validation set;
/// batch sampling uses streams >= 1.
const VALIDATION_STREAM: u64 = 0;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub batches_per_epoch: usize,
    /// Initial ADAM learning rate.
    pub lr0: f64,
    /// Multiplicative step-size factor applied every `decay_every` epochs.
    pub decay_rate: f64,
    pub decay_every: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Optional global-norm gradient clip; useful at large depth.
    pub grad_clip: Option<f64>,
    /// Validation cadence in epochs (the final epoch is always evaluated).
    pub eval_every: usize,
    /// Held-out validation set size, regenerated identically per evaluation.
    pub val_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 500,
            epochs: 2000,
            batches_per_epoch: 1,
            lr0: 1e-3,
            decay_rate: 0.97,
            decay_every: 100,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            grad_clip: None,
            eval_every: 50,
            val_size: 2000,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1"));
        }
        if self.batches_per_epoch == 0 {
            return Err(Error::Config("batches_per_epoch must be >= 1"));
        }
        if !(self.decay_rate > 0.0 && self.decay_rate <= 1.0) {
            return Err(Error::Config("decay_rate must be in (0, 1]"));
        }
        if self.decay_every == 0 {
            return Err(Error::Config("decay_every must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(Error::Config("adam betas must be in [0, 1)"));
        }
        if !(self.adam_eps > 0.0) {
            return Err(Error::Config("adam_eps must be > 0"));
        }
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return Err(Error::Config("lr0 must be positive and finite"));
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                return Err(Error::Config("grad_clip must be > 0 when set"));
            }
        }
        if self.eval_every == 0 {
            return Err(Error::Config("eval_every must be >= 1"));
        }
        if self.val_size == 0 {
            return Err(Error::Config("val_size must be >= 1"));
        }
        Ok(())
    }
}

/// ADAM accumulators and the best-validation snapshot.
#[derive(Debug, Clone)]
pub struct TrainerState {
    /// First-moment estimates, shaped like the parameter set.
    pub m1: Vec<LayerParams>,
    /// Second-moment estimates, shaped like the parameter set.
    pub m2: Vec<LayerParams>,
    /// Optimizer step counter.
    pub step: u64,
    /// Learning rate currently in effect.
    pub lr: f64,
    /// Best (validation NMSE, network) seen so far.
    pub best: Option<(f64, UnfoldedNetwork)>,
}

impl TrainerState {
    pub fn new(net: &UnfoldedNetwork) -> Self {
        let zeros: Vec<LayerParams> = net
            .layers
            .iter()
            .map(|_| LayerParams::zeros(net.dims))
            .collect();
        TrainerState {
            m1: zeros.clone(),
            m2: zeros,
            step: 0,
            lr: 0.0,
            best: None,
        }
    }
}

/// One row of the training log.
#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub epoch: usize,
    /// Mean training loss over the epoch's batches.
    pub loss: f64,
    /// Mean validation NMSE, on evaluation epochs.
    pub val_nmse: Option<f64>,
    pub lr: f64,
}

/// Squared Euclidean distance `||x_true - x_hat||^2`.
pub fn ls_loss(x_true: &[f64], x_hat: &[f64]) -> Result<f64> {
    if x_true.len() != x_hat.len() {
        return Err(Error::DimMismatch {
            what: "ls_loss estimate",
            expected: x_true.len(),
            got: x_hat.len(),
        });
    }
    Ok(x_true
        .iter()
        .zip(x_hat.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum())
}

fn check_trace(net: &UnfoldedNetwork, trace: &ForwardTrace) -> Result<()> {
    let k = net.layers.len();
    if trace.z.len() != k || trace.p.len() != k || trace.t.len() != k || trace.x_next.len() != k {
        return Err(Error::TraceMismatch("trace depth differs from network depth"));
    }
    let (m, n) = (net.dims.m, net.dims.n);
    for i in 0..k {
        if trace.z[i].len() != m
            || trace.p[i].len() != m
            || trace.t[i].len() != n
            || trace.x_next[i].len() != n
        {
            return Err(Error::TraceMismatch("trace vector sizes differ from dims"));
        }
    }
    Ok(())
}

/// Exact gradients of `ls_loss(x_true, forward(inst))` with respect to every
/// layer parameter, from a trace recorded by `forward(inst, keep_trace=true)`.
pub fn backward(
    net: &UnfoldedNetwork,
    inst: &ProblemInstance,
    trace: &ForwardTrace,
    x_true: &[f64],
) -> Result<Vec<LayerParams>> {
    let mut grads: Vec<LayerParams> = net
        .layers
        .iter()
        .map(|_| LayerParams::zeros(net.dims))
        .collect();
    backward_into(net, inst, trace, x_true, 1.0, &mut grads)?;
    Ok(grads)
}

/// Accumulates `scale * dLoss/dParams` into `grads`. ReLU uses subgradient 0
/// at exactly 0, and `eta'` follows the same clamp branches as `eta`, so these
/// gradients match finite differences of the actual forward pass.
fn backward_into(
    net: &UnfoldedNetwork,
    inst: &ProblemInstance,
    trace: &ForwardTrace,
    x_true: &[f64],
    scale: f64,
    grads: &mut [LayerParams],
) -> Result<()> {
    let dims = inst.dims();
    if dims != net.dims {
        return Err(Error::DimMismatch {
            what: "instance dims",
            expected: net.dims.m,
            got: dims.m,
        });
    }
    if x_true.len() != dims.n {
        return Err(Error::DimMismatch {
            what: "x_true",
            expected: dims.n,
            got: x_true.len(),
        });
    }
    check_trace(net, trace)?;
    let (m, n) = (dims.m, dims.n);
    let k_layers = net.layers.len();
    let op = ScaledOneBitOperator::from_instance(inst);
    let d = op.entries();
    let v = op.apply(&inst.tau); // Om tau
    let zeros_x = vec![0.0; n];

    // dLoss/dx at the output.
    let x_out = &trace.x_next[k_layers - 1];
    let mut g_x: Vec<f64> = x_out
        .iter()
        .zip(x_true.iter())
        .map(|(xh, xt)| 2.0 * (xh - xt))
        .collect();

    let mut cat = vec![0.0; 2 * n];
    for k in (0..k_layers).rev() {
        let layer = &net.layers[k];
        let grad = &mut grads[k];
        let x_in: &[f64] = if k == 0 { &zeros_x } else { &trace.x_next[k - 1] };
        let z = &trace.z[k];
        let p = &trace.p[k];
        let t = &trace.t[k];
        let x_next = &trace.x_next[k];

        // Through the ReLU: pre-activation > 0 exactly where the output is > 0.
        let g_pre: Vec<f64> = g_x
            .iter()
            .zip(x_next.iter())
            .map(|(&g, &x)| if x > 0.0 { g } else { 0.0 })
            .collect();

        cat[..n].copy_from_slice(x_in);
        cat[n..].copy_from_slice(t);
        axpy(&mut grad.b2, scale, &g_pre);
        grad.w3.add_scaled_outer(&g_pre, &cat, scale);

        let g_cat = layer.w3.tr_matvec(&g_pre);
        let g_t = &g_cat[n..];

        // t = H'(d .* p): pull the cotangent back through H and the scaling.
        let g_dp = inst.h.matvec(g_t);
        let mut g_z = vec![0.0; m];
        for i in 0..m {
            let g_p = d[i] * g_dp[i];
            g_z[i] = g_p * eta_prime_given(z[i], p[i]);
        }

        axpy(&mut grad.b1, scale, &g_z);
        grad.w1.add_scaled_outer(&g_z, &v, scale);
        // z = W1 v - W2 s + b1 with s = d .* (H x_in).
        let hx = inst.h.matvec(x_in);
        let s = op.apply(&hx);
        grad.w2.add_scaled_outer(&g_z, &s, -scale);

        // Cotangent for x_in: the direct skip path plus the -W2 (d .* (H x)) path.
        let g_s = layer.w2.tr_matvec(&g_z);
        let g_hx: Vec<f64> = d.iter().zip(g_s.iter()).map(|(&di, &gi)| -di * gi).collect();
        let mut g_prev = inst.h.tr_matvec(&g_hx);
        for (gp, gc) in g_prev.iter_mut().zip(g_cat[..n].iter()) {
            *gp += gc;
        }
        g_x = g_prev;
    }
    Ok(())
}

/// One ADAM update over every parameter of every layer; increments the step
/// counter and uses `state.lr` as the step size.
pub fn adam_step(
    state: &mut TrainerState,
    layers: &mut [LayerParams],
    grads: &[LayerParams],
    cfg: &TrainConfig,
) -> Result<()> {
    if layers.len() != grads.len() || layers.len() != state.m1.len() {
        return Err(Error::DimMismatch {
            what: "adam layer count",
            expected: layers.len(),
            got: grads.len(),
        });
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - math::powi(cfg.adam_beta1, t);
    let bc2 = 1.0 - math::powi(cfg.adam_beta2, t);
    let (b1, b2, eps, lr) = (cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps, state.lr);

    for (((layer, grad), m1), m2) in layers
        .iter_mut()
        .zip(grads.iter())
        .zip(state.m1.iter_mut())
        .zip(state.m2.iter_mut())
    {
        let theta = layer.blocks_mut();
        let g = grad.blocks();
        let mm1 = m1.blocks_mut();
        let mm2 = m2.blocks_mut();
        for b in 0..5 {
            if theta[b].len() != g[b].len() {
                return Err(Error::DimMismatch {
                    what: "adam block",
                    expected: theta[b].len(),
                    got: g[b].len(),
                });
            }
        }
        for (((th, gb), m1b), m2b) in theta.into_iter().zip(g).zip(mm1).zip(mm2) {
            for i in 0..th.len() {
                let gi = gb[i];
                m1b[i] = b1 * m1b[i] + (1.0 - b1) * gi;
                m2b[i] = b2 * m2b[i] + (1.0 - b2) * gi * gi;
                let mhat = m1b[i] / bc1;
                let vhat = m2b[i] / bc2;
                th[i] -= lr * mhat / (math::sqrt(vhat) + eps);
            }
        }
    }
    Ok(())
}

fn grad_sq_norm(grads: &[LayerParams]) -> f64 {
    grads
        .iter()
        .flat_map(|g| g.blocks().into_iter())
        .map(|b| b.iter().map(|v| v * v).sum::<f64>())
        .sum()
}

/// Mean NMSE of the network over the reserved validation stream: `size`
/// instances regenerated identically on every call.
pub fn validation_nmse(
    net: &UnfoldedNetwork,
    gen: &GenConfig,
    h_fixed: &Mat,
    size: usize,
) -> Result<f64> {
    let mut rng = rng::substream(gen.seed, VALIDATION_STREAM);
    let mut acc = 0.0;
    for _ in 0..size {
        let inst = generate_instance_with(&mut rng, gen, Some(h_fixed))?;
        let (x_hat, _) = net.forward(&inst, false)?;
        acc += nmse(&inst.x_true, &x_hat)?;
    }
    Ok(acc / size as f64)
}

/// Trains the network on freshly sampled batches (fixed sensing matrix),
/// evaluating on the held-out stream every `eval_every` epochs, and returns
/// the best-validation snapshot with the per-epoch log.
pub fn train(
    net: UnfoldedNetwork,
    gen: &GenConfig,
    cfg: &TrainConfig,
    h_fixed: &Mat,
) -> Result<(UnfoldedNetwork, Vec<LossReport>)> {
    cfg.validate()?;
    gen.validate()?;
    net.validate()?;
    if gen.dims != net.dims {
        return Err(Error::DimMismatch {
            what: "gen dims",
            expected: net.dims.m,
            got: gen.dims.m,
        });
    }
    if h_fixed.rows() != net.dims.m || h_fixed.cols() != net.dims.n {
        return Err(Error::DimMismatch {
            what: "h_fixed",
            expected: net.dims.m,
            got: h_fixed.rows(),
        });
    }

    let mut net = net;
    let mut state = TrainerState::new(&net);
    let mut grads: Vec<LayerParams> = net
        .layers
        .iter()
        .map(|_| LayerParams::zeros(net.dims))
        .collect();
    let mut reports = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        state.lr = cfg.lr0 * math::powi(cfg.decay_rate, (epoch / cfg.decay_every) as i32);
        let mut epoch_loss = 0.0;
        for b in 0..cfg.batches_per_epoch {
            let stream = 1 + (epoch * cfg.batches_per_epoch + b) as u64;
            let mut rng = rng::substream(gen.seed, stream);
            for g in grads.iter_mut() {
                *g = LayerParams::zeros(net.dims);
            }
            let inv = 1.0 / cfg.batch_size as f64;
            let mut batch_loss = 0.0;
            for _ in 0..cfg.batch_size {
                let inst = generate_instance_with(&mut rng, gen, Some(h_fixed))?;
                let (x_hat, trace) = match net.forward(&inst, true) {
                    Ok(out) => out,
                    Err(Error::NonFiniteLayer { .. }) => {
                        return Err(Error::TrainDiverged {
                            epoch,
                            step: state.step,
                        })
                    }
                    Err(e) => return Err(e),
                };
                let trace = trace.expect("trace requested");
                let loss = ls_loss(&inst.x_true, &x_hat)?;
                if !loss.is_finite() {
                    return Err(Error::TrainDiverged {
                        epoch,
                        step: state.step,
                    });
                }
                batch_loss += loss;
                backward_into(&net, &inst, &trace, &inst.x_true, inv, &mut grads)?;
            }
            batch_loss *= inv;
            epoch_loss += batch_loss;

            if let Some(clip) = cfg.grad_clip {
                let norm = math::sqrt(grad_sq_norm(&grads));
                if norm > clip {
                    let f = clip / norm;
                    for g in grads.iter_mut() {
                        for block in g.blocks_mut() {
                            for v in block.iter_mut() {
                                *v *= f;
                            }
                        }
                    }
                }
            }
            adam_step(&mut state, &mut net.layers, &grads, cfg)?;
        }
        epoch_loss /= cfg.batches_per_epoch as f64;

        let evaluate = (epoch + 1) % cfg.eval_every == 0 || epoch + 1 == cfg.epochs;
        let val = if evaluate {
            let v = match validation_nmse(&net, gen, h_fixed, cfg.val_size) {
                Ok(v) => v,
                Err(Error::NonFiniteLayer { .. }) => {
                    return Err(Error::TrainDiverged {
                        epoch,
                        step: state.step,
                    })
                }
                Err(e) => return Err(e),
            };
            let better = state.best.as_ref().map(|(b, _)| v < *b).unwrap_or(true);
            if better {
                state.best = Some((v, net.clone()));
            }
            Some(v)
        } else {
            None
        };

        reports.push(LossReport {
            epoch,
            loss: epoch_loss,
            val_nmse: val,
            lr: state.lr,
        });
    }

    let result = match state.best {
        Some((_, best_net)) => best_net,
        None => net,
    };
    Ok((result, reports))
}

#[cfg(test)]
#[allow(clippy::field_reassign_with_default, clippy::needless_range_loop)]
mod tests {
    use super::*;
    use crate::model::{generate_instance, ProblemDims};
    use crate::net::Activation;

    #[test]
    fn ls_loss_basics() {
        assert_eq!(ls_loss(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(ls_loss(&[1.0, 0.0, 0.0], &[0.0, 0.0, 0.0]).unwrap(), 1.0);
        assert!(matches!(
            ls_loss(&[1.0], &[1.0, 2.0]),
            Err(Error::DimMismatch { .. })
        ));
        // Batched mean equals the mean of individual losses (pure linearity).
        let pairs = [([0.1, 0.2], [0.3, 0.1]), ([1.0, -1.0], [0.5, 0.5])];
        let mean: f64 = pairs
            .iter()
            .map(|(a, b)| ls_loss(a, b).unwrap())
            .sum::<f64>()
            / 2.0;
        let acc = (ls_loss(&pairs[0].0, &pairs[0].1).unwrap()
            + ls_loss(&pairs[1].0, &pairs[1].1).unwrap())
            / 2.0;
        assert_eq!(mean, acc);
    }

    fn fd_check(k_layers: usize, seed: u64) -> (f64, usize) {
        let dims = ProblemDims::new(8, 3).unwrap();
        let mut gen = GenConfig::new(dims);
        gen.seed = seed;
        let inst = generate_instance(&gen, None).unwrap();
        let net = UnfoldedNetwork::random(dims, k_layers, 0.01, seed ^ 0xabc, 0.05).unwrap();
        let (_, trace) = net.forward(&inst, true).unwrap();
        let grads = backward(&net, &inst, &trace.unwrap(), &inst.x_true).unwrap();

        let h = 1e-6;
        let mut worst = 0.0f64;
        let mut count = 0usize;
        for k in 0..k_layers {
            for b in 0..5 {
                let len = grads[k].blocks()[b].len();
                for i in 0..len {
                    let mut plus = net.clone();
                    plus.layers[k].blocks_mut()[b][i] += h;
                    let (xp, _) = plus.forward(&inst, false).unwrap();
                    let mut minus = net.clone();
                    minus.layers[k].blocks_mut()[b][i] -= h;
                    let (xm, _) = minus.forward(&inst, false).unwrap();
                    let fd = (ls_loss(&inst.x_true, &xp).unwrap()
                        - ls_loss(&inst.x_true, &xm).unwrap())
                        / (2.0 * h);
                    let g = grads[k].blocks()[b][i];
                    // The scale floor keeps central-difference roundoff
                    // (~1e-10 absolute at h = 1e-6) from dominating entries
                    // whose true gradient is itself ~1e-6.
                    let err = (g - fd).abs() / g.abs().max(fd.abs()).max(1e-4);
                    worst = worst.max(err);
                    count += 1;
                }
            }
        }
        (worst, count)
    }

    #[test]
    fn backward_matches_finite_differences() {
        for (k, seed) in [(1usize, 1u64), (2, 2), (3, 3), (2, 11), (3, 17)] {
            let (worst, count) = fd_check(k, seed);
            assert!(
                worst <= 1e-5,
                "K={k} seed={seed}: worst rel err {worst:e} over {count} params"
            );
        }
    }

    #[test]
    fn dead_network_has_zero_gradients() {
        let dims = ProblemDims::new(6, 3).unwrap();
        let mut gen = GenConfig::new(dims);
        gen.seed = 4;
        let inst = generate_instance(&gen, None).unwrap();
        let net = UnfoldedNetwork {
            dims,
            delta: 0.01,
            layers: vec![LayerParams::zeros(dims); 3],
            activation: Activation::Relu,
        };
        let (x, trace) = net.forward(&inst, true).unwrap();
        assert_eq!(x, vec![0.0; 3]);
        let grads = backward(&net, &inst, &trace.unwrap(), &inst.x_true).unwrap();
        for g in &grads {
            for block in g.blocks() {
                assert!(block.iter().all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn last_layer_bias_gradient_is_analytic() {
        let dims = ProblemDims::new(8, 3).unwrap();
        let mut gen = GenConfig::new(dims);
        gen.seed = 6;
        let inst = generate_instance(&gen, None).unwrap();
        let net = UnfoldedNetwork::random(dims, 1, 0.01, 2, 0.05).unwrap();
        let (x_hat, trace) = net.forward(&inst, true).unwrap();
        let grads = backward(&net, &inst, &trace.unwrap(), &inst.x_true).unwrap();
        for j in 0..3 {
            let relu_on = x_hat[j] > 0.0;
            let want = if relu_on {
                2.0 * (x_hat[j] - inst.x_true[j])
            } else {
                0.0
            };
            assert!(
                (grads[0].b2[j] - want).abs() <= 1e-14,
                "b2 grad {} vs {}",
                grads[0].b2[j],
                want
            );
        }
    }

    #[test]
    fn trace_mismatch_is_contract_error() {
        let dims = ProblemDims::new(6, 3).unwrap();
        let mut gen = GenConfig::new(dims);
        gen.seed = 9;
        let inst = generate_instance(&gen, None).unwrap();
        let net2 = UnfoldedNetwork::gd_equivalent(dims, 2, 0.01).unwrap();
        let net3 = UnfoldedNetwork::gd_equivalent(dims, 3, 0.01).unwrap();
        let (_, trace) = net2.forward(&inst, true).unwrap();
        assert!(matches!(
            backward(&net3, &inst, &trace.unwrap(), &inst.x_true),
            Err(Error::TraceMismatch(_))
        ));
    }

    #[test]
    fn adam_first_step_is_sign_scaled() {
        let dims = ProblemDims::new(4, 2).unwrap();
        let mut net = UnfoldedNetwork::gd_equivalent(dims, 1, 0.01).unwrap();
        let before = net.clone();
        let mut state = TrainerState::new(&net);
        let cfg = TrainConfig::default();
        state.lr = 1e-3;
        let mut grads = vec![LayerParams::zeros(dims)];
        for (i, block) in grads[0].blocks_mut().into_iter().enumerate() {
            for (j, v) in block.iter_mut().enumerate() {
                *v = (i as f64 + 1.0) * 0.5 - j as f64 * 0.3;
            }
        }
        adam_step(&mut state, &mut net.layers, &grads, &cfg).unwrap();
        assert_eq!(state.step, 1);
        for b in 0..5 {
            let th = net.layers[0].blocks()[b];
            let th0 = before.layers[0].blocks()[b];
            let g = grads[0].blocks()[b];
            for i in 0..th.len() {
                let want = th0[i] - state.lr * g[i] / (g[i].abs() + cfg.adam_eps);
                assert!(
                    (th[i] - want).abs() <= 1e-15,
                    "block {b} entry {i}: {} vs {}",
                    th[i],
                    want
                );
            }
        }
    }

    #[test]
    fn adam_zero_gradient_keeps_params() {
        let dims = ProblemDims::new(3, 2).unwrap();
        let mut net = UnfoldedNetwork::gd_equivalent(dims, 2, 0.01).unwrap();
        let before = net.clone();
        let mut state = TrainerState::new(&net);
        state.lr = 0.1;
        let grads = vec![LayerParams::zeros(dims); 2];
        let cfg = TrainConfig::default();
        adam_step(&mut state, &mut net.layers, &grads, &cfg).unwrap();
        assert_eq!(net, before);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn adam_two_opposed_steps_stay_bounded() {
        // Direct simulation of the scalar recurrence is the oracle here.
        let dims = ProblemDims::new(2, 2).unwrap();
        let mut net = UnfoldedNetwork::gd_equivalent(dims, 1, 0.01).unwrap();
        let before = net.clone();
        let mut state = TrainerState::new(&net);
        let cfg = TrainConfig::default();
        let lr = 1e-2;
        state.lr = lr;
        let mut g = vec![LayerParams::zeros(dims)];
        for block in g[0].blocks_mut() {
            block.fill(0.7);
        }
        adam_step(&mut state, &mut net.layers, &g, &cfg).unwrap();
        for block in g[0].blocks_mut() {
            block.fill(-0.7);
        }
        state.lr = lr;
        adam_step(&mut state, &mut net.layers, &g, &cfg).unwrap();

        // Scalar oracle for theta0 = arbitrary, g then -g.
        let gv = 0.7;
        let (b1, b2, eps) = (cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
        let mut m = 0.0;
        let mut vv = 0.0;
        let mut delta = 0.0;
        for (t, gt) in [(1, gv), (2, -gv)] {
            m = b1 * m + (1.0 - b1) * gt;
            vv = b2 * vv + (1.0 - b2) * gt * gt;
            let mh = m / (1.0 - b1.powi(t));
            let vh = vv / (1.0 - b2.powi(t));
            delta -= lr * mh / (vh.sqrt() + eps);
        }
        for b in 0..5 {
            let th = net.layers[0].blocks()[b];
            let th0 = before.layers[0].blocks()[b];
            for i in 0..th.len() {
                assert!((th[i] - (th0[i] + delta)).abs() <= 1e-15);
                assert!((th[i] - th0[i]).abs() <= 2.0 * lr + 1e-12);
            }
        }
    }

    #[test]
    fn train_zero_epochs_returns_input() {
        let dims = ProblemDims::new(6, 3).unwrap();
        let gen = GenConfig::new(dims);
        let mut cfg = TrainConfig::default();
        cfg.epochs = 0;
        let mut rng = crate::rng::seeded(1);
        let h = crate::model::sample_gaussian_matrix(dims, &mut rng);
        let net = UnfoldedNetwork::gd_equivalent(dims, 2, 0.01).unwrap();
        let (out, reports) = train(net.clone(), &gen, &cfg, &h).unwrap();
        assert_eq!(out, net);
        assert!(reports.is_empty());
    }

    #[test]
    fn train_is_deterministic_and_decays_lr() {
        let dims = ProblemDims::new(10, 3).unwrap();
        let mut gen = GenConfig::new(dims);
        gen.seed = 33;
        let mut cfg = TrainConfig::default();
        cfg.epochs = 7;
        cfg.batch_size = 8;
        cfg.eval_every = 3;
        cfg.val_size = 16;
        cfg.decay_every = 2;
        let mut rng = crate::rng::seeded(2);
        let h = crate::model::sample_gaussian_matrix(dims, &mut rng);
        let net = UnfoldedNetwork::gd_equivalent(dims, 3, 0.01).unwrap();
        let (a, ra) = train(net.clone(), &gen, &cfg, &h).unwrap();
        let (b, rb) = train(net, &gen, &cfg, &h).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra, rb);
        for rep in &ra {
            let want = cfg.lr0 * crate::math::powi(cfg.decay_rate, (rep.epoch / cfg.decay_every) as i32);
            assert_eq!(rep.lr, want);
        }
        // Final epoch always evaluates; the returned net is the argmin.
        assert!(ra.last().unwrap().val_nmse.is_some());
        let best = ra
            .iter()
            .filter_map(|r| r.val_nmse)
            .fold(f64::INFINITY, f64::min);
        let returned = validation_nmse(&a, &gen, &h, cfg.val_size).unwrap();
        assert!((returned - best).abs() <= 1e-12);
    }

    #[test]
    fn training_improves_over_untrained_network() {
        let dims = ProblemDims::new(50, 3).unwrap();
        let mut gen = GenConfig::new(dims);
        gen.seed = 404;
        let mut cfg = TrainConfig::default();
        cfg.epochs = 200;
        cfg.batch_size = 100;
        cfg.eval_every = 20;
        cfg.val_size = 300;
        cfg.seed = 404;
        let mut rng = crate::rng::seeded(99);
        let h = crate::model::sample_gaussian_matrix(dims, &mut rng);
        let net = UnfoldedNetwork::gd_equivalent(dims, 10, 0.01).unwrap();
        let untrained = validation_nmse(&net, &gen, &h, cfg.val_size).unwrap();
        let (trained, _) = train(net, &gen, &cfg, &h).unwrap();
        let after = validation_nmse(&trained, &gen, &h, cfg.val_size).unwrap();
        assert!(
            after < untrained,
            "trained {after} vs untrained {untrained}"
        );
    }

    #[test]
    fn batch_gradient_order_reassociation_is_tiny() {
        let dims = ProblemDims::new(8, 3).unwrap();
        let mut gen = GenConfig::new(dims);
        gen.seed = 5;
        let net = UnfoldedNetwork::random(dims, 2, 0.01, 3, 0.05).unwrap();
        let mut rng = crate::rng::substream(5, 1);
        let mut h_rng = crate::rng::seeded(50);
        let h = crate::model::sample_gaussian_matrix(dims, &mut h_rng);
        let insts: Vec<ProblemInstance> = (0..16)
            .map(|_| generate_instance_with(&mut rng, &gen, Some(&h)).unwrap())
            .collect();
        let acc = |order: &[usize]| {
            let mut grads: Vec<LayerParams> =
                net.layers.iter().map(|_| LayerParams::zeros(dims)).collect();
            for &i in order {
                let (_, trace) = net.forward(&insts[i], true).unwrap();
                backward_into(
                    &net,
                    &insts[i],
                    &trace.unwrap(),
                    &insts[i].x_true,
                    1.0 / 16.0,
                    &mut grads,
                )
                .unwrap();
            }
            grads
        };
        let fwd: Vec<usize> = (0..16).collect();
        let rev: Vec<usize> = (0..16).rev().collect();
        let a = acc(&fwd);
        let b = acc(&rev);
        let c = acc(&fwd);
        assert_eq!(a, c, "same order must be bit-identical");
        for (ga, gb) in a.iter().zip(b.iter()) {
            for (ba, bb) in ga.blocks().into_iter().zip(gb.blocks()) {
                for (va, vb) in ba.iter().zip(bb.iter()) {
                    let rel = (va - vb).abs() / va.abs().max(vb.abs()).max(1e-30);
                    assert!(rel <= 1e-10, "reassociation gap {rel}");
                }
            }
        }
    }

    #[test]
    fn divergent_training_reports_epoch() {
        let dims = ProblemDims::new(8, 3).unwrap();
        let mut gen = GenConfig::new(dims);
        gen.seed = 8;
        let mut cfg = TrainConfig::default();
        cfg.epochs = 50;
        cfg.batch_size = 4;
        cfg.lr0 = 1e130; // guarantees immediate blow-up
        cfg.val_size = 8;
        let mut rng = crate::rng::seeded(7);
        let h = crate::model::sample_gaussian_matrix(dims, &mut rng);
        let net = UnfoldedNetwork::gd_equivalent(dims, 3, 0.01).unwrap();
        match train(net, &gen, &cfg, &h) {
            Err(Error::TrainDiverged { epoch, .. }) => assert!(epoch < 50),
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
