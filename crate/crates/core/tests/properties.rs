#![allow(clippy::needless_range_loop)]

//! Cross-module property checks: concavity of the log-likelihood, gradient
//! structure, and finite-difference agreement over ensembles of instances.

use deeprec_core::gd::{gd_recover, GdConfig};
use deeprec_core::likelihood::{eta, grad_log_likelihood, log_likelihood};
use deeprec_core::linalg::Mat;
use deeprec_core::model::{generate_instance, GenConfig, ProblemDims};
use deeprec_core::net::UnfoldedNetwork;
use deeprec_core::rng;
use deeprec_core::train::{backward, ls_loss};
use proptest::prelude::*;
use rand::distr::{Distribution, Uniform};

fn rand_x(seed: u64, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    let mut rng = rng::seeded(seed);
    let u = Uniform::new(lo, hi).unwrap();
    (0..n).map(|_| u.sample(&mut rng)).collect()
}

#[test]
fn log_likelihood_is_concave_along_segments() {
    let dims = ProblemDims::new(25, 3).unwrap();
    for seed in 0..50u64 {
        let mut gen = GenConfig::new(dims);
        gen.seed = 9000 + seed;
        let inst = generate_instance(&gen, None).unwrap();
        let x1 = rand_x(seed * 3 + 1, 3, -2.0, 2.0);
        let x2 = rand_x(seed * 3 + 2, 3, -2.0, 2.0);
        for lambda in [0.12, 0.5, 0.83] {
            let xm: Vec<f64> = x1
                .iter()
                .zip(x2.iter())
                .map(|(a, b)| lambda * a + (1.0 - lambda) * b)
                .collect();
            let lm = log_likelihood(&inst, &xm).unwrap();
            let l1 = log_likelihood(&inst, &x1).unwrap();
            let l2 = log_likelihood(&inst, &x2).unwrap();
            assert!(
                lm >= lambda * l1 + (1.0 - lambda) * l2 - 1e-9,
                "concavity violated at seed {seed}: {lm} < {}",
                lambda * l1 + (1.0 - lambda) * l2
            );
        }
    }
}

#[test]
fn gradient_matches_finite_differences_on_ensemble() {
    // 100 random (instance, x) pairs, m up to 50.
    let mut checked = 0;
    for seed in 0..100u64 {
        let m = 5 + (seed as usize * 7) % 46;
        let dims = ProblemDims::new(m, 3).unwrap();
        let mut gen = GenConfig::new(dims);
        gen.seed = 40_000 + seed;
        let inst = generate_instance(&gen, None).unwrap();
        let x = rand_x(500 + seed, 3, -1.5, 1.5);
        let g = grad_log_likelihood(&inst, &x).unwrap();
        let h = 1e-5;
        for j in 0..3 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            let fd = (log_likelihood(&inst, &xp).unwrap() - log_likelihood(&inst, &xm).unwrap())
                / (2.0 * h);
            let rel = (g[j] - fd).abs() / g[j].abs().max(fd.abs()).max(1e-9);
            assert!(rel <= 1e-6, "seed {seed} comp {j}: {} vs fd {fd}", g[j]);
            checked += 1;
        }
    }
    assert_eq!(checked, 300);
}

#[test]
fn gradient_lies_in_row_space_of_h() {
    // With fewer measurements than unknowns the gradient must be a combination
    // of the rows of H: the least-squares residual against H' is ~0.
    for seed in 0..20u64 {
        let m = 2;
        let n = 5;
        let dims = ProblemDims::new(m, n).unwrap();
        let mut gen = GenConfig::new(dims);
        gen.seed = 7000 + seed;
        let inst = generate_instance(&gen, None).unwrap();
        let x = rand_x(seed + 1, n, -1.0, 1.0);
        let g = grad_log_likelihood(&inst, &x).unwrap();

        // Solve (H H') w = H g by hand (2x2), then residual = g - H' w.
        let h = &inst.h;
        let mut a = [[0.0f64; 2]; 2];
        for i in 0..m {
            for j in 0..m {
                a[i][j] = deeprec_core::linalg::dot(h.row(i), h.row(j));
            }
        }
        let b = [
            deeprec_core::linalg::dot(h.row(0), &g),
            deeprec_core::linalg::dot(h.row(1), &g),
        ];
        let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
        assert!(det.abs() > 1e-12, "degenerate fixture");
        let w = [
            (b[0] * a[1][1] - b[1] * a[0][1]) / det,
            (a[0][0] * b[1] - a[1][0] * b[0]) / det,
        ];
        let mut residual = g.clone();
        for j in 0..n {
            residual[j] -= w[0] * h.get(0, j) + w[1] * h.get(1, j);
        }
        let rnorm = deeprec_core::linalg::norm2(&residual);
        assert!(rnorm <= 1e-10, "seed {seed}: residual {rnorm}");
    }
}

#[test]
fn backward_finite_difference_sweep() {
    // >= 20 fixtures spanning K in {1,2,3}.
    let mut fixtures = 0;
    for k_layers in [1usize, 2, 3] {
        for seed in 0..7u64 {
            let dims = ProblemDims::new(8, 3).unwrap();
            let mut gen = GenConfig::new(dims);
            gen.seed = 60_000 + seed * 13 + k_layers as u64;
            let inst = generate_instance(&gen, None).unwrap();
            let net =
                UnfoldedNetwork::random(dims, k_layers, 0.01, seed * 7 + 1, 0.05).unwrap();
            let (_, trace) = net.forward(&inst, true).unwrap();
            let grads = backward(&net, &inst, &trace.unwrap(), &inst.x_true).unwrap();
            let h = 1e-6;
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
                        let rel = (g - fd).abs() / g.abs().max(fd.abs()).max(1e-4);
                        assert!(
                            rel <= 1e-5,
                            "K={k_layers} seed={seed} layer {k} block {b} entry {i}: {g} vs {fd}"
                        );
                    }
                }
            }
            fixtures += 1;
        }
    }
    assert!(fixtures >= 20);
}

#[test]
fn unfolded_forward_tracks_long_gradient_ascent() {
    // Deeper check of the unfolding anchor at K = 80 on one fixture.
    let mut seed = 0u64;
    let inst = loop {
        seed += 1;
        let mut rng = rng::seeded(seed ^ 0x5eed);
        let m = 18;
        let uh = Uniform::new(0.05, 1.0).unwrap();
        let ux = Uniform::new(0.5, 1.0).unwrap();
        let ut = Uniform::new(-1.0, -0.2).unwrap();
        let us = Uniform::new(0.01, 0.09).unwrap();
        let h = Mat::from_vec(m, 3, (0..m * 3).map(|_| uh.sample(&mut rng)).collect());
        let x_true: Vec<f64> = (0..3).map(|_| ux.sample(&mut rng)).collect();
        let tau: Vec<f64> = (0..m).map(|_| ut.sample(&mut rng)).collect();
        let sigma2: Vec<f64> = (0..m).map(|_| us.sample(&mut rng)).collect();
        let mut y = h.matvec(&x_true);
        for (yi, &s2) in y.iter_mut().zip(sigma2.iter()) {
            let g: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng);
            *yi += s2.sqrt() * g;
        }
        let r = deeprec_core::model::quantize(&y, &tau).unwrap();
        if r.iter().all(|&ri| ri == 1.0) {
            break deeprec_core::model::ProblemInstance {
                h,
                sigma2,
                tau,
                x_true,
                r,
            };
        }
    };
    let dims = inst.dims();
    let net = UnfoldedNetwork::gd_equivalent(dims, 80, 0.01).unwrap();
    let (x_net, _) = net.forward(&inst, false).unwrap();
    let gd = gd_recover(&inst, &GdConfig::new(0.01, 80)).unwrap();
    let scale = gd
        .x_hat
        .iter()
        .fold(1e-30f64, |acc, v| acc.max(v.abs()));
    let gap = x_net
        .iter()
        .zip(gd.x_hat.iter())
        .fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()))
        / scale;
    assert!(gap <= 1e-12, "rel gap {gap:e}");
}

proptest! {
    #[test]
    fn eta_is_negative_and_ordered(x1 in 0.0f64..29.0, gap in 0.001f64..5.0) {
        // For x2 > x1 >= 0: eta(x2) < eta(x1) < 0.
        let x2 = (x1 + gap).min(29.9);
        prop_assert!(eta(x1) < 0.0);
        prop_assert!(eta(x2) < eta(x1));
    }

    #[test]
    fn eta_asymptote_beyond_ten(x in 10.0f64..29.9) {
        prop_assert!((eta(x) + x + 1.0 / x).abs() <= 1e-2);
    }

    #[test]
    fn nmse_rotation_invariance(theta in 0.0f64..core::f64::consts::TAU, a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let x = [1.0 + a * a, a, b];
        let xh = [b, 0.5 - a, 1.0];
        let (c, s) = (theta.cos(), theta.sin());
        let rot = |v: &[f64]| vec![c * v[0] - s * v[1], s * v[0] + c * v[1], v[2]];
        let n1 = deeprec_core::model::nmse(&x, &xh).unwrap();
        let n2 = deeprec_core::model::nmse(&rot(&x), &rot(&xh)).unwrap();
        prop_assert!((n1 - n2).abs() <= 1e-12 * n1.max(1.0));
    }
}
