//! Seeded experiment harness: per-configuration evaluation, the three sweep
//! experiments, and their CSV reports.
//!
//! Stream layout per config seed: validation uses stream 0 and training
//! batches streams 1.. (both inside `train`); the sensing matrix uses stream
//! `u64::MAX` and test trial i uses stream `u64::MAX - 2 - i`. Ground truths
//! are drawn before the measurement-sized blocks, so test trial i shares its
//! unknown across different M: sweep comparisons are paired.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use deeprec_core::gd::{gd_recover, GdConfig};
use deeprec_core::linalg::Mat;
use deeprec_core::model::{
    generate_instance_with, nmse, sample_gaussian_matrix, GenConfig, ProblemDims, ProblemInstance,
};
use deeprec_core::net::UnfoldedNetwork;
use deeprec_core::rng;
use deeprec_core::train::{train, LossReport};
use sha2::{Digest, Sha256};

use crate::config::Config;
use crate::error::Result;
use crate::netfile;

const H_STREAM: u64 = u64::MAX;
const TEST_STREAM_TOP: u64 = u64::MAX - 2;

/// One row of an experiment CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub experiment: &'static str,
    pub sweep_var: &'static str,
    pub sweep_value: usize,
    pub method: &'static str,
    pub mean_nmse: f64,
    pub trials: usize,
    /// Median wall-clock seconds per recovery; only the runtime experiment
    /// measures it (wall-clock in the other reports would break their
    /// byte-level reproducibility).
    pub median_runtime_s: Option<f64>,
    pub fingerprint: String,
}

/// First 16 hex chars of sha256(payload).
pub fn fingerprint_hex(payload: &str) -> String {
    let digest = Sha256::digest(payload.as_bytes());
    let mut s = String::with_capacity(16);
    for b in &digest[..8] {
        let _ = write!(s, "{b:02x}");
    }
    s
}

fn row_fingerprint(cfg: &Config, experiment: &str, sweep_var: &str, value: usize) -> String {
    fingerprint_hex(&format!(
        "{experiment}\n{sweep_var} = {value}\n{}",
        cfg.canonical()
    ))
}

pub fn file_fingerprint(cfg: &Config, experiment: &str) -> String {
    fingerprint_hex(&format!("{experiment}\n{}", cfg.canonical()))
}

/// The fixed sensing matrix of a sweep point.
pub fn sensing_matrix(cfg: &Config, dims: ProblemDims) -> Mat {
    let mut rng = rng::substream(cfg.seed, H_STREAM);
    sample_gaussian_matrix(dims, &mut rng)
}

/// Test instance for trial `i`: stream `u64::MAX - 2 - i` of the config seed.
pub fn test_instance(gen: &GenConfig, h: &Mat, trial: usize) -> Result<ProblemInstance> {
    let mut rng = rng::substream(gen.seed, TEST_STREAM_TOP - trial as u64);
    Ok(generate_instance_with(&mut rng, gen, Some(h))?)
}

pub fn eval_network(
    net: &UnfoldedNetwork,
    gen: &GenConfig,
    h: &Mat,
    trials: usize,
) -> Result<f64> {
    let mut acc = 0.0;
    for i in 0..trials {
        let inst = test_instance(gen, h, i)?;
        let (x_hat, _) = net.forward(&inst, false)?;
        acc += nmse(&inst.x_true, &x_hat)?;
    }
    Ok(acc / trials as f64)
}

pub fn eval_gd(gd: &GdConfig, gen: &GenConfig, h: &Mat, trials: usize) -> Result<f64> {
    let mut acc = 0.0;
    for i in 0..trials {
        let inst = test_instance(gen, h, i)?;
        let res = gd_recover(&inst, gd)?;
        acc += nmse(&inst.x_true, &res.x_hat)?;
    }
    Ok(acc / trials as f64)
}

/// Trains a fresh network for `(m, k)` under the config's bounds and
/// training parameters.
pub fn train_network(
    cfg: &Config,
    m: usize,
    k: usize,
) -> Result<(UnfoldedNetwork, Vec<LossReport>)> {
    let gen = cfg.gen_config_at(m)?;
    let h = sensing_matrix(cfg, gen.dims);
    let net = if cfg.perturb > 0.0 {
        UnfoldedNetwork::random(gen.dims, k, cfg.delta, cfg.seed, cfg.perturb)?
    } else {
        UnfoldedNetwork::gd_equivalent(gen.dims, k, cfg.delta)?
    };
    let (trained, reports) = train(net, &gen, &cfg.train_config(), &h)?;
    Ok((trained, reports))
}

fn cache_key(cfg: &Config, m: usize, k: usize) -> String {
    // Only fields that influence the trained weights enter the key.
    let payload = format!(
        "train\nm={m}\nk={k}\nn={}\nbounds={} {} {} {} {} {}\nseed={}\ndelta={}\nperturb={}\n\
         batch={} epochs={} bpe={} lr0={} decay={}/{} betas={} {} eps={} clip={} eval={} val={}",
        cfg.n,
        cfg.x_low,
        cfg.x_high,
        cfg.tau_low,
        cfg.tau_high,
        cfg.noise_low,
        cfg.noise_high,
        cfg.seed,
        cfg.delta,
        cfg.perturb,
        cfg.batch_size,
        cfg.epochs,
        cfg.batches_per_epoch,
        cfg.lr0,
        cfg.decay_rate,
        cfg.decay_every,
        cfg.adam_beta1,
        cfg.adam_beta2,
        cfg.adam_eps,
        cfg.grad_clip,
        cfg.eval_every,
        cfg.val_size
    );
    fingerprint_hex(&payload)
}

/// Loads the trained network for `(m, k)` from the weights directory when a
/// matching file exists, otherwise trains it (and saves it when a directory
/// was given). Training is bit-reproducible, so both paths agree.
pub fn train_or_load(
    cfg: &Config,
    m: usize,
    k: usize,
    weights_dir: Option<&Path>,
) -> Result<UnfoldedNetwork> {
    let file = weights_dir.map(|d| d.join(format!("net_m{m}_k{k}_{}.txt", cache_key(cfg, m, k))));
    if let Some(path) = &file {
        if path.is_file() {
            return netfile::load_network(path);
        }
    }
    let (net, _) = train_network(cfg, m, k)?;
    if let Some(path) = &file {
        if let Some(parent) = path.parent() {
            let _ = std::fs::create_dir_all(parent);
        }
        netfile::save_network(&net, path)?;
    }
    Ok(net)
}

/// Layer sweep: one trained network per K at fixed M, mean NMSE on the
/// seeded test set.
pub fn exp_layers(cfg: &Config, weights_dir: Option<&Path>) -> Result<Vec<ExperimentReport>> {
    let gen = cfg.gen_config_at(cfg.m)?;
    let h = sensing_matrix(cfg, gen.dims);
    let mut rows = Vec::new();
    for &k in &cfg.sweep_k {
        let net = train_or_load(cfg, cfg.m, k, weights_dir)?;
        let mean = eval_network(&net, &gen, &h, cfg.trials)?;
        rows.push(ExperimentReport {
            experiment: "exp-layers",
            sweep_var: "K",
            sweep_value: k,
            method: "deeprec",
            mean_nmse: mean,
            trials: cfg.trials,
            median_runtime_s: None,
            fingerprint: row_fingerprint(cfg, "exp-layers", "K", k),
        });
    }
    Ok(rows)
}

/// Measurement sweep: trained network vs the gradient-ascent baseline with
/// matching iteration count, on identical instances per M.
pub fn exp_vs_gd(cfg: &Config, weights_dir: Option<&Path>) -> Result<Vec<ExperimentReport>> {
    let k = cfg.k_layers;
    let gd_cfg = GdConfig::new(cfg.gd_step, cfg.gd_iters_effective());
    let mut rows = Vec::new();
    for &m in &cfg.sweep_m {
        let gen = cfg.gen_config_at(m)?;
        let h = sensing_matrix(cfg, gen.dims);
        let net = train_or_load(cfg, m, k, weights_dir)?;
        let fp = row_fingerprint(cfg, "exp-vs-gd", "M", m);
        let net_mean = eval_network(&net, &gen, &h, cfg.trials)?;
        let gd_mean = eval_gd(&gd_cfg, &gen, &h, cfg.trials)?;
        for (method, mean) in [("deeprec", net_mean), ("gd", gd_mean)] {
            rows.push(ExperimentReport {
                experiment: "exp-vs-gd",
                sweep_var: "M",
                sweep_value: m,
                method,
                mean_nmse: mean,
                trials: cfg.trials,
                median_runtime_s: None,
                fingerprint: fp.clone(),
            });
        }
    }
    Ok(rows)
}

/// True when the per-run time is too small for the timer to resolve
/// meaningfully (fewer than 100 nanosecond ticks).
pub fn resolution_warning(median_s: f64) -> bool {
    median_s < 100e-9
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).expect("finite timings"));
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Wall-clock comparison per recovery: both methods timed on identical
/// instances, warm-up runs excluded, sequential execution.
pub fn exp_runtime(
    cfg: &Config,
    weights_dir: Option<&Path>,
) -> Result<(Vec<ExperimentReport>, Vec<String>)> {
    let k = cfg.k_layers;
    let gd_cfg = GdConfig::new(cfg.gd_step, cfg.gd_iters_effective());
    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    for &m in &cfg.sweep_m {
        let gen = cfg.gen_config_at(m)?;
        let h = sensing_matrix(cfg, gen.dims);
        // Timing compares per-recovery cost, which depends on shapes rather
        // than weight values: an untrained network stands in unless trained
        // weights are already cached.
        let net = match weights_dir {
            Some(dir) => train_or_load(cfg, m, k, Some(dir))?,
            None => UnfoldedNetwork::gd_equivalent(gen.dims, k, cfg.delta)?,
        };
        let instances: Vec<ProblemInstance> = (0..cfg.timing_runs + cfg.warmup_runs)
            .map(|i| test_instance(&gen, &h, i))
            .collect::<Result<_>>()?;
        let fp = row_fingerprint(cfg, "exp-runtime", "M", m);

        for method in ["deeprec", "gd"] {
            let mut times = Vec::with_capacity(cfg.timing_runs);
            let mut err_acc = 0.0;
            for (i, inst) in instances.iter().enumerate() {
                let start = Instant::now();
                let x_hat = match method {
                    "deeprec" => net.forward(inst, false)?.0,
                    _ => gd_recover(inst, &gd_cfg)?.x_hat,
                };
                let dt = start.elapsed().as_secs_f64();
                if i >= cfg.warmup_runs {
                    times.push(dt);
                    err_acc += nmse(&inst.x_true, &x_hat)?;
                }
            }
            let med = median(times);
            if resolution_warning(med) {
                warnings.push(format!(
                    "timer resolution insufficient for {method} at M={m}: median {med:.3e} s"
                ));
            }
            rows.push(ExperimentReport {
                experiment: "exp-runtime",
                sweep_var: "M",
                sweep_value: m,
                method,
                mean_nmse: err_acc / cfg.timing_runs as f64,
                trials: cfg.timing_runs,
                median_runtime_s: Some(med),
                fingerprint: fp.clone(),
            });
        }
    }
    Ok((rows, warnings))
}

pub const CSV_HEADER: &str =
    "experiment,sweep_var,sweep_value,method,mean_nmse,trials,median_runtime_s,fingerprint";

/// Renders the report CSV: header row, one row per report, optional
/// `# warning:` lines, and the trailing config-fingerprint comment.
pub fn render_csv(reports: &[ExperimentReport], warnings: &[String], file_fp: &str) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{CSV_HEADER}");
    for r in reports {
        let runtime = match r.median_runtime_s {
            Some(t) => format!("{t:.9}"),
            None => String::new(),
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.experiment,
            r.sweep_var,
            r.sweep_value,
            r.method,
            r.mean_nmse,
            r.trials,
            runtime,
            r.fingerprint
        );
    }
    for w in warnings {
        let _ = writeln!(out, "# warning: {w}");
    }
    let _ = writeln!(out, "# fingerprint={file_fp}");
    out
}
