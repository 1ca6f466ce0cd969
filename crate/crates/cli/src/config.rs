//! Harness configuration: `key = value` config files plus flag overrides.
//!
//! Every experiment is a pure function of one `Config` value; the canonical
//! dump of that value (plus the experiment name) is what gets fingerprinted.

use std::fmt::Write as _;
use std::path::Path;

use deeprec_core::model::{GenConfig, ProblemDims};
use deeprec_core::train::TrainConfig;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    // problem dimensions and generation bounds
    pub m: usize,
    pub n: usize,
    pub x_low: f64,
    pub x_high: f64,
    pub tau_low: f64,
    pub tau_high: f64,
    pub noise_low: f64,
    pub noise_high: f64,
    pub seed: u64,
    // gradient-ascent baseline
    pub gd_step: f64,
    /// 0 means "match the network depth".
    pub gd_iters: usize,
    // network
    pub k_layers: usize,
    pub delta: f64,
    pub perturb: f64,
    // training
    pub batch_size: usize,
    pub epochs: usize,
    pub batches_per_epoch: usize,
    pub lr0: f64,
    pub decay_rate: f64,
    pub decay_every: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// 0 disables clipping.
    pub grad_clip: f64,
    pub eval_every: usize,
    pub val_size: usize,
    // experiments
    pub trials: usize,
    pub sweep_k: Vec<usize>,
    pub sweep_m: Vec<usize>,
    pub timing_runs: usize,
    pub warmup_runs: usize,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            m: 40,
            n: 3,
            x_low: 0.0,
            x_high: 1.0,
            tau_low: -1.0,
            tau_high: 4.0,
            noise_low: 0.1,
            noise_high: 1.0,
            seed: 1,
            gd_step: 0.01,
            gd_iters: 0,
            k_layers: 90,
            delta: 0.01,
            perturb: 0.0,
            batch_size: 500,
            epochs: 2000,
            batches_per_epoch: 1,
            lr0: 1e-3,
            decay_rate: 0.97,
            decay_every: 100,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            grad_clip: 0.0,
            eval_every: 50,
            val_size: 2000,
            trials: 1000,
            sweep_k: vec![5, 10, 20, 40, 90],
            sweep_m: vec![10, 20, 40, 80, 160],
            timing_runs: 100,
            warmup_runs: 10,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> std::result::Result<T, String> {
    value
        .trim()
        .parse()
        .map_err(|_| format!("cannot parse value `{value}` for key `{key}`"))
}

fn parse_list(key: &str, value: &str) -> std::result::Result<Vec<usize>, String> {
    let items: std::result::Result<Vec<usize>, String> = value
        .split(',')
        .map(|tok| parse_num::<usize>(key, tok))
        .collect();
    let items = items?;
    if items.is_empty() {
        return Err(format!("empty list for key `{key}`"));
    }
    Ok(items)
}

impl Config {
    /// Applies one `key = value` assignment. Unknown keys are an error so
    /// config typos cannot silently change an experiment.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let v = value.trim();
        match key {
            "m" => self.m = parse_num(key, v)?,
            "n" => self.n = parse_num(key, v)?,
            "x_low" => self.x_low = parse_num(key, v)?,
            "x_high" => self.x_high = parse_num(key, v)?,
            "tau_low" => self.tau_low = parse_num(key, v)?,
            "tau_high" => self.tau_high = parse_num(key, v)?,
            "noise_low" => self.noise_low = parse_num(key, v)?,
            "noise_high" => self.noise_high = parse_num(key, v)?,
            "seed" => self.seed = parse_num(key, v)?,
            "gd_step" => self.gd_step = parse_num(key, v)?,
            "gd_iters" => self.gd_iters = parse_num(key, v)?,
            "k_layers" => self.k_layers = parse_num(key, v)?,
            "delta" => self.delta = parse_num(key, v)?,
            "perturb" => self.perturb = parse_num(key, v)?,
            "batch_size" => self.batch_size = parse_num(key, v)?,
            "epochs" => self.epochs = parse_num(key, v)?,
            "batches_per_epoch" => self.batches_per_epoch = parse_num(key, v)?,
            "lr0" => self.lr0 = parse_num(key, v)?,
            "decay_rate" => self.decay_rate = parse_num(key, v)?,
            "decay_every" => self.decay_every = parse_num(key, v)?,
            "adam_beta1" => self.adam_beta1 = parse_num(key, v)?,
            "adam_beta2" => self.adam_beta2 = parse_num(key, v)?,
            "adam_eps" => self.adam_eps = parse_num(key, v)?,
            "grad_clip" => self.grad_clip = parse_num(key, v)?,
            "eval_every" => self.eval_every = parse_num(key, v)?,
            "val_size" => self.val_size = parse_num(key, v)?,
            "trials" => self.trials = parse_num(key, v)?,
            "sweep_k" => self.sweep_k = parse_list(key, v)?,
            "sweep_m" => self.sweep_m = parse_list(key, v)?,
            "timing_runs" => self.timing_runs = parse_num(key, v)?,
            "warmup_runs" => self.warmup_runs = parse_num(key, v)?,
            other => return Err(format!("unknown config key `{other}`")),
        }
        Ok(())
    }

    /// Reads a config file of `key = value` lines; `#` starts a comment.
    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_owned(),
            source,
        })?;
        let mut cfg = Config::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::Parse {
                    path: path.to_owned(),
                    line: idx + 1,
                    msg: format!("expected `key = value`, got `{line}`"),
                });
            };
            cfg.set(key.trim(), value).map_err(|msg| CliError::Parse {
                path: path.to_owned(),
                line: idx + 1,
                msg,
            })?;
        }
        Ok(cfg)
    }

    /// Canonical dump: fixed key order, round-trip number formatting. Equal
    /// configs produce equal dumps, which is what the fingerprint hashes.
    pub fn canonical(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("m", self.m.to_string());
        kv("n", self.n.to_string());
        kv("x_low", self.x_low.to_string());
        kv("x_high", self.x_high.to_string());
        kv("tau_low", self.tau_low.to_string());
        kv("tau_high", self.tau_high.to_string());
        kv("noise_low", self.noise_low.to_string());
        kv("noise_high", self.noise_high.to_string());
        kv("seed", self.seed.to_string());
        kv("gd_step", self.gd_step.to_string());
        kv("gd_iters", self.gd_iters.to_string());
        kv("k_layers", self.k_layers.to_string());
        kv("delta", self.delta.to_string());
        kv("perturb", self.perturb.to_string());
        kv("batch_size", self.batch_size.to_string());
        kv("epochs", self.epochs.to_string());
        kv("batches_per_epoch", self.batches_per_epoch.to_string());
        kv("lr0", self.lr0.to_string());
        kv("decay_rate", self.decay_rate.to_string());
        kv("decay_every", self.decay_every.to_string());
        kv("adam_beta1", self.adam_beta1.to_string());
        kv("adam_beta2", self.adam_beta2.to_string());
        kv("adam_eps", self.adam_eps.to_string());
        kv("grad_clip", self.grad_clip.to_string());
        kv("eval_every", self.eval_every.to_string());
        kv("val_size", self.val_size.to_string());
        kv("trials", self.trials.to_string());
        let fmt_list = |xs: &[usize]| {
            xs.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        kv("sweep_k", fmt_list(&self.sweep_k));
        kv("sweep_m", fmt_list(&self.sweep_m));
        kv("timing_runs", self.timing_runs.to_string());
        kv("warmup_runs", self.warmup_runs.to_string());
        s
    }

    /// Generation config at the configured dimensions.
    pub fn gen_config(&self) -> Result<GenConfig> {
        self.gen_config_at(self.m)
    }

    /// Generation config at an explicit measurement count (for M sweeps).
    pub fn gen_config_at(&self, m: usize) -> Result<GenConfig> {
        let dims = ProblemDims::new(m, self.n)?;
        let mut gen = GenConfig::new(dims);
        gen.x_low = self.x_low;
        gen.x_high = self.x_high;
        gen.tau_low = self.tau_low;
        gen.tau_high = self.tau_high;
        gen.noise_low = self.noise_low;
        gen.noise_high = self.noise_high;
        gen.seed = self.seed;
        gen.validate()?;
        Ok(gen)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            epochs: self.epochs,
            batches_per_epoch: self.batches_per_epoch,
            lr0: self.lr0,
            decay_rate: self.decay_rate,
            decay_every: self.decay_every,
            adam_beta1: self.adam_beta1,
            adam_beta2: self.adam_beta2,
            adam_eps: self.adam_eps,
            grad_clip: if self.grad_clip > 0.0 {
                Some(self.grad_clip)
            } else {
                None
            },
            eval_every: self.eval_every,
            val_size: self.val_size,
            seed: self.seed,
        }
    }

    /// Iterations for the gradient-ascent baseline (0 means "match K").
    pub fn gd_iters_effective(&self) -> usize {
        if self.gd_iters == 0 {
            self.k_layers
        } else {
            self.gd_iters
        }
    }
}
