//! Implementations behind the CLI subcommands. Everything returns strings or
//! writes files so the binary stays a thin argument-parsing shell.

use std::fmt::Write as _;
use std::path::Path;

use deeprec_core::gd::{gd_recover, GdConfig};
use deeprec_core::model::{generate_instance, nmse, ProblemInstance};
use deeprec_core::train::LossReport;

use crate::config::Config;
use crate::error::{CliError, Result};
use crate::experiments::{self, file_fingerprint, ExperimentReport};
use crate::{instfile, netfile};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Plain,
}

/// Builds the effective config: file, then `--set` overrides, then `--seed`.
pub fn effective_config(
    config_path: Option<&Path>,
    sets: &[String],
    seed: Option<u64>,
) -> Result<Config> {
    let mut cfg = match config_path {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    for assignment in sets {
        let Some((key, value)) = assignment.split_once('=') else {
            return Err(CliError::usage(format!(
                "--set expects KEY=VALUE, got `{assignment}`"
            )));
        };
        cfg.set(key.trim(), value)
            .map_err(CliError::Usage)?;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn write_or_stdout(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|source| CliError::Io {
            path: path.to_owned(),
            source,
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn cmd_generate(cfg: &Config, out: Option<&Path>, with_truth: bool) -> Result<()> {
    let gen = cfg.gen_config()?;
    let inst = generate_instance(&gen, None)?;
    write_or_stdout(out, &instfile::encode(&inst, with_truth))
}

fn loss_report_csv(reports: &[LossReport], fp: &str) -> String {
    let mut out = String::from("epoch,loss,val_nmse,lr\n");
    for r in reports {
        let val = r.val_nmse.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{},{},{},{}", r.epoch, r.loss, val, r.lr);
    }
    let _ = writeln!(out, "# fingerprint={fp}");
    out
}

pub fn cmd_train(cfg: &Config, out: &Path, report: Option<&Path>) -> Result<String> {
    let (net, reports) = experiments::train_network(cfg, cfg.m, cfg.k_layers)?;
    netfile::save_network(&net, out)?;
    if let Some(report_path) = report {
        let fp = file_fingerprint(cfg, "train");
        std::fs::write(report_path, loss_report_csv(&reports, &fp)).map_err(|source| {
            CliError::Io {
                path: report_path.to_owned(),
                source,
            }
        })?;
    }
    let best = reports
        .iter()
        .filter_map(|r| r.val_nmse)
        .fold(f64::INFINITY, f64::min);
    Ok(format!(
        "trained K={} network at m={} (best validation NMSE {best}), weights: {}\n",
        cfg.k_layers,
        cfg.m,
        out.display()
    ))
}

pub fn cmd_eval(
    cfg: &Config,
    weights: &Path,
    with_gd: bool,
    out: Option<&Path>,
    format: OutputFormat,
) -> Result<String> {
    let net = netfile::load_network(weights)?;
    if net.dims.n != cfg.n {
        return Err(CliError::Format {
            path: weights.to_owned(),
            msg: format!(
                "weight file has n={}, config expects n={}",
                net.dims.n, cfg.n
            ),
        });
    }
    let m = net.dims.m;
    let gen = cfg.gen_config_at(m)?;
    let h = experiments::sensing_matrix(cfg, net.dims);
    let mut rows = Vec::new();
    let fp = file_fingerprint(cfg, "eval");
    let mean = experiments::eval_network(&net, &gen, &h, cfg.trials)?;
    rows.push(ExperimentReport {
        experiment: "eval",
        sweep_var: "M",
        sweep_value: m,
        method: "deeprec",
        mean_nmse: mean,
        trials: cfg.trials,
        median_runtime_s: None,
        fingerprint: fp.clone(),
    });
    if with_gd {
        let gd_cfg = GdConfig::new(
            cfg.gd_step,
            if cfg.gd_iters == 0 {
                net.layers.len()
            } else {
                cfg.gd_iters
            },
        );
        let gd_mean = experiments::eval_gd(&gd_cfg, &gen, &h, cfg.trials)?;
        rows.push(ExperimentReport {
            experiment: "eval",
            sweep_var: "M",
            sweep_value: m,
            method: "gd",
            mean_nmse: gd_mean,
            trials: cfg.trials,
            median_runtime_s: None,
            fingerprint: fp.clone(),
        });
    }
    let text = match format {
        OutputFormat::Csv => experiments::render_csv(&rows, &[], &fp),
        OutputFormat::Plain => {
            let mut s = String::new();
            for r in &rows {
                let _ = writeln!(
                    s,
                    "{} at M={}: mean NMSE {} over {} trials",
                    r.method, r.sweep_value, r.mean_nmse, r.trials
                );
            }
            s
        }
    };
    write_or_stdout(out, &text)?;
    Ok(text)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecoverMethod {
    Gd,
    Net,
}

pub struct RecoverArgs<'a> {
    pub instance: Option<&'a Path>,
    pub generate: bool,
    pub method: RecoverMethod,
    pub weights: Option<&'a Path>,
}

/// Single-instance recovery. Flag conflicts are usage errors (exit 2);
/// numeric and file-format failures exit 3.
pub fn cmd_recover(
    cfg: &Config,
    args: &RecoverArgs<'_>,
    out: Option<&Path>,
    format: OutputFormat,
) -> Result<String> {
    if args.instance.is_some() && args.generate {
        return Err(CliError::usage(
            "--instance and --gen are mutually exclusive",
        ));
    }
    if args.instance.is_none() && !args.generate {
        return Err(CliError::usage("provide --instance <file> or --gen"));
    }
    match args.method {
        RecoverMethod::Net if args.weights.is_none() => {
            return Err(CliError::usage("--method net requires --weights <file>"))
        }
        RecoverMethod::Gd if args.weights.is_some() => {
            return Err(CliError::usage("--weights only applies to --method net"))
        }
        _ => {}
    }

    let (inst, has_truth): (ProblemInstance, bool) = match args.instance {
        Some(path) => {
            let loaded = instfile::load_instance(path)?;
            (loaded.inst, loaded.has_truth)
        }
        None => {
            let gen = cfg.gen_config()?;
            (generate_instance(&gen, None)?, true)
        }
    };

    let x_hat = match args.method {
        RecoverMethod::Gd => {
            let gd_cfg = GdConfig::new(cfg.gd_step, cfg.gd_iters_effective());
            gd_recover(&inst, &gd_cfg)?.x_hat
        }
        RecoverMethod::Net => {
            let net = netfile::load_network(args.weights.expect("checked above"))?;
            if net.dims != inst.dims() {
                return Err(CliError::Format {
                    path: args.weights.expect("checked above").to_owned(),
                    msg: format!(
                        "weight file dims {}x{} do not match instance dims {}x{}",
                        net.dims.m,
                        net.dims.n,
                        inst.dims().m,
                        inst.dims().n
                    ),
                });
            }
            net.forward(&inst, false)?.0
        }
    };
    let err = if has_truth {
        Some(nmse(&inst.x_true, &x_hat)?)
    } else {
        None
    };

    let text = match format {
        OutputFormat::Csv => {
            // One row: the n estimate entries plus the NMSE column.
            let mut fields: Vec<String> = x_hat.iter().map(|v| v.to_string()).collect();
            fields.push(err.map(|e| e.to_string()).unwrap_or_default());
            format!("{}\n", fields.join(","))
        }
        OutputFormat::Plain => {
            let mut s = String::new();
            let _ = writeln!(
                s,
                "x_hat = [{}]",
                x_hat
                    .iter()
                    .map(|v| v.to_string())
                    .collect::<Vec<_>>()
                    .join(", ")
            );
            match err {
                Some(e) => {
                    let _ = writeln!(s, "nmse = {e}");
                }
                None => {
                    let _ = writeln!(s, "nmse = (unknown: instance carries no ground truth)");
                }
            }
            s
        }
    };
    write_or_stdout(out, &text)?;
    Ok(text)
}

pub enum Experiment {
    Layers,
    VsGd,
    Runtime,
}

pub fn cmd_experiment(
    cfg: &Config,
    which: Experiment,
    weights_dir: Option<&Path>,
    out: Option<&Path>,
    format: OutputFormat,
) -> Result<String> {
    let (name, rows, warnings) = match which {
        Experiment::Layers => ("exp-layers", experiments::exp_layers(cfg, weights_dir)?, vec![]),
        Experiment::VsGd => ("exp-vs-gd", experiments::exp_vs_gd(cfg, weights_dir)?, vec![]),
        Experiment::Runtime => {
            let (rows, warnings) = experiments::exp_runtime(cfg, weights_dir)?;
            ("exp-runtime", rows, warnings)
        }
    };
    let csv = experiments::render_csv(&rows, &warnings, &file_fingerprint(cfg, name));
    if let Some(path) = out {
        std::fs::write(path, &csv).map_err(|source| CliError::Io {
            path: path.to_owned(),
            source,
        })?;
    }
    let text = match format {
        OutputFormat::Csv => csv.clone(),
        OutputFormat::Plain => {
            let mut s = String::new();
            for r in &rows {
                let runtime = r
                    .median_runtime_s
                    .map(|t| format!(", median {t:.3e} s/recovery"))
                    .unwrap_or_default();
                let _ = writeln!(
                    s,
                    "{} {}={}: {} mean NMSE {}{runtime}",
                    r.experiment, r.sweep_var, r.sweep_value, r.method, r.mean_nmse
                );
            }
            for w in &warnings {
                let _ = writeln!(s, "warning: {w}");
            }
            s
        }
    };
    if out.is_none() {
        print!("{text}");
    }
    Ok(text)
}
