use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use deeprec_cli::commands::{self, Experiment, OutputFormat, RecoverArgs, RecoverMethod};
use deeprec_cli::config::Config;

#[derive(Parser)]
#[command(
    name = "deeprec",
    version,
    about = "One-bit signal recovery: ML gradient ascent and the DeepRec unfolded network"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Config file of `key = value` lines
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override one config key (repeatable), e.g. --set m=80
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Override the base seed
    #[arg(long)]
    seed: Option<u64>,
    /// Output path (default: stdout)
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Output format
    #[arg(long, value_enum, default_value_t = Format::Plain)]
    format: Format,
}

impl Common {
    fn config(&self) -> deeprec_cli::Result<Config> {
        commands::effective_config(self.config.as_deref(), &self.set, self.seed)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Plain,
}

impl From<Format> for OutputFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => OutputFormat::Csv,
            Format::Plain => OutputFormat::Plain,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Gd,
    Net,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic problem instance file
    Generate {
        #[command(flatten)]
        common: Common,
        /// Omit the ground-truth block
        #[arg(long)]
        no_truth: bool,
    },
    /// Train a network and save its weights
    Train {
        #[command(flatten)]
        common: Common,
        /// Where to stream the per-epoch loss CSV
        #[arg(long, value_name = "FILE")]
        report: Option<PathBuf>,
    },
    /// Evaluate a weight file on a seeded test set
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "FILE")]
        weights: PathBuf,
        /// Also evaluate the gradient-ascent baseline on the same instances
        #[arg(long)]
        with_gd: bool,
    },
    /// Recover a single instance and print the estimate
    Recover {
        #[command(flatten)]
        common: Common,
        /// Instance file to recover
        #[arg(long, value_name = "FILE")]
        instance: Option<PathBuf>,
        /// Generate the instance from the config instead
        #[arg(long)]
        gen: bool,
        #[arg(long, value_enum, default_value_t = Method::Gd)]
        method: Method,
        /// Weight file (required for --method net)
        #[arg(long, value_name = "FILE")]
        weights: Option<PathBuf>,
    },
    /// NMSE versus network depth K at fixed M
    ExpLayers {
        #[command(flatten)]
        common: Common,
        /// Cache directory for trained weight files
        #[arg(long, value_name = "DIR")]
        weights_dir: Option<PathBuf>,
    },
    /// Trained network versus gradient ascent across measurement counts M
    ExpVsGd {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "DIR")]
        weights_dir: Option<PathBuf>,
    },
    /// Per-recovery wall-clock comparison across measurement counts M
    ExpRuntime {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "DIR")]
        weights_dir: Option<PathBuf>,
    },
}

fn run(command: Command) -> deeprec_cli::Result<()> {
    match command {
        Command::Generate { common, no_truth } => {
            let cfg = common.config()?;
            commands::cmd_generate(&cfg, common.out.as_deref(), !no_truth)
        }
        Command::Train { common, report } => {
            let cfg = common.config()?;
            let out = common
                .out
                .as_deref()
                .ok_or_else(|| deeprec_cli::CliError::usage("train requires --out <weights>"))?;
            let summary = commands::cmd_train(&cfg, out, report.as_deref())?;
            print!("{summary}");
            Ok(())
        }
        Command::Eval {
            common,
            weights,
            with_gd,
        } => {
            let cfg = common.config()?;
            commands::cmd_eval(
                &cfg,
                &weights,
                with_gd,
                common.out.as_deref(),
                common.format.into(),
            )
            .map(|_| ())
        }
        Command::Recover {
            common,
            instance,
            gen,
            method,
            weights,
        } => {
            let cfg = common.config()?;
            let args = RecoverArgs {
                instance: instance.as_deref(),
                generate: gen,
                method: match method {
                    Method::Gd => RecoverMethod::Gd,
                    Method::Net => RecoverMethod::Net,
                },
                weights: weights.as_deref(),
            };
            commands::cmd_recover(&cfg, &args, common.out.as_deref(), common.format.into())
                .map(|_| ())
        }
        Command::ExpLayers {
            common,
            weights_dir,
        } => run_experiment(&common, weights_dir, Experiment::Layers),
        Command::ExpVsGd {
            common,
            weights_dir,
        } => run_experiment(&common, weights_dir, Experiment::VsGd),
        Command::ExpRuntime {
            common,
            weights_dir,
        } => run_experiment(&common, weights_dir, Experiment::Runtime),
    }
}

fn run_experiment(
    common: &Common,
    weights_dir: Option<PathBuf>,
    which: Experiment,
) -> deeprec_cli::Result<()> {
    let cfg = common.config()?;
    commands::cmd_experiment(
        &cfg,
        which,
        weights_dir.as_deref(),
        common.out.as_deref(),
        common.format.into(),
    )
    .map(|_| ())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
