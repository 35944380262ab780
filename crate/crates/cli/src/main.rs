//! `qcert`: train, evaluate, certify and sweep certified quantum classifiers.

mod commands;
mod config;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use qcert_core::dataset::ResizeFilter;
use qcert_core::propagation::Arithmetic;
use qcert_core::training::LossKind;
use qcert_core::RotationKind;

use crate::config::{Overrides, RunConfig, DATA_DIR_ENV};

#[derive(Parser)]
#[command(name = "qcert", version, about = "Certified training and verification of variational quantum classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a model file with seeded random angles.
    Init(RunArgs),
    /// Train a model; writes model.json and history.csv.
    Train(RunArgs),
    /// Test, certified and PGD accuracy of a model; writes report.json and eval.csv.
    Eval(RunArgs),
    /// Per-sample certification of a model; writes certify.csv.
    Certify(RunArgs),
    /// Train and evaluate every row of the sweep grid; writes sweep.csv.
    Sweep(RunArgs),
    /// Convert a sweep or history CSV to long format for plotting.
    PlotData {
        input: PathBuf,
        /// Output file (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Clone, Debug)]
struct RunArgs {
    /// TOML or JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset root directory.
    #[arg(long, env = DATA_DIR_ENV)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long, value_parser = parse_from_str::<ResizeFilter>)]
    filter: Option<ResizeFilter>,
    #[arg(long)]
    train_limit: Option<usize>,
    #[arg(long)]
    test_limit: Option<usize>,
    #[arg(long)]
    qubits: Option<usize>,
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long, value_parser = parse_from_str::<RotationKind>)]
    rotation: Option<RotationKind>,
    #[arg(long, value_parser = parse_from_str::<LossKind>)]
    loss: Option<LossKind>,
    /// Perturbation budget for training and evaluation.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Target κ of the schedule.
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long, value_parser = parse_from_str::<Arithmetic>)]
    arithmetic: Option<Arithmetic>,
    /// Also perturb imaginary parts of the embedded amplitudes.
    #[arg(long)]
    perturb_imag: bool,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    warmup_epochs: Option<usize>,
    #[arg(long)]
    ramp_epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// PGD steps.
    #[arg(long)]
    steps: Option<usize>,
    /// Model file for eval and certify.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Sweep rows run concurrently.
    #[arg(long)]
    jobs: Option<usize>,
    /// Suppress per-epoch progress.
    #[arg(long, short)]
    quiet: bool,
}

fn parse_from_str<T: std::str::FromStr<Err = qcert_core::Error>>(s: &str) -> Result<T, String> {
    s.parse().map_err(|e: qcert_core::Error| e.to_string())
}

impl RunArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            data_dir: self.data_dir.clone(),
            dataset: self.dataset.clone(),
            filter: self.filter,
            train_limit: self.train_limit,
            test_limit: self.test_limit,
            qubits: self.qubits,
            classes: self.classes,
            layers: self.layers,
            rotation: self.rotation,
            loss: self.loss,
            epsilon: self.epsilon,
            kappa: self.kappa,
            arithmetic: self.arithmetic,
            perturb_imag: self.perturb_imag,
            epochs: self.epochs,
            warmup_epochs: self.warmup_epochs,
            ramp_epochs: self.ramp_epochs,
            batch_size: self.batch_size,
            lr: self.lr,
            seed: self.seed,
            steps: self.steps,
            checkpoint: self.checkpoint.clone(),
            output: self.out.clone(),
            jobs: self.jobs,
        }
    }

    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        cfg.apply(&self.overrides());
        cfg.resolve().context("invalid configuration")
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Init(args) => {
            let path = commands::init(&args.resolve()?)?;
            println!("{}", path.display());
        }
        Command::Train(args) => {
            let path = commands::train_cmd(&args.resolve()?, args.quiet)?;
            println!("{}", path.display());
        }
        Command::Eval(args) => {
            let r = commands::eval_cmd(&args.resolve()?)?;
            println!(
                "test_acc {:.4}  cert_acc {:.4}  pgd_acc {:.4}  (epsilon {}, {}, {} samples)",
                r.test_acc, r.cert_acc, r.pgd_acc, r.epsilon, r.arithmetic, r.n_samples
            );
        }
        Command::Certify(args) => {
            let frac = commands::certify_cmd(&args.resolve()?)?;
            println!("certified {frac:.4}");
        }
        Command::Sweep(args) => {
            let cfg = args.resolve()?;
            let rows = commands::sweep_cmd(&cfg, args.quiet)?;
            println!("{} rows -> {}", rows.len(), cfg.output.join("sweep.csv").display());
        }
        Command::PlotData { input, out } => {
            let file = std::fs::File::open(&input)
                .with_context(|| format!("opening {}", input.display()))?;
            let input_name = input.display().to_string();
            let result = match out {
                Some(path) => {
                    let w = std::fs::File::create(&path)
                        .with_context(|| format!("creating {}", path.display()))?;
                    plot::emit_plot_data(file, w)
                }
                None => plot::emit_plot_data(file, std::io::stdout().lock()),
            };
            result.with_context(|| input_name)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
