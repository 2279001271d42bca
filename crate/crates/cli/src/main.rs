use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use propfault_cli::{exit_code, CliConfig};
use propfault_core::dataset::Scale;
use propfault_core::ddcnn::Variant;
use propfault_core::nn::Precision;
use propfault_core::training::DaPairing;

/// Sim-to-real propeller fault diagnosis with a twin difference network.
#[derive(Debug, Parser)]
#[command(name = "propfault", version)]
struct Cli {
    /// TOML configuration; see `propfault defaults` for every key.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fly the simulator and write the A–E dataset bundle.
    Simulate {
        #[arg(long, value_parser = parse_scale)]
        scale: Option<Scale>,
        /// Bundle seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one model variant on a bundle.
    Train {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        variant: Option<Variant>,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        knobs: TrainKnobs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train all three variants over several seeds.
    Compare {
        #[arg(long)]
        bundle: PathBuf,
        /// Comma-separated training seeds.
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
        seeds: Vec<u64>,
        #[command(flatten)]
        knobs: TrainKnobs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-class difference-feature statistics of a trained twin model.
    ExportFeatures {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the default configuration.
    Defaults,
}

/// Overrides for the `[train]` section.
#[derive(Debug, Args)]
struct TrainKnobs {
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, value_parser = parse_precision)]
    precision: Option<Precision>,
    #[arg(long, value_parser = parse_pairing)]
    da_pairing: Option<DaPairing>,
}

impl TrainKnobs {
    fn apply(&self, cfg: &mut CliConfig) {
        let t = &mut cfg.train;
        t.batch_size = self.batch_size.unwrap_or(t.batch_size);
        t.learning_rate = self.learning_rate.unwrap_or(t.learning_rate);
        t.epochs = self.epochs.unwrap_or(t.epochs);
        t.dropout = self.dropout.unwrap_or(t.dropout);
        t.lambda = self.lambda.unwrap_or(t.lambda);
        t.precision = self.precision.unwrap_or(t.precision);
        t.da_pairing = self.da_pairing.unwrap_or(t.da_pairing);
    }
}

fn parse_scale(s: &str) -> Result<Scale, String> {
    match s {
        "desk" => Ok(Scale::Desk),
        "full" => Ok(Scale::Full),
        _ => Err(format!("expected desk or full, got {s}")),
    }
}

fn parse_precision(s: &str) -> Result<Precision, String> {
    match s {
        "f32" => Ok(Precision::F32),
        "f64" => Ok(Precision::F64),
        _ => Err(format!("expected f32 or f64, got {s}")),
    }
}

fn parse_pairing(s: &str) -> Result<DaPairing, String> {
    match s {
        "target-target" => Ok(DaPairing::TargetTarget),
        "target-source" => Ok(DaPairing::TargetSource),
        _ => Err(format!("expected target-target or target-source, got {s}")),
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = CliConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Simulate { scale, seed, out } => {
            cfg.dataset.scale = scale.unwrap_or(cfg.dataset.scale);
            cfg.dataset.seed = seed.unwrap_or(cfg.dataset.seed);
            propfault_cli::simulate(&cfg, &out)?;
        }
        Command::Train {
            bundle,
            variant,
            seed,
            knobs,
            out,
        } => {
            knobs.apply(&mut cfg);
            cfg.train.variant = variant.unwrap_or(cfg.train.variant);
            cfg.train.seed = seed.unwrap_or(cfg.train.seed);
            let r = propfault_cli::train(&cfg, &bundle, &out)?;
            println!("{} seed {}: accuracy {:.4}", r.variant, r.seed, r.accuracy);
        }
        Command::Compare {
            bundle,
            seeds,
            knobs,
            out,
        } => {
            knobs.apply(&mut cfg);
            let report = propfault_cli::compare(&cfg, &bundle, &seeds, &out)?;
            for s in &report.summaries {
                println!(
                    "{}: {:.4} ± {:.4}",
                    s.variant, s.mean_accuracy, s.std_accuracy
                );
            }
        }
        Command::ExportFeatures {
            checkpoint,
            bundle,
            out,
        } => {
            let path = propfault_cli::export_features(&checkpoint, &bundle, &out)?;
            println!("{}", path.display());
        }
        Command::Defaults => print!("{}", CliConfig::default().to_toml()?),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
