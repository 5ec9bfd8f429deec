use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use seiznet_cli::{cmd_evaluate, cmd_generate, cmd_report, cmd_simulate, cmd_train};
use seiznet_cli::{CliError, PipelineConfig};
use seiznet_core::predictor::ModalityRule;

/// Seizure-prediction pipeline: synthetic data, per-patient CNN training,
/// voted/fused evaluation, and a closed-loop sensor-network simulation.
#[derive(Parser)]
#[command(name = "seiznet", version, about)]
struct Cli {
    /// Pipeline configuration file (TOML).
    #[arg(long, global = true, default_value = "configs/demo.toml")]
    config: PathBuf,
    /// Override the global seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Restrict to a comma-separated subset of configured patients.
    #[arg(long, global = true, value_delimiter = ',')]
    patients: Option<Vec<String>>,
    /// Override the modality fusion rule.
    #[arg(long, global = true, value_parser = parse_fusion)]
    fusion: Option<ModalityRule>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic train/eval recordings per patient.
    Generate,
    /// Train per-patient, per-modality models.
    Train,
    /// Evaluate window-level and voted/fused predictors.
    Evaluate,
    /// Run the closed-loop network simulation.
    Simulate,
    /// Aggregate per-patient evaluations into the comparison table.
    Report,
}

fn parse_fusion(s: &str) -> Result<ModalityRule, String> {
    match s {
        "and" => Ok(ModalityRule::And),
        "or" => Ok(ModalityRule::Or),
        "ecg" => Ok(ModalityRule::EcgOnly),
        "ieeg" => Ok(ModalityRule::IeegOnly),
        other => Err(format!("unknown fusion rule `{other}` (expected and|or|ecg|ieeg)")),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = PipelineConfig::load(&cli.config)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = cli.out {
        cfg.out_dir = out;
    }
    if let Some(patients) = cli.patients {
        for p in &patients {
            if !cfg.patients.contains(p) {
                return Err(CliError::Config(format!("patient `{p}` is not in the config")));
            }
        }
        cfg.patients = patients;
    }
    if let Some(rule) = cli.fusion {
        cfg.fusion.rule = rule;
    }

    match cli.command {
        Command::Generate => cmd_generate(&cfg),
        Command::Train => cmd_train(&cfg),
        Command::Evaluate => cmd_evaluate(&cfg),
        Command::Simulate => cmd_simulate(&cfg),
        Command::Report => cmd_report(&cfg),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SEIZNET_LOG", "info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
