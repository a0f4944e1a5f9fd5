use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fedgrid::config::ExperimentConfig;
use fedgrid::pipeline::{self, PipelineError};

/// Federated load forecasting and grid services on a simulated feeder.
#[derive(Parser)]
#[command(name = "fedgrid", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides the seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory; overrides `paths.out_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Only log errors.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic feeder CSV.
    GenData,
    /// Train the global model with federated SGD.
    Train,
    /// One-step-ahead forecasts for the test month.
    Forecast,
    /// Swing prediction and peak shaving from the forecasts.
    GridServices,
    /// Score the forecasts and write the report.
    Report,
    /// All of the above in order.
    Run,
}

fn init_logging(quiet: bool) {
    let default = if quiet { "error" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("FEDGRID_LOG", default))
        .format_timestamp(None)
        .init();
}

fn run(cli: &Cli) -> Result<(), PipelineError> {
    let path = cli.config.as_ref().ok_or_else(|| {
        PipelineError::Config(fedgrid::config::ConfigError::Invalid("--config is required".into()))
    })?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let out = cli.out.clone().unwrap_or_else(|| cfg.out_dir());
    log::debug!("config hash {}", cfg.hash());

    match cli.command {
        Command::GenData => {
            pipeline::cmd_gen_data(&cfg, &out)?;
        }
        Command::Train => {
            let (_, log) = pipeline::cmd_train(&cfg, &out)?;
            let last = log.rounds.last().map_or(f64::NAN, |r| r.loss);
            log::info!("{} rounds, final loss {last:.4}", log.rounds.len());
        }
        Command::Forecast => {
            let rows = pipeline::cmd_forecast(&cfg, &out)?;
            log::info!("{} forecast records", rows.len());
        }
        Command::GridServices => {
            pipeline::cmd_grid_services(&cfg, &out)?;
        }
        Command::Report => {
            pipeline::cmd_report(&cfg, &out)?;
        }
        Command::Run => {
            pipeline::run_all(&cfg, &out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.quiet);
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
