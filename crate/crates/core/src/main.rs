use clap::{Parser, Subcommand};
use nve_synth::cli::{load_config, run_scenario, scaled_for_delta, CliError, Scenario};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "nve-synth", version, about = "Run state-synthesis scenarios and write CSV tables")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scenario described by a TOML config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override the scenario name.
        #[arg(long)]
        scenario: Option<String>,
        /// Override the output path.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override Δ/g (the single-ensemble couplings are rescaled so the
        /// effective coupling stays 1).
        #[arg(long)]
        delta_over_g: Option<f64>,
        /// Override Ω/g.
        #[arg(long)]
        omega_over_g: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let Command::Run { config, scenario, out, delta_over_g, omega_over_g, seed } = cli.command;
    let mut cfg = load_config(&config)?;
    if let Some(name) = scenario {
        cfg.scenario = Scenario::parse(&name)?;
    }
    if let Some(path) = out {
        cfg.output_path = path;
    }
    if let Some(delta) = delta_over_g {
        cfg.params = scaled_for_delta(&cfg.params, delta);
    }
    if let Some(omega) = omega_over_g {
        cfg.params.omega = omega;
    }
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    let table = run_scenario(&cfg)?;
    log::info!("wrote {} rows to {}", table.rows.len(), cfg.output_path.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
