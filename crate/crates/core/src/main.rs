use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::error;

use delay_emulation::scenario::{self, ScenarioConfig, Verdict};
use delay_emulation::Result;

#[derive(Parser)]
#[command(
    name = "delay-emu",
    version,
    about = "Sampled-data emulation and certification for time-delay control loops"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario file (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Debug-level logging.
    #[arg(long, short)]
    verbose: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one sampled trajectory and export it as CSV.
    Simulate(Common),
    /// Run the full scenario: certification, exported trajectory, functional
    /// checks and convergence table.
    Certify(Common),
    /// Check the shipped Lyapunov-Krasovskii functional on random segments.
    CheckLkf(Common),
    /// Convergence study of the emulation against the continuous loop.
    Sweep(Common),
}

fn load(common: &Common) -> Result<ScenarioConfig> {
    let mut cfg = ScenarioConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    std::fs::create_dir_all(&common.out)?;
    Ok(cfg)
}

fn run(command: &Command) -> Result<Verdict> {
    match command {
        Command::Simulate(c) => {
            let cfg = load(c)?;
            let run = scenario::simulate(&cfg, cfg.simulation_delta()?)?;
            run.save(&c.out)?;
            Ok(Verdict::Pass)
        }
        Command::Certify(c) => scenario::run_scenario(&load(c)?, &c.out),
        Command::CheckLkf(c) => {
            let reports = scenario::check_lkf(&load(c)?)?;
            scenario::write_json(&c.out.join("lkf_reports.json"), &reports)?;
            let passed = reports.values().all(|r| r.passed);
            Ok(if passed { Verdict::Pass } else { Verdict::Fail })
        }
        Command::Sweep(c) => {
            let table = scenario::sweep(&load(c)?)?;
            table.write_csv(std::fs::File::create(
                Path::new(&c.out).join("convergence.csv"),
            )?)?;
            Ok(if table.rows.iter().all(|r| r.error.is_some()) {
                Verdict::Pass
            } else {
                Verdict::Fail
            })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let common = match &cli.command {
        Command::Simulate(c) | Command::Certify(c) | Command::CheckLkf(c) | Command::Sweep(c) => c,
    };
    let level = if common.verbose { "debug" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli.command) {
        Ok(v) => ExitCode::from(v.exit_code() as u8),
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            // configuration and runtime errors alike produce no verdict
            ExitCode::from(2)
        }
    }
}
