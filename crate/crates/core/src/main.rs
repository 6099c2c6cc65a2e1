//! `chamsim`: config-driven runner for the dual-dynamics scenarios.
//!
//! Exit codes: 0 success, 1 configuration or usage problem, 2 runtime
//! failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use chamsim::scenario;

#[derive(Parser)]
#[command(name = "chamsim", version, about = "forward/backward Kolmogorov dynamics, adaptive measurements, singlet correlations")]
struct Cli {
    /// Enumerate the available scenarios and exit.
    #[arg(long)]
    list_scenarios: bool,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a configured scenario; writes a results table and a manifest.
    Run {
        /// Config document, or a manifest from a previous run.
        #[arg(long)]
        config: PathBuf,
        /// Overrides the seed from the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the worker thread count from the config.
        #[arg(long)]
        threads: Option<usize>,
        /// Output directory.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Enumerate the available scenarios.
    ListScenarios,
    /// Run the oracle self-test suite.
    Check,
}

fn list_scenarios() {
    for sc in scenario::Scenario::ALL {
        println!("{:<20} {}", sc.name(), sc.description());
    }
}

fn run(config: &PathBuf, seed: Option<u64>, threads: Option<usize>, out: &PathBuf) -> ExitCode {
    let text = match std::fs::read_to_string(config) {
        Ok(text) => text,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", config.display());
            return ExitCode::from(1);
        }
    };
    let cfg = match scenario::load_config_from_str_with(&text, seed, threads) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    match scenario::run_scenario(&cfg, out) {
        Ok(output) => {
            println!("scenario: {}", cfg.scenario.name());
            println!("results:  {}", output.results_path.display());
            println!("manifest: {}", output.manifest_path.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn check() -> ExitCode {
    let reports = scenario::run_self_check();
    let mut all_passed = true;
    for r in &reports {
        let verdict = if r.passed { "PASS" } else { "FAIL" };
        println!("{verdict} {} ({})", r.name, r.detail);
        all_passed &= r.passed;
    }
    if all_passed {
        println!("all {} checks passed", reports.len());
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };

    if cli.list_scenarios {
        list_scenarios();
        return ExitCode::SUCCESS;
    }
    match cli.command {
        Some(Command::Run { config, seed, threads, out }) => run(&config, seed, threads, &out),
        Some(Command::ListScenarios) => {
            list_scenarios();
            ExitCode::SUCCESS
        }
        Some(Command::Check) => check(),
        None => {
            eprintln!("error: no command given; try `chamsim --help`");
            ExitCode::from(1)
        }
    }
}
