use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use polar_ray_cli::{
    emit_plot_data, load_scenario, report_exit_code, resolve_seed, run_scenario, write_outputs, CliError, Report,
    RunOptions, SEED_ENV,
};

#[derive(Parser)]
#[command(name = "polar-ray", version, about = "Imaginary-time flows and mixed polarizations on torus-symmetric local models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the check battery on a scenario file or builtin name.
    Run {
        scenario: String,
        /// Write the JSON report here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write checks.csv and convergence tables into this directory.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Seed for the invariance group samples (overrides POLAR_RAY_SEED).
        #[arg(long)]
        seed: Option<u64>,
        /// Lie-series truncation order.
        #[arg(long)]
        truncation: Option<usize>,
    },
    /// List builtin scenarios.
    List,
    /// Extract `t,angle_max` from a report.
    PlotData { report: PathBuf, out: PathBuf },
}

fn now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn execute(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Run {
            scenario,
            out,
            csv,
            seed,
            truncation,
        } => {
            let env = std::env::var(SEED_ENV).ok();
            let opts = RunOptions {
                seed: resolve_seed(seed, env.as_deref())?,
                truncation,
                timestamp: now(),
            };
            let scenario = load_scenario(&scenario)?;
            let report = run_scenario(&scenario, &opts)?;
            write_outputs(&report, &scenario, out.as_deref(), csv.as_deref())?;
            let s = &report.summary;
            eprintln!(
                "{}: {} checks, {} passed, {} failed, {} skipped",
                report.scenario, s.total, s.passed, s.failed, s.skipped
            );
            for r in report.records.iter().filter(|r| !r.pass) {
                eprintln!(
                    "FAIL {} point={:?} t={:?} value={:?} tol={:?}{}",
                    r.check,
                    r.point,
                    r.t,
                    r.value,
                    r.tolerance,
                    r.detail.as_deref().map(|d| format!(" ({d})")).unwrap_or_default()
                );
            }
            Ok(report_exit_code(&report))
        }
        Command::List => {
            for name in polar_ray_core::list_builtins() {
                println!("{name}");
            }
            Ok(0)
        }
        Command::PlotData { report, out } => {
            let src = std::fs::read_to_string(&report).map_err(|e| CliError::Io {
                path: report.clone(),
                source: e,
            })?;
            emit_plot_data(&Report::from_json(&src)?, &out)?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error[{}]: {e}", e.kind());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
