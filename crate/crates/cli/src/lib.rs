//! Scenario runner: loads a scenario, runs the check battery and writes the
//! JSON report and CSV tables.

use std::path::{Path, PathBuf};

use polar_ray_core::{builtin_scenario, Scenario};

pub mod battery;
pub mod report;

pub use report::{emit_plot_data, Record, Report, Status, Summary, Sweep};

/// Environment variable that overrides the scenario seed.
pub const SEED_ENV: &str = "POLAR_RAY_SEED";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] polar_ray_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed report: {0}")]
    Json(#[from] serde_json::Error),
    #[error("report contains no convergence sweep")]
    EmptySweep,
    #[error("{SEED_ENV} is not an unsigned integer: {0:?}")]
    BadSeed(String),
}

impl CliError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Every error the runner can raise is an input or environment problem.
    pub fn exit_code(&self) -> i32 {
        2
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.kind(),
            CliError::Io { .. } => "IoError",
            CliError::Json(_) => "ParseError",
            CliError::EmptySweep => "EmptySweep",
            CliError::BadSeed(_) => "BadSeed",
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub truncation: Option<usize>,
    pub timestamp: u64,
}

/// A file path if one exists, otherwise the name of a builtin.
pub fn load_scenario(arg: &str) -> Result<Scenario, CliError> {
    let path = Path::new(arg);
    if path.is_file() {
        let src = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut s = Scenario::from_json(&src)?;
        if s.name.is_empty() {
            s.name = path
                .file_stem()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
        }
        Ok(s)
    } else {
        Ok(builtin_scenario(arg)?)
    }
}

/// Seed precedence: explicit flag, then the environment, then the scenario.
pub fn resolve_seed(flag: Option<u64>, env: Option<&str>) -> Result<Option<u64>, CliError> {
    if flag.is_some() {
        return Ok(flag);
    }
    match env {
        Some(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::BadSeed(v.to_string())),
        None => Ok(None),
    }
}

pub fn run_scenario(scenario: &Scenario, opts: &RunOptions) -> Result<Report, CliError> {
    battery::run(scenario, opts)
}

/// Exit status for a finished report.
pub fn report_exit_code(report: &Report) -> i32 {
    if report.passed() {
        0
    } else {
        1
    }
}

/// Writes the report and tables to the given (or scenario-declared) locations;
/// with no report path the report goes to stdout.
pub fn write_outputs(
    report: &Report,
    scenario: &Scenario,
    out: Option<&Path>,
    csv: Option<&Path>,
) -> Result<(), CliError> {
    let out = out.map(Path::to_path_buf).or(scenario.outputs.report.as_ref().map(PathBuf::from));
    let csv = csv.map(Path::to_path_buf).or(scenario.outputs.csv.as_ref().map(PathBuf::from));
    match out {
        Some(path) => report::write_file(&path, &report.to_json())?,
        None => print!("{}", report.to_json()),
    }
    if let Some(dir) = csv {
        report.write_csv_dir(&dir)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_precedence() {
        assert_eq!(resolve_seed(Some(3), Some("9")).unwrap(), Some(3));
        assert_eq!(resolve_seed(None, Some(" 9 ")).unwrap(), Some(9));
        assert_eq!(resolve_seed(None, None).unwrap(), None);
        assert!(matches!(resolve_seed(None, Some("x")), Err(CliError::BadSeed(_))));
    }

    #[test]
    fn unknown_scenario_is_an_input_error() {
        let err = load_scenario("no-such-scenario").unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
}
