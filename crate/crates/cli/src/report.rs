//! Report records, JSON and CSV emission.

use std::fmt::Write as _;
use std::path::Path;

use polar_ray_core::SweepRow;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Status {
    Pass,
    Fail,
    Skipped(String),
}

impl From<Status> for String {
    fn from(s: Status) -> String {
        match s {
            Status::Pass => "pass".into(),
            Status::Fail => "fail".into(),
            Status::Skipped(reason) => format!("skipped:{reason}"),
        }
    }
}

impl TryFrom<String> for Status {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        match s.as_str() {
            "pass" => Ok(Status::Pass),
            "fail" => Ok(Status::Fail),
            other => other
                .strip_prefix("skipped:")
                .map(|r| Status::Skipped(r.to_string()))
                .ok_or_else(|| format!("unknown status {other:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub check: String,
    pub point: Option<usize>,
    pub t: Option<f64>,
    pub value: Option<f64>,
    pub tolerance: Option<f64>,
    pub status: Status,
    pub pass: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl Record {
    fn new(check: &str, point: Option<usize>, t: Option<f64>, value: Option<f64>, tolerance: Option<f64>, status: Status) -> Self {
        Record {
            check: check.to_string(),
            point,
            t,
            value,
            tolerance,
            pass: status != Status::Fail,
            status,
            detail: None,
        }
    }

    /// Passes iff `value <= tolerance` (NaN fails).
    pub fn at_most(check: &str, point: Option<usize>, t: Option<f64>, value: f64, tolerance: f64) -> Self {
        let status = if value <= tolerance { Status::Pass } else { Status::Fail };
        Record::new(check, point, t, Some(value), Some(tolerance), status)
    }

    /// Passes iff `value > bound` (NaN fails).
    pub fn above(check: &str, point: Option<usize>, t: Option<f64>, value: f64, bound: f64) -> Self {
        let status = if value > bound { Status::Pass } else { Status::Fail };
        Record::new(check, point, t, Some(value), Some(bound), status)
    }

    pub fn skipped(check: &str, point: Option<usize>, t: Option<f64>, reason: &str) -> Self {
        Record::new(check, point, t, None, None, Status::Skipped(reason.to_string()))
    }

    /// A skipped record that still carries the measured value.
    pub fn observed(check: &str, point: Option<usize>, t: Option<f64>, value: f64, reason: &str) -> Self {
        Record::new(check, point, t, Some(value), None, Status::Skipped(reason.to_string()))
    }

    pub fn errored(check: &str, point: Option<usize>, t: Option<f64>, err: &polar_ray_core::Error) -> Self {
        let mut r = Record::new(check, point, t, None, None, Status::Fail);
        r.detail = Some(err.to_string());
        r
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub point: usize,
    pub rows: Vec<SweepRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub total: usize,
    pub passed: usize,
    pub failed: usize,
    pub skipped: usize,
    pub pass: bool,
}

impl Summary {
    pub fn of(records: &[Record]) -> Self {
        let failed = records.iter().filter(|r| r.status == Status::Fail).count();
        let skipped = records
            .iter()
            .filter(|r| matches!(r.status, Status::Skipped(_)))
            .count();
        Summary {
            total: records.len(),
            passed: records.len() - failed - skipped,
            failed,
            skipped,
            pass: failed == 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub scenario: String,
    pub version: String,
    pub precision: String,
    pub inner_product: String,
    pub notes: Vec<String>,
    pub seed: u64,
    pub truncation: usize,
    pub t_grid: Vec<f64>,
    /// Seconds since the Unix epoch; the only field that varies between runs.
    pub timestamp: u64,
    pub summary: Summary,
    pub records: Vec<Record>,
    pub sweeps: Vec<Sweep>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.summary.pass
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn from_json(src: &str) -> Result<Self, CliError> {
        Ok(serde_json::from_str(src)?)
    }

    pub fn checks_csv(&self) -> String {
        let mut out = String::from("check,point,t,value,tolerance,status\n");
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.check,
                r.point.map(|p| p.to_string()).unwrap_or_default(),
                fmt_opt(r.t),
                fmt_opt(r.value),
                fmt_opt(r.tolerance),
                String::from(r.status.clone()),
            );
        }
        out
    }

    pub fn write_csv_dir(&self, dir: &Path) -> Result<(), CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        write_file(&dir.join("checks.csv"), &self.checks_csv())?;
        for sweep in &self.sweeps {
            let mut out = String::from("t,angle_max,angle_min,normalized_rate,lagrangian_residual\n");
            for row in &sweep.rows {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{}",
                    fmt_f(row.t),
                    fmt_f(row.angle_max),
                    fmt_f(row.angle_min),
                    fmt_f(row.normalized_rate),
                    fmt_f(row.lagrangian_residual)
                );
            }
            write_file(&dir.join(format!("convergence_p{}.csv", sweep.point)), &out)?;
        }
        Ok(())
    }
}

/// Seventeen significant digits, enough to round-trip an `f64`.
pub fn fmt_f(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f).unwrap_or_default()
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

/// `t,angle_max` for the first swept point of a report.
pub fn plot_data_csv(report: &Report) -> Result<String, CliError> {
    let sweep = report
        .sweeps
        .iter()
        .find(|s| !s.rows.is_empty())
        .ok_or(CliError::EmptySweep)?;
    let mut out = String::from("t,angle_max\n");
    for row in &sweep.rows {
        let _ = writeln!(out, "{},{}", fmt_f(row.t), fmt_f(row.angle_max));
    }
    Ok(out)
}

pub fn emit_plot_data(report: &Report, path: &Path) -> Result<(), CliError> {
    write_file(path, &plot_data_csv(report)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn status_strings_round_trip() {
        for s in [Status::Pass, Status::Fail, Status::Skipped("non-regular".into())] {
            let text = String::from(s.clone());
            assert_eq!(Status::try_from(text).unwrap(), s);
        }
        assert!(Status::try_from("maybe".to_string()).is_err());
    }

    #[test]
    fn nan_fails_both_comparisons() {
        assert!(!Record::at_most("x", None, None, f64::NAN, 1.0).pass);
        assert!(!Record::above("x", None, None, f64::NAN, 0.0).pass);
        assert!(Record::skipped("x", None, None, "why").pass);
    }

    #[test]
    fn float_format_round_trips() {
        for x in [0.1, 1.0 / 3.0, 7.38905609893065, 1e-300, -2.5e17] {
            assert_eq!(fmt_f(x).parse::<f64>().unwrap(), x);
        }
    }
}
