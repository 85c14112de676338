//! Experiment reports: named measurements checked against targets, rendered
//! as a table and serialized as JSON. Reports carry no wall-clock fields, so
//! a rerun with the same seed produces byte-identical output.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::sampler::RngSpec;

/// How a measured value is compared against its target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Tolerance {
    /// |measured − target| ≤ points.
    AbsolutePoints { points: f64 },
    /// |measured − target| ≤ fraction·|target|.
    Relative { fraction: f64 },
    /// measured < target.
    LessThan,
    /// measured > target.
    GreaterThan,
    /// measured == target, bit for bit.
    Exact,
}

impl Tolerance {
    fn check(self, measured: f64, target: f64) -> bool {
        match self {
            Tolerance::AbsolutePoints { points } => (measured - target).abs() <= points,
            Tolerance::Relative { fraction } => {
                (measured - target).abs() <= fraction * target.abs()
            }
            Tolerance::LessThan => measured < target,
            Tolerance::GreaterThan => measured > target,
            Tolerance::Exact => measured == target,
        }
    }
}

impl fmt::Display for Tolerance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tolerance::AbsolutePoints { points } if points.abs() < 0.01 && *points != 0.0 => {
                write!(f, "±{points:.2e}")
            }
            Tolerance::AbsolutePoints { points } => write!(f, "±{points}"),
            Tolerance::Relative { fraction } => write!(f, "±{}%", fraction * 100.0),
            Tolerance::LessThan => write!(f, "<"),
            Tolerance::GreaterThan => write!(f, ">"),
            Tolerance::Exact => write!(f, "=="),
        }
    }
}

/// One checked measurement.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportRow {
    pub name: String,
    pub measured: f64,
    pub target: f64,
    pub tolerance: Tolerance,
    pub mc_se: Option<f64>,
    pub draws: u64,
    pub passed: bool,
}

impl ReportRow {
    pub fn evaluate(
        name: impl Into<String>,
        measured: f64,
        target: f64,
        tolerance: Tolerance,
        mc_se: Option<f64>,
        draws: u64,
    ) -> ReportRow {
        ReportRow {
            name: name.into(),
            measured,
            target,
            tolerance,
            mc_se,
            draws,
            passed: tolerance.check(measured, target),
        }
    }
}

/// A full experiment outcome: the parameters it ran with, every checked row,
/// and the seed that reproduces it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub id: String,
    pub params: serde_json::Value,
    pub rows: Vec<ReportRow>,
    pub passed: bool,
    pub seed: RngSpec,
}

impl ExperimentReport {
    pub fn from_rows(
        id: impl Into<String>,
        params: serde_json::Value,
        rows: Vec<ReportRow>,
        seed: RngSpec,
    ) -> ExperimentReport {
        let passed = rows.iter().all(|r| r.passed);
        ExperimentReport {
            id: id.into(),
            params,
            rows,
            passed,
            seed,
        }
    }

    pub fn row(&self, name: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.name == name)
    }
}

impl fmt::Display for ExperimentReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{} [{}] seed={}/{}",
            self.id,
            if self.passed { "pass" } else { "FAIL" },
            self.seed.seed,
            self.seed.stream
        )?;
        writeln!(
            f,
            "  {:<44} {:>14} {:>14} {:>10} {:>10}  result",
            "check", "measured", "target", "tol", "mc_se"
        )?;
        for row in &self.rows {
            writeln!(
                f,
                "  {:<44} {:>14.6} {:>14.6} {:>10} {:>10}  {}",
                row.name,
                row.measured,
                row.target,
                row.tolerance.to_string(),
                row.mc_se.map_or("-".to_string(), |s| format!("{s:.2e}")),
                if row.passed { "pass" } else { "FAIL" }
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tolerance_semantics() {
        assert!(Tolerance::AbsolutePoints { points: 0.5 }.check(1.4, 1.0));
        assert!(!Tolerance::AbsolutePoints { points: 0.5 }.check(1.6, 1.0));
        assert!(Tolerance::Relative { fraction: 0.1 }.check(0.95, 1.0));
        assert!(!Tolerance::Relative { fraction: 0.1 }.check(0.85, 1.0));
        assert!(Tolerance::LessThan.check(0.01, 0.02));
        assert!(!Tolerance::LessThan.check(0.02, 0.02));
        assert!(Tolerance::GreaterThan.check(0.98, 0.97));
        assert!(Tolerance::Exact.check(0.25, 0.25));
        assert!(!Tolerance::Exact.check(0.25 + 1e-16, 0.25));
    }

    #[test]
    fn report_aggregates_row_outcomes() {
        let rows = vec![
            ReportRow::evaluate("good", 1.0, 1.0, Tolerance::Exact, None, 10),
            ReportRow::evaluate("bad", 2.0, 1.0, Tolerance::Exact, None, 10),
        ];
        let report = ExperimentReport::from_rows(
            "demo",
            serde_json::json!({"n": 10}),
            rows,
            RngSpec::new(1),
        );
        assert!(!report.passed);
        assert!(report.row("good").unwrap().passed);
        assert!(!report.row("bad").unwrap().passed);
        let text = report.to_string();
        assert!(text.contains("FAIL"));
        assert!(text.contains("demo"));

        let json = serde_json::to_string(&report).unwrap();
        let back: ExperimentReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back.rows.len(), 2);
        assert!(!back.passed);
    }
}
