//! Machine-readable check reports (`"schema": "l2man/1"`).

use serde::{Deserialize, Serialize};

pub const SCHEMA: &str = "l2man/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    /// `value ≤ tolerance`
    AtMost,
    /// `value ≥ tolerance`
    AtLeast,
    /// A boolean condition; no value.
    Holds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: Option<f64>,
    pub tolerance: Option<f64>,
    pub relation: Relation,
    pub passed: bool,
}

impl Check {
    pub fn at_most(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Check {
            name: name.into(),
            value: Some(value),
            tolerance: Some(tolerance),
            relation: Relation::AtMost,
            passed: value <= tolerance,
        }
    }

    pub fn at_least(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Check {
            name: name.into(),
            value: Some(value),
            tolerance: Some(bound),
            relation: Relation::AtLeast,
            passed: value >= bound,
        }
    }

    pub fn holds(name: impl Into<String>, ok: bool) -> Self {
        Check {
            name: name.into(),
            value: None,
            tolerance: None,
            relation: Relation::Holds,
            passed: ok,
        }
    }

    /// One human-readable line, e.g. `PASS  speed_law  3.1e-15 <= 1e-8`.
    pub fn line(&self) -> String {
        let status = if self.passed { "PASS" } else { "FAIL" };
        match (self.value, self.tolerance, self.relation) {
            (Some(v), Some(t), Relation::AtMost) => format!("{status}  {}  {v:.3e} <= {t:e}", self.name),
            (Some(v), Some(t), Relation::AtLeast) => format!("{status}  {}  {v:.3e} >= {t:e}", self.name),
            _ => format!("{status}  {}", self.name),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema: String,
    pub experiment: String,
    pub seed: u64,
    pub passed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<String>,
    pub checks: Vec<Check>,
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub details: serde_json::Value,
}

impl Report {
    pub fn new(experiment: impl Into<String>, seed: u64) -> Self {
        Report {
            schema: SCHEMA.to_string(),
            experiment: experiment.into(),
            seed,
            passed: true,
            verdict: None,
            checks: Vec::new(),
            details: serde_json::Value::Null,
        }
    }

    pub fn push(&mut self, check: Check) -> &mut Self {
        self.passed &= check.passed;
        self.checks.push(check);
        self
    }

    pub fn with_verdict(mut self, verdict: impl Into<String>) -> Self {
        self.verdict = Some(verdict.into());
        self
    }

    pub fn with_details(mut self, details: serde_json::Value) -> Self {
        self.details = details;
        self
    }

    pub fn failed_checks(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    /// Pretty JSON with a trailing newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports serialize");
        s.push('\n');
        s
    }
}

/// A collection of reports, passing iff every member passes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub schema: String,
    pub seed: u64,
    pub passed: bool,
    pub reports: Vec<Report>,
}

impl SuiteReport {
    pub fn new(seed: u64, reports: Vec<Report>) -> Self {
        SuiteReport {
            schema: SCHEMA.to_string(),
            seed,
            passed: reports.iter().all(|r| r.passed),
            reports,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports serialize");
        s.push('\n');
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdict_follows_checks() {
        let mut r = Report::new("demo", 7);
        r.push(Check::at_most("small", 1e-12, 1e-9));
        assert!(r.passed);
        r.push(Check::at_least("big", 0.5, 1.0));
        assert!(!r.passed);
        assert_eq!(r.failed_checks().count(), 1);
        assert!(!Check::at_most("nan", f64::NAN, 1.0).passed);
        assert!(r.to_json().contains("\"schema\": \"l2man/1\""));
    }

    #[test]
    fn lines_are_readable() {
        assert_eq!(Check::holds("exact", true).line(), "PASS  exact");
        assert!(Check::at_most("x", 2.0, 1.0).line().starts_with("FAIL  x  2.000e0 <= 1e0"));
    }

    #[test]
    fn json_round_trip() {
        let mut r = Report::new("demo", 1).with_verdict("RIGID");
        r.push(Check::holds("ok", true));
        let back: Report = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back, r);
        let suite = SuiteReport::new(1, vec![r]);
        assert!(suite.passed);
    }
}
