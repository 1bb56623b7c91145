//! Pass/fail checks, the JSON summary and report files.

use std::path::Path;

use serde::Serialize;
use tnlab::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub expected: f64,
    pub tol: f64,
    pub pass: bool,
}

impl Check {
    /// `|value - expected| <= tol`.
    pub fn within(name: impl Into<String>, value: f64, expected: f64, tol: f64) -> Self {
        Check { name: name.into(), value, expected, tol, pass: (value - expected).abs() <= tol }
    }

    /// Non-negative `value` bounded by `max`.
    pub fn at_most(name: impl Into<String>, value: f64, max: f64) -> Self {
        Check { name: name.into(), value, expected: 0.0, tol: max, pass: value <= max }
    }

    /// `value >= min`; reported with `expected = min`, `tol = 0`.
    pub fn at_least(name: impl Into<String>, value: f64, min: f64) -> Self {
        Check { name: name.into(), value, expected: min, tol: 0.0, pass: value >= min }
    }

    /// A raised flag fails.
    pub fn flag(name: impl Into<String>, raised: bool) -> Self {
        Check { name: name.into(), value: if raised { 1.0 } else { 0.0 }, expected: 0.0, tol: 0.0, pass: !raised }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub experiment: String,
    pub seed: u64,
    pub params: serde_json::Value,
    pub checks: Vec<Check>,
}

impl Summary {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// A finished experiment: its summary and CSV tables keyed by file name.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub summary: Summary,
    pub tables: Vec<(String, String)>,
}

impl Outcome {
    /// Writes `summary.json` and every table into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let io = |e: std::io::Error| Error::Io(format!("{}: {e}", dir.display()));
        std::fs::create_dir_all(dir).map_err(io)?;
        let mut json = serde_json::to_string_pretty(&self.summary).map_err(|e| Error::Io(e.to_string()))?;
        json.push('\n');
        std::fs::write(dir.join("summary.json"), json).map_err(io)?;
        for (name, body) in &self.tables {
            std::fs::write(dir.join(name), body).map_err(io)?;
        }
        Ok(())
    }

    pub fn exit_code(&self) -> i32 {
        if self.summary.passed() {
            0
        } else {
            2
        }
    }
}

pub fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Numerical(_) => 2,
        Error::Validation(_) | Error::Io(_) => 1,
    }
}

/// Renders a CSV writer callback into a string.
pub fn csv(f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<String> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::Io(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nan_never_passes() {
        assert!(!Check::within("x", f64::NAN, 0.0, 1.0).pass);
        assert!(!Check::at_most("x", f64::NAN, 1.0).pass);
        assert!(!Check::at_least("x", f64::NAN, 0.0).pass);
    }

    #[test]
    fn empty_checks_pass() {
        let s = Summary { experiment: "split".into(), seed: 1, params: serde_json::Value::Null, checks: vec![] };
        assert!(s.passed());
        let v: serde_json::Value = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(v["checks"], serde_json::json!([]));
    }
}
