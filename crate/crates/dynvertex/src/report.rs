//! Machine-readable check records shared by the verification suites and the CLI.

use serde::Serialize;

/// One gated comparison: `pass` is computed from `residual` and `tolerance` only.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct Check {
    pub name: String,
    pub residual: f64,
    pub tolerance: f64,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<serde_json::Value>,
}

impl Check {
    /// Passes iff `residual <= tolerance` (NaN fails).
    pub fn new(name: impl Into<String>, residual: f64, tolerance: f64) -> Self {
        Self { name: name.into(), residual, tolerance, pass: residual <= tolerance, detail: None }
    }

    pub fn with_detail(mut self, detail: serde_json::Value) -> Self {
        self.detail = Some(detail);
        self
    }
}

/// Named collection of checks.
#[derive(Clone, Debug, Serialize, Default)]
pub struct Report {
    pub suite: String,
    pub checks: Vec<Check>,
    /// Ungated diagnostics.
    #[serde(skip_serializing_if = "serde_json::Map::is_empty")]
    pub diagnostics: serde_json::Map<String, serde_json::Value>,
}

impl Report {
    pub fn new(suite: impl Into<String>) -> Self {
        Self { suite: suite.into(), ..Default::default() }
    }

    pub fn push(&mut self, check: Check) {
        self.checks.push(check);
    }

    pub fn diagnostic(&mut self, key: &str, value: serde_json::Value) {
        self.diagnostics.insert(key.to_string(), value);
    }

    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    /// Largest residual-to-tolerance ratio, for compact summaries.
    pub fn worst(&self) -> Option<&Check> {
        self.checks.iter().max_by(|a, b| {
            let ra = if a.pass { a.residual / a.tolerance } else { f64::INFINITY };
            let rb = if b.pass { b.residual / b.tolerance } else { f64::INFINITY };
            ra.partial_cmp(&rb).unwrap_or(std::cmp::Ordering::Equal)
        })
    }

    pub fn extend(&mut self, other: Report) {
        self.checks.extend(other.checks);
        self.diagnostics.extend(other.diagnostics);
    }
}
