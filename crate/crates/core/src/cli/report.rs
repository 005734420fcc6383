//! Verification records and deterministic text emission.

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Relation {
    /// measured < tolerance.
    Below,
    /// measured <= tolerance.
    AtMost,
    /// measured > tolerance.
    Above,
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub id: String,
    pub anchor: String,
    pub measured: f64,
    pub tolerance: f64,
    pub relation: Relation,
    pub pass: bool,
}

impl Check {
    pub fn new(id: &str, anchor: &str, measured: f64, tolerance: f64, relation: Relation) -> Self {
        let pass = match relation {
            Relation::Below => measured < tolerance,
            Relation::AtMost => measured <= tolerance,
            Relation::Above => measured > tolerance,
        };
        Self {
            id: id.into(),
            anchor: anchor.into(),
            measured,
            tolerance,
            relation,
            pass,
        }
    }

    pub fn below(id: &str, anchor: &str, measured: f64, tolerance: f64) -> Self {
        Self::new(id, anchor, measured, tolerance, Relation::Below)
    }
}

/// A reported quantity with no pass/fail attached.
#[derive(Debug, Clone, Serialize)]
pub struct Observation {
    pub id: String,
    pub anchor: String,
    pub value: f64,
}

impl Observation {
    pub fn new(id: &str, anchor: &str, value: f64) -> Self {
        Self {
            id: id.into(),
            anchor: anchor.into(),
            value,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Environment {
    pub dimension: usize,
    pub e_cut: f64,
    pub basis_size: usize,
    pub n_bands: usize,
    pub k_grid: Option<Vec<usize>>,
    pub real_grid: Option<usize>,
    pub gauge: String,
    pub dk: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub environment: Environment,
    pub checks: Vec<Check>,
    pub observations: Vec<Observation>,
    pub pass: bool,
}

impl SuiteReport {
    pub fn new(suite: &str, environment: Environment, checks: Vec<Check>, observations: Vec<Observation>) -> Self {
        let pass = checks.iter().all(|c| c.pass);
        Self {
            suite: suite.into(),
            environment,
            checks,
            observations,
            pass,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VerificationReport {
    pub suites: Vec<SuiteReport>,
    pub pass: bool,
}

impl VerificationReport {
    pub fn new(suites: Vec<SuiteReport>) -> Self {
        let pass = suites.iter().all(|s| s.pass);
        Self { suites, pass }
    }
}

/// Shortest decimal that parses back to the same f64.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

/// Pretty JSON with a trailing LF.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).unwrap_or_else(|e| format!("{{\"error\": \"{e}\"}}"));
    s.push('\n');
    s
}

/// Comma-separated table with a header row and LF line endings.
#[derive(Debug, Clone, Default)]
pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        let mut text = header.join(",");
        text.push('\n');
        Self { text }
    }

    pub fn row(&mut self, cells: &[String]) {
        self.text.push_str(&cells.join(","));
        self.text.push('\n');
    }

    pub fn finish(self) -> String {
        self.text
    }
}
