//! Diagnostic reports: check records, byte-stable JSON and CSV series.

use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::ser::Serialize;
use serde::Deserialize;
use serde_json::ser::{Formatter, PrettyFormatter};

pub const SCHEMA_VERSION: &str = "1.0.0";

/// How a reported number was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    MomentumQuadrature,
    PositionOracle,
    ClosedForm,
    PowerIteration,
    SeriesTest,
    Timing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, Deserialize)]
pub enum Comparison {
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = ">=")]
    AtLeast,
    #[serde(rename = "==")]
    Equals,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub method: Method,
    pub value: Option<f64>,
    pub comparison: Comparison,
    pub tolerance: f64,
    pub pass: bool,
    /// Expected to fail: a negative control.
    pub control: bool,
    /// Ratio of the checked quantity between the base and the refined run.
    pub refinement_ratio: Option<f64>,
    pub detail: String,
}

impl Check {
    /// `value <= tolerance`; `None` and NaN fail.
    pub fn at_most(name: &str, method: Method, value: Option<f64>, tolerance: f64) -> Self {
        let pass = value.is_some_and(|v| v <= tolerance);
        Self::new(name, method, value, Comparison::AtMost, tolerance, pass)
    }

    pub fn at_least(name: &str, method: Method, value: Option<f64>, tolerance: f64) -> Self {
        let pass = value.is_some_and(|v| v >= tolerance);
        Self::new(name, method, value, Comparison::AtLeast, tolerance, pass)
    }

    /// `|value - target| <= tolerance`, reported as the deviation.
    pub fn near(name: &str, method: Method, value: Option<f64>, target: f64, tolerance: f64) -> Self {
        let dev = value.map(|v| (v - target).abs());
        let mut c = Self::at_most(name, method, dev, tolerance);
        c.detail = format!("value {} vs target {target:e}", value.map_or("none".into(), |v| format!("{v:e}")));
        c
    }

    /// Boolean outcome recorded as 1 (true) or 0 (false) against 1.
    pub fn holds(name: &str, method: Method, ok: bool) -> Self {
        Self::new(name, method, Some(if ok { 1.0 } else { 0.0 }), Comparison::Equals, 1.0, ok)
    }

    fn new(name: &str, method: Method, value: Option<f64>, comparison: Comparison, tolerance: f64, pass: bool) -> Self {
        Self {
            name: name.into(),
            method,
            value: value.filter(|v| v.is_finite()),
            comparison,
            tolerance,
            pass,
            control: false,
            refinement_ratio: None,
            detail: String::new(),
        }
    }

    pub fn detail(mut self, d: impl Into<String>) -> Self {
        if self.detail.is_empty() {
            self.detail = d.into();
        } else {
            self.detail = format!("{}; {}", self.detail, d.into());
        }
        self
    }

    pub fn refinement(mut self, ratio: f64) -> Self {
        self.refinement_ratio = Some(ratio).filter(|r| r.is_finite());
        self
    }

    pub fn control(mut self) -> Self {
        self.control = true;
        self
    }

    pub fn prefixed(mut self, prefix: &str) -> Self {
        self.name = format!("{prefix}/{}", self.name);
        self
    }
}

/// A number reported without a pass criterion.
#[derive(Debug, Clone, PartialEq, serde::Serialize, Deserialize)]
pub struct Metric {
    pub name: String,
    pub method: Method,
    pub value: Option<f64>,
}

impl Metric {
    pub fn new(name: &str, method: Method, value: f64) -> Self {
        Self { name: name.into(), method, value: Some(value).filter(|v| v.is_finite()) }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, Deserialize)]
pub struct Environment {
    pub package: String,
    pub version: String,
    pub nodes_per_shell: usize,
    pub n_shells: usize,
    pub grid_points: usize,
    pub l_max: usize,
    pub uv_cutoff: f64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, Deserialize)]
pub struct DiagnosticReport {
    pub schema_version: String,
    pub scenario: String,
    pub seed: u64,
    pub negative_control: bool,
    pub environment: Environment,
    pub checks: Vec<Check>,
    pub metrics: Vec<Metric>,
    pub artifacts: Vec<String>,
    pub passed: bool,
}

impl DiagnosticReport {
    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass && !c.control)
    }

    pub fn settle(&mut self) {
        let passed = self.failures().next().is_none();
        self.passed = passed;
    }
}

/// Pretty printing with every float written as `{:.16e}` (17 significant digits).
pub struct FixedFloatFormatter {
    inner: PrettyFormatter<'static>,
}

impl Default for FixedFloatFormatter {
    fn default() -> Self {
        Self { inner: PrettyFormatter::with_indent(b"  ") }
    }
}

impl Formatter for FixedFloatFormatter {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        write!(w, "{value:.16e}")
    }
    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, value as f64)
    }
    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_array(w)
    }
    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_array(w)
    }
    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_array_value(w)
    }
    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_object(w)
    }
    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_object(w)
    }
    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_object_key(w, first)
    }
    fn end_object_key<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_object_key(w)
    }
    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_object_value(w)
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = vec![];
    let mut ser = serde_json::Serializer::with_formatter(&mut out, FixedFloatFormatter::default());
    value.serialize(&mut ser).expect("report serialises");
    out.push(b'\n');
    out
}

/// One CSV column: quantity, units and the operation that produced it.
pub struct Column {
    pub quantity: &'static str,
    pub units: &'static str,
    pub op: &'static str,
}

pub const fn col(quantity: &'static str, units: &'static str, op: &'static str) -> Column {
    Column { quantity, units, op }
}

/// A plotted series, written with a `quantity [units] (op)` header.
pub struct Series {
    pub name: String,
    pub columns: Vec<Column>,
    pub rows: Vec<Vec<f64>>,
}

impl Series {
    pub fn new(name: &str, columns: Vec<Column>) -> Self {
        Self { name: name.into(), columns, rows: vec![] }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn write(&self, path: &Path) -> io::Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(self.columns.iter().map(|c| format!("{} [{}] ({})", c.quantity, c.units, c.op)))?;
        for row in &self.rows {
            w.write_record(row.iter().map(|v| format!("{v:.16e}")))?;
        }
        w.flush()
    }
}

#[derive(Debug)]
pub enum ReportError {
    Io(PathBuf, io::Error),
    Parse(PathBuf, String),
    Schema { path: PathBuf, found: String },
}

impl std::fmt::Display for ReportError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ReportError::Io(p, e) => write!(f, "{}: {e}", p.display()),
            ReportError::Parse(p, e) => write!(f, "{}: not a diagnostic report: {e}", p.display()),
            ReportError::Schema { path, found } => write!(
                f,
                "{}: schema_version {found} is incompatible with {SCHEMA_VERSION}",
                path.display()
            ),
        }
    }
}

fn major(v: &str) -> Option<&str> {
    v.split('.').next().filter(|m| !m.is_empty())
}

pub fn read_report(path: &Path) -> Result<DiagnosticReport, ReportError> {
    let text = std::fs::read_to_string(path).map_err(|e| ReportError::Io(path.into(), e))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| ReportError::Parse(path.into(), e.to_string()))?;
    let found = value.get("schema_version").and_then(|v| v.as_str()).unwrap_or("missing").to_string();
    if major(&found).is_none() || major(&found) != major(SCHEMA_VERSION) {
        return Err(ReportError::Schema { path: path.into(), found });
    }
    serde_json::from_value(value).map_err(|e| ReportError::Parse(path.into(), e.to_string()))
}

/// Outcome of merging reports.
pub struct Summary {
    pub table: String,
    pub failed: usize,
    pub control_failed: usize,
    pub checks: usize,
}

pub fn summarize(reports: &[(PathBuf, DiagnosticReport)]) -> Summary {
    let mut table = String::new();
    let (mut failed, mut control_failed, mut checks) = (0, 0, 0);
    let width = reports
        .iter()
        .flat_map(|(_, r)| r.checks.iter().map(move |c| r.scenario.len() + c.name.len() + 1))
        .max()
        .unwrap_or(10);
    for (path, r) in reports {
        table.push_str(&format!("# {} ({}, seed {})\n", r.scenario, path.display(), r.seed));
        for c in &r.checks {
            checks += 1;
            let status = match (c.pass, c.control) {
                (true, false) => "pass",
                (false, false) => {
                    failed += 1;
                    "FAIL"
                }
                (false, true) => {
                    control_failed += 1;
                    "control-fail"
                }
                (true, true) => "control-pass",
            };
            let value = c.value.map_or("none".to_string(), |v| format!("{v:.3e}"));
            let cmp = match c.comparison {
                Comparison::AtMost => "<=",
                Comparison::AtLeast => ">=",
                Comparison::Equals => "==",
            };
            let label = format!("{}:{}", r.scenario, c.name);
            table.push_str(&format!("{label:<width$}  {status:<12}  {value:>10} {cmp} {:.3e}\n", c.tolerance));
        }
    }
    Summary { table, failed, control_failed, checks }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_exactly() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE, 0.0] {
            let text = String::from_utf8(to_json(&x)).unwrap();
            assert_eq!(text.trim().parse::<f64>().unwrap(), x, "{text}");
        }
        assert_eq!(to_json(&0.1), b"1.0000000000000001e-1\n");
    }

    #[test]
    fn non_finite_values_become_null() {
        let c = Check::at_most("x", Method::ClosedForm, Some(f64::NAN), 1.0);
        assert!(!c.pass);
        assert_eq!(c.value, None);
        assert_eq!(to_json(&f64::INFINITY), b"null\n");
    }

    #[test]
    fn check_comparisons() {
        assert!(Check::at_most("a", Method::ClosedForm, Some(1.0), 1.0).pass);
        assert!(!Check::at_most("a", Method::ClosedForm, None, 1.0).pass);
        assert!(Check::at_least("a", Method::ClosedForm, Some(2.0), 2.0).pass);
        let n = Check::near("a", Method::ClosedForm, Some(2.0 + 1e-7), 2.0, 1e-6);
        assert!(n.pass);
        assert!((n.value.unwrap() - 1e-7).abs() < 1e-15);
        assert!(!Check::holds("a", Method::ClosedForm, false).pass);
    }

    #[test]
    fn control_failures_do_not_fail_a_report() {
        let env = Environment {
            package: "p".into(),
            version: "0".into(),
            nodes_per_shell: 1,
            n_shells: 1,
            grid_points: 1,
            l_max: 0,
            uv_cutoff: 1.0,
        };
        let mut r = DiagnosticReport {
            schema_version: SCHEMA_VERSION.into(),
            scenario: "s".into(),
            seed: 0,
            negative_control: true,
            environment: env,
            checks: vec![Check::holds("c", Method::ClosedForm, false).control()],
            metrics: vec![],
            artifacts: vec![],
            passed: false,
        };
        r.settle();
        assert!(r.passed);
        r.checks.push(Check::holds("d", Method::ClosedForm, false));
        r.settle();
        assert!(!r.passed);
        let s = summarize(&[(PathBuf::from("x"), r)]);
        assert_eq!((s.failed, s.control_failed, s.checks), (1, 1, 2));
    }
}
