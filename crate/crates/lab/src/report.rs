//! Verification reports and their JSON, CSV and text renderings.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Skipped,
    Inconclusive,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Pass => "pass",
            Self::Fail => "fail",
            Self::Skipped => "skipped",
            Self::Inconclusive => "inconclusive",
        }
    }

    /// Whether this outcome makes a run fail.
    pub fn is_failure(self) -> bool {
        matches!(self, Self::Fail | Self::Inconclusive)
    }
}

/// An estimated or exact number with its origin.
#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
pub struct Quantity {
    pub name: String,
    pub value: f64,
    /// Zero for exact values.
    pub stderr: f64,
    /// `monte_carlo`, `exact`, `closed_form`, `rational` or `derived`.
    pub source: String,
}

impl Quantity {
    pub fn new(name: impl Into<String>, value: f64, stderr: f64, source: &str) -> Self {
        Self { name: name.into(), value, stderr, source: source.into() }
    }

    pub fn exact(name: impl Into<String>, value: f64) -> Self {
        Self::new(name, value, 0.0, "exact")
    }
}

/// One comparison `value ≤ bound` (or the rule stated in `rule`).
#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    pub passed: bool,
    pub rule: String,
    /// Diagnostic checks are reported but do not decide the status.
    pub diagnostic: bool,
}

impl Check {
    /// Passes iff `value ≤ bound`.
    pub fn at_most(name: impl Into<String>, value: f64, bound: f64, rule: impl Into<String>) -> Self {
        Self { name: name.into(), value, bound, passed: value <= bound, rule: rule.into(), diagnostic: false }
    }

    pub fn flag(name: impl Into<String>, passed: bool, rule: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            value: if passed { 1.0 } else { 0.0 },
            bound: 1.0,
            passed,
            rule: rule.into(),
            diagnostic: false,
        }
    }

    pub fn diagnostic(mut self) -> Self {
        self.diagnostic = true;
        self
    }
}

/// Plot-ready rows emitted to the CSV file.
#[derive(Clone, Debug, Default, Deserialize, Serialize, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
pub struct VerificationReport {
    pub test: String,
    pub status: Status,
    pub reason: String,
    pub quantities: Vec<Quantity>,
    pub checks: Vec<Check>,
    pub seeds: Vec<u64>,
    pub table: Table,
}

impl VerificationReport {
    pub fn new(test: &str) -> Self {
        Self {
            test: test.into(),
            status: Status::Pass,
            reason: String::new(),
            quantities: Vec::new(),
            checks: Vec::new(),
            seeds: Vec::new(),
            table: Table::default(),
        }
    }

    pub fn skipped(test: &str, reason: impl Into<String>) -> Self {
        let mut r = Self::new(test);
        r.status = Status::Skipped;
        r.reason = reason.into();
        r
    }

    pub fn quantity(&mut self, q: Quantity) {
        self.quantities.push(q);
    }

    pub fn check(&mut self, c: Check) {
        self.checks.push(c);
    }

    pub fn get(&self, name: &str) -> Option<&Quantity> {
        self.quantities.iter().find(|q| q.name == name)
    }

    /// Sets the status from the gating checks unless the test was skipped
    /// or declared inconclusive.
    pub fn finalize(mut self) -> Self {
        if matches!(self.status, Status::Skipped | Status::Inconclusive) {
            return self;
        }
        let failed: Vec<&str> =
            self.checks.iter().filter(|c| !c.diagnostic && !c.passed).map(|c| c.name.as_str()).collect();
        if failed.is_empty() {
            self.status = Status::Pass;
        } else {
            self.status = Status::Fail;
            if self.reason.is_empty() {
                self.reason = format!("failed checks: {}", failed.join(", "));
            }
        }
        self
    }

    pub fn inconclusive(mut self, reason: impl Into<String>) -> Self {
        self.status = Status::Inconclusive;
        self.reason = reason.into();
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports contain only finite or null numbers")
    }

    /// The table in CSV with 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = self.table.columns.join(",");
        out.push('\n');
        for row in &self.table.rows {
            let cells: Vec<String> = row.iter().map(|v| fmt_num(*v)).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{}: {}", self.test, self.status.as_str().to_uppercase());
        if !self.reason.is_empty() {
            let _ = writeln!(s, "  reason: {}", self.reason);
        }
        for q in &self.quantities {
            if q.stderr > 0.0 {
                let _ = writeln!(s, "  {} = {} ± {} ({})", q.name, fmt_num(q.value), fmt_num(q.stderr), q.source);
            } else {
                let _ = writeln!(s, "  {} = {} ({})", q.name, fmt_num(q.value), q.source);
            }
        }
        for c in &self.checks {
            let mark = if c.passed { "ok" } else { "FAILED" };
            let kind = if c.diagnostic { " [diagnostic]" } else { "" };
            let _ = writeln!(
                s,
                "  check {}: {} vs {} ({}) {}{}",
                c.name,
                fmt_num(c.value),
                fmt_num(c.bound),
                c.rule,
                mark,
                kind
            );
        }
        if !self.seeds.is_empty() {
            let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
            let _ = writeln!(s, "  seeds: {}", seeds.join(" "));
        }
        s
    }
}

/// 17 significant digits in scientific notation.
pub fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
pub struct SummaryEntry {
    pub test: String,
    pub status: Status,
    pub reason: String,
}

/// Run-level outcome written to `summary.json`.
#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
pub struct Summary {
    pub spec: SpecEcho,
    pub tests: Vec<SummaryEntry>,
    pub passed: bool,
}

/// Spec matrices echoed row-major as 17-digit strings.
#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
pub struct SpecEcho {
    pub d: usize,
    pub b: Vec<String>,
    #[serde(rename = "A")]
    pub a: Vec<String>,
    #[serde(rename = "R")]
    pub r: Vec<String>,
}

impl SpecEcho {
    pub fn new(b: &[f64], a: &[Vec<f64>], r: &[Vec<f64>]) -> Self {
        let flat = |m: &[Vec<f64>]| m.iter().flatten().map(|v| fmt_num(*v)).collect();
        Self { d: b.len(), b: b.iter().map(|v| fmt_num(*v)).collect(), a: flat(a), r: flat(r) }
    }
}

impl Summary {
    pub fn new(spec: SpecEcho, reports: &[VerificationReport]) -> Self {
        let tests: Vec<SummaryEntry> = reports
            .iter()
            .map(|r| SummaryEntry { test: r.test.clone(), status: r.status, reason: r.reason.clone() })
            .collect();
        let passed = !tests.iter().any(|t| t.status.is_failure());
        Self { spec, tests, passed }
    }

    pub fn to_text(&self, reports: &[VerificationReport]) -> String {
        let mut s = String::new();
        for r in reports {
            s.push_str(&r.to_text());
        }
        let _ = writeln!(s, "overall: {}", if self.passed { "PASS" } else { "FAIL" });
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn status_follows_gating_checks() {
        let mut r = VerificationReport::new("t");
        r.check(Check::at_most("a", 1.0, 2.0, "a ≤ 2"));
        r.check(Check::at_most("b", 3.0, 2.0, "b ≤ 2").diagnostic());
        let r = r.finalize();
        assert_eq!(r.status, Status::Pass);
        let mut r = VerificationReport::new("t");
        r.check(Check::at_most("a", 3.0, 2.0, "a ≤ 2"));
        let r = r.finalize();
        assert_eq!(r.status, Status::Fail);
        assert!(r.reason.contains('a'));
    }

    #[test]
    fn skipped_stays_skipped() {
        let r = VerificationReport::skipped("t", "d = 1").finalize();
        assert_eq!(r.status, Status::Skipped);
        assert!(!r.status.is_failure());
    }

    #[test]
    fn numbers_round_trip() {
        let v = 0.1 + 0.2;
        assert_eq!(fmt_num(v).parse::<f64>().unwrap(), v);
        let mut r = VerificationReport::new("t");
        r.quantity(Quantity::exact("x", v));
        let back: VerificationReport = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn csv_has_header_and_rows() {
        let mut r = VerificationReport::new("t");
        r.table = Table { columns: vec!["n".into(), "x".into()], rows: vec![vec![16.0, 0.5]] };
        assert_eq!(r.to_csv(), "n,x\n1.6000000000000000e1,5.0000000000000000e-1\n");
    }
}
