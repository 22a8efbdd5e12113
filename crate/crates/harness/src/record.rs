use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};
use erosion_flow::stats::TestReport;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

/// Outcome for one acceptance criterion. `checks` decide `pass`;
/// `diagnostics` and `sensitivity` lines are informational.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionReport {
    pub criterion: u8,
    pub title: String,
    pub pass: bool,
    pub checks: Vec<TestReport>,
    #[serde(default)]
    pub diagnostics: Vec<TestReport>,
    #[serde(default)]
    pub sensitivity: Vec<String>,
}

impl CriterionReport {
    pub fn new(criterion: u8, title: &str) -> Self {
        Self {
            criterion,
            title: title.to_string(),
            pass: true,
            checks: Vec::new(),
            diagnostics: Vec::new(),
            sensitivity: Vec::new(),
        }
    }

    pub fn check(&mut self, r: TestReport) -> &mut Self {
        self.pass &= r.pass;
        self.checks.push(r);
        self
    }

    pub fn diagnostic(&mut self, r: TestReport) -> &mut Self {
        self.diagnostics.push(r);
        self
    }

    pub fn sensitivity(&mut self, line: String) -> &mut Self {
        self.sensitivity.push(line);
        self
    }

    /// `criterion N [title]: PASS|FAIL` followed by the failing checks.
    pub fn summary_line(&self) -> String {
        let mut s = format!("criterion {:>2} [{}]: {}", self.criterion, self.title, if self.pass { "PASS" } else { "FAIL" });
        for c in self.checks.iter().filter(|c| !c.pass) {
            let _ = write!(s, "; failed: {} (statistic {:.6e} > threshold {:.6e})", c.description, c.statistic, c.threshold);
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: ExperimentConfig,
    pub reports: Vec<CriterionReport>,
    pub pass: bool,
    pub wall_time_s: f64,
    pub artifacts: Vec<String>,
}

pub const RESULTS_FILE: &str = "results.json";

impl RunRecord {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(RESULTS_FILE);
        let s = std::fs::read_to_string(&path).map_err(|e| HarnessError::io(&path, e))?;
        Ok(serde_json::from_str(&s)?)
    }

    /// Human-readable report: one line per criterion, then details.
    pub fn render(&self, verbose: bool) -> String {
        let mut s = format!("experiment {} (seed {}): {}\n", self.config.name, self.config.root_seed, if self.pass { "PASS" } else { "FAIL" });
        for r in &self.reports {
            s.push_str(&r.summary_line());
            s.push('\n');
            if verbose {
                for c in &r.checks {
                    let _ = writeln!(s, "    check {}: {} ({:.6e} vs {:.6e})", c.description, pass_word(c.pass), c.statistic, c.threshold);
                }
                for c in &r.diagnostics {
                    let _ = writeln!(s, "    diagnostic {}: {} ({:.6e} vs {:.6e})", c.description, pass_word(c.pass), c.statistic, c.threshold);
                }
                for l in &r.sensitivity {
                    let _ = writeln!(s, "    sensitivity {l}");
                }
            }
        }
        let _ = writeln!(s, "wall time {:.2} s", self.wall_time_s);
        s
    }
}

fn pass_word(p: bool) -> &'static str {
    if p {
        "pass"
    } else {
        "fail"
    }
}

/// A numeric table written as CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self { name: name.to_string(), header: header.iter().map(|h| h.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for r in &self.rows {
            let cells: Vec<String> = r.iter().map(|v| v.to_string()).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }
}
