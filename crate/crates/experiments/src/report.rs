use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

impl Verdict {
    pub fn exit_code(self) -> i32 {
        match self {
            Verdict::Pass => 0,
            Verdict::Fail => 1,
            Verdict::Inconclusive => 2,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::Inconclusive => "INCONCLUSIVE",
        }
    }
}

/// JSON has no NaN or infinities; those are written as strings.
mod float_repr {
    use super::*;

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_str(&v.to_string())
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(x) => Ok(x),
            Repr::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Metric {
    #[serde(with = "float_repr")]
    pub value: f64,
    /// Two-sided interval, when the metric is a statistical estimate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ci: Option<(f64, f64)>,
}

impl Metric {
    pub fn bits_eq(&self, other: &Metric) -> bool {
        self.value.to_bits() == other.value.to_bits()
            && match (self.ci, other.ci) {
                (None, None) => true,
                (Some(a), Some(b)) => a.0.to_bits() == b.0.to_bits() && a.1.to_bits() == b.1.to_bits(),
                _ => false,
            }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    Inconclusive,
}

impl From<bool> for Status {
    fn from(ok: bool) -> Self {
        if ok {
            Status::Pass
        } else {
            Status::Fail
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub status: Status,
    /// Informational checks are reported but do not enter the verdict.
    pub gating: bool,
    pub rule: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

/// A CSV artifact: named columns of numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self { name: name.into(), header: header.iter().map(|h| h.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }
}

/// What an experiment hands back before it is stamped into a report.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub metrics: BTreeMap<String, Metric>,
    pub checks: Vec<Check>,
    pub tables: Vec<Table>,
    pub notes: Vec<String>,
}

impl Outcome {
    pub fn metric(&mut self, name: &str, value: f64) {
        self.metrics.insert(name.into(), Metric { value, ci: None });
    }

    pub fn metric_ci(&mut self, name: &str, value: f64, ci: (f64, f64)) {
        self.metrics.insert(name.into(), Metric { value, ci: Some(ci) });
    }

    pub fn check(&mut self, name: &str, status: impl Into<Status>, rule: &str, detail: String) {
        self.checks.push(Check { name: name.into(), status: status.into(), gating: true, rule: rule.into(), detail });
    }

    pub fn info(&mut self, name: &str, status: impl Into<Status>, rule: &str, detail: String) {
        self.checks.push(Check { name: name.into(), status: status.into(), gating: false, rule: rule.into(), detail });
    }

    pub fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }

    pub fn status_of(&self, name: &str) -> Option<Status> {
        self.checks.iter().find(|c| c.name == name).map(|c| c.status)
    }

    /// Fail if any gating check fails, otherwise Inconclusive if any gating
    /// check is inconclusive, otherwise Pass.
    pub fn verdict(&self) -> Verdict {
        let gating = || self.checks.iter().filter(|c| c.gating);
        if gating().any(|c| c.status == Status::Fail) {
            Verdict::Fail
        } else if gating().any(|c| c.status == Status::Inconclusive) {
            Verdict::Inconclusive
        } else {
            Verdict::Pass
        }
    }
}

pub const VERDICT_RULE: &str = "FAIL if any gating check fails; else INCONCLUSIVE if any gating check is inconclusive; else PASS";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub code_version: String,
    pub config_digest: String,
    pub seeds: Vec<u64>,
    pub verdict: Verdict,
    pub rule: String,
    pub metrics: BTreeMap<String, Metric>,
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
    pub artifacts: Vec<PathBuf>,
    pub wall_time_s: f64,
    /// The fully expanded config; `replay` re-executes from this.
    pub config: serde_json::Value,
}

impl ExperimentReport {
    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).map(|m| m.value)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// Names of metrics or checks that differ from `other` (bitwise for numbers).
    pub fn differences(&self, other: &ExperimentReport) -> Vec<String> {
        let mut out = Vec::new();
        for (k, m) in &self.metrics {
            match other.metrics.get(k) {
                Some(o) if o.bits_eq(m) => {}
                _ => out.push(format!("metric {k}")),
            }
        }
        out.extend(other.metrics.keys().filter(|k| !self.metrics.contains_key(*k)).map(|k| format!("metric {k}")));
        if self.checks != other.checks {
            out.push("checks".into());
        }
        if self.verdict != other.verdict {
            out.push("verdict".into());
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

pub fn write_table(dir: &Path, table: &Table) -> Result<PathBuf> {
    let path = dir.join(format!("{}.csv", table.name));
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(&table.header)?;
    for row in &table.rows {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(path)
}

/// Self-contained matplotlib script plotting every column against the first.
pub fn write_plot_script(dir: &Path, table: &Table) -> Result<PathBuf> {
    let path = dir.join(format!("plot_{}.py", table.name));
    let script = format!(
        r#"import csv
import sys

import matplotlib.pyplot as plt

with open("{name}.csv") as fh:
    rows = list(csv.DictReader(fh))
cols = {cols:?}
x = [float(r[cols[0]]) for r in rows]
fig, ax = plt.subplots()
for c in cols[1:]:
    ax.plot(x, [float(r[c]) for r in rows], ".", label=c)
ax.set_xlabel(cols[0])
ax.legend()
fig.savefig(sys.argv[1] if len(sys.argv) > 1 else "{name}.png", dpi=120)
"#,
        name = table.name,
        cols = table.header,
    );
    std::fs::write(&path, script)?;
    Ok(path)
}
