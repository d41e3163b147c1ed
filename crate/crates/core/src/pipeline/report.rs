//! The comparison report: JSON document plus the text table.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::metrics;

/// One head's evaluation on the held-out half.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportRow {
    pub model: String,
    pub head: String,
    pub accuracy_pct: f64,
    pub epochs: usize,
    pub data_aug: bool,
    pub confusion: Vec<Vec<usize>>,
    pub per_class: Vec<PerClassStats>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerClassStats {
    pub name: String,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleCounts {
    pub train: usize,
    pub test: usize,
}

/// The full evaluation report emitted by a compare run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalReport {
    pub rows: Vec<ReportRow>,
    pub split_seed: u64,
    pub feature_checksum: String,
    pub counts: SampleCounts,
}

impl EvalReport {
    /// Deterministic JSON bytes (two-space indent, trailing newline).
    pub fn to_json(&self) -> Result<String> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        Ok(text)
    }

    pub fn from_json(text: &str) -> Result<EvalReport> {
        Ok(serde_json::from_str(text)?)
    }

    /// Structural invariants: head names, confusion totals, and the
    /// accuracy/trace identity within rounding.
    pub fn validate(&self) -> Result<()> {
        if self.rows.is_empty() {
            return Err(Error::Dataset("report has no rows".into()));
        }
        for row in &self.rows {
            if row.head != "softmax" && row.head != "svm" {
                return Err(Error::Dataset(format!("unknown head '{}'", row.head)));
            }
            let k = row.confusion.len();
            if row.confusion.iter().any(|r| r.len() != k) {
                return Err(Error::Dataset("confusion matrix is not square".into()));
            }
            if row.per_class.len() != k {
                return Err(Error::Dataset(
                    "per-class stats do not match confusion dims".into(),
                ));
            }
            let total: usize = row.confusion.iter().flatten().sum();
            if total != self.counts.test {
                return Err(Error::Dataset(format!(
                    "confusion entries sum to {total}, test count is {}",
                    self.counts.test
                )));
            }
            let trace: usize = (0..k).map(|i| row.confusion[i][i]).sum();
            let expected = metrics::accuracy(trace, total)?;
            if (row.accuracy_pct - expected).abs() > 0.005 + 1e-9 {
                return Err(Error::Dataset(format!(
                    "row accuracy {} disagrees with confusion trace ({expected})",
                    row.accuracy_pct
                )));
            }
        }
        Ok(())
    }
}

/// Renders the comparison table: one line per model with both head
/// accuracies side by side.
pub fn render_table(report: &EvalReport) -> String {
    struct Line {
        model: String,
        softmax: Option<f64>,
        svm: Option<f64>,
        data_aug: bool,
        epochs: usize,
    }
    let mut lines: Vec<Line> = Vec::new();
    for row in &report.rows {
        let line = match lines.iter_mut().find(|l| l.model == row.model) {
            Some(line) => line,
            None => {
                lines.push(Line {
                    model: row.model.clone(),
                    softmax: None,
                    svm: None,
                    data_aug: row.data_aug,
                    epochs: row.epochs,
                });
                lines.last_mut().unwrap()
            }
        };
        match row.head.as_str() {
            "softmax" => line.softmax = Some(row.accuracy_pct),
            _ => line.svm = Some(row.accuracy_pct),
        }
    }

    let fmt = |v: Option<f64>| v.map_or("-".to_string(), |a| format!("{a:.2}"));
    let model_width = lines
        .iter()
        .map(|l| l.model.len())
        .chain(std::iter::once("Model".len()))
        .max()
        .unwrap();

    let mut out = String::new();
    out.push_str(&format!(
        "{:<model_width$}  {:>8}  {:>8}  {:>9}  {:>5}\n",
        "Model", "Softmax", "SVM", "Data Aug.", "Epoch"
    ));
    for line in lines {
        out.push_str(&format!(
            "{:<model_width$}  {:>8}  {:>8}  {:>9}  {:>5}\n",
            line.model,
            fmt(line.softmax),
            fmt(line.svm),
            if line.data_aug { "+" } else { "-" },
            line.epochs
        ));
    }
    out
}
