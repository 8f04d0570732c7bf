//! Machine-readable run reports and the plain-text tables printed alongside.
//!
//! Reports are pretty-printed JSON. They carry the resolved configuration and
//! the crate version, and contain nothing that varies between identical runs
//! (no timings, paths of the report itself, or worker counts).

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::ScreenConfig;
use crate::dataset::OutcomeKind;
use crate::harvest::{HarvestReport, RoundReport};
use crate::simulate::{Comparison, SimSpec, SimSummary};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("cannot access report {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("report {path} is not valid: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub n_rows: usize,
    pub n_features: usize,
    pub outcome_kind: OutcomeKind,
}

/// Model refit on the training rows with the final features, scored on both partitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoldoutReport {
    pub fraction: f64,
    pub train_rows: usize,
    pub holdout_rows: usize,
    pub features: Vec<usize>,
    pub train_accuracy: Option<f64>,
    /// Absent when no feature survived or the holdout cannot be scored.
    pub holdout_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreenReport {
    pub version: String,
    pub config: ScreenConfig,
    pub dataset: DatasetInfo,
    pub result: HarvestReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub holdout: Option<HoldoutReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReproduceReport {
    pub version: String,
    pub table: String,
    /// Fewer replications than the published study.
    pub reduced: bool,
    pub spec: SimSpec,
    pub summary: SimSummary,
    pub comparison: Comparison,
}

/// Either kind of report, distinguished by its fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AnyReport {
    Screen(ScreenReport),
    Reproduce(ReproduceReport),
}

pub fn to_json<T: Serialize>(report: &T) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("reports serialize");
    s.push('\n');
    s
}

pub fn write_json<T: Serialize>(report: &T, path: &Path) -> Result<(), ReportError> {
    std::fs::write(path, to_json(report)).map_err(|source| ReportError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load(path: &Path) -> Result<AnyReport, ReportError> {
    let text = std::fs::read_to_string(path).map_err(|source| ReportError::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| ReportError::Json {
        path: path.display().to_string(),
        source,
    })
}

/// Differences between the serialized content of two reports as
/// human-readable lines; empty when equal.
pub fn differences(a: &AnyReport, b: &AnyReport) -> Vec<String> {
    let mut out = Vec::new();
    match (a, b) {
        (AnyReport::Screen(a), AnyReport::Screen(b)) => {
            if to_json(&a.config) != to_json(&b.config) {
                out.push("configurations differ".to_string());
            }
            let names = |r: &ScreenReport| -> Vec<String> {
                r.result.final_features.iter().map(|f| f.name.clone()).collect()
            };
            let (na, nb) = (names(a), names(b));
            let only_a: Vec<&String> = na.iter().filter(|n| !nb.contains(n)).collect();
            let only_b: Vec<&String> = nb.iter().filter(|n| !na.contains(n)).collect();
            if !only_a.is_empty() {
                out.push(format!("selected only in the first report: {only_a:?}"));
            }
            if !only_b.is_empty() {
                out.push(format!("selected only in the second report: {only_b:?}"));
            }
            if a.result.rounds.len() != b.result.rounds.len() {
                out.push(format!(
                    "round counts differ: {} vs {}",
                    a.result.rounds.len(),
                    b.result.rounds.len()
                ));
            }
            for (ra, rb) in a.result.rounds.iter().zip(&b.result.rounds) {
                let dp = ra
                    .results
                    .iter()
                    .zip(&rb.results)
                    .filter(|(x, y)| x.feature == y.feature)
                    .map(|(x, y)| (x.p_value - y.p_value).abs())
                    .fold(0.0, f64::max);
                if ra.results.len() != rb.results.len() || dp > 0.0 {
                    out.push(format!(
                        "round {}: largest p-value difference {dp:.3e}",
                        ra.round_index
                    ));
                }
            }
        }
        (AnyReport::Reproduce(a), AnyReport::Reproduce(b)) => {
            if a.spec != b.spec {
                out.push("study settings differ".to_string());
            }
            let ca = &a.summary.per_feature_selection_counts;
            let cb = &b.summary.per_feature_selection_counts;
            if ca != cb {
                let changed = ca.iter().zip(cb).filter(|(x, y)| x != y).count();
                out.push(format!("selection counts differ for {changed} features"));
            }
        }
        _ => out.push("reports are of different kinds".to_string()),
    }
    if out.is_empty() && to_json(a) != to_json(b) {
        out.push("reports differ in other fields".to_string());
    }
    out
}

fn cell(v: f64) -> String {
    format!("{v:.4}")
}

fn p_cell(v: f64) -> String {
    if v != 0.0 && v < 1e-4 {
        format!("{v:.3e}")
    } else {
        format!("{v:.4}")
    }
}

/// Survivors of one round sorted by p-value, as an aligned table.
pub fn survivor_table(round: &RoundReport, names: &[String]) -> String {
    let mut rows: Vec<_> = round.results.iter().filter(|r| r.selected).collect();
    rows.sort_by(|a, b| a.p_value.total_cmp(&b.p_value).then(a.feature.cmp(&b.feature)));
    let header = ["feature", "n_i", "avg_rank", "z", "p", "p_adj"];
    let body: Vec<[String; 6]> = rows
        .iter()
        .map(|r| {
            [
                names[r.feature].clone(),
                r.n_i.to_string(),
                format!("{:.2}", r.avg_rank),
                cell(r.z),
                p_cell(r.p_value),
                p_cell(r.p_adjusted),
            ]
        })
        .collect();
    let mut width = header.map(str::len);
    for row in &body {
        for (w, c) in width.iter_mut().zip(row) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, cells: &[&str]| {
        for (i, c) in cells.iter().enumerate() {
            if i == 0 {
                let _ = write!(out, "{c:<w$}", w = width[0]);
            } else {
                let _ = write!(out, "  {c:>w$}", w = width[i]);
            }
        }
        out.push('\n');
    };
    line(&mut out, &header);
    for row in &body {
        let cells: Vec<&str> = row.iter().map(String::as_str).collect();
        line(&mut out, &cells);
    }
    out
}

fn triple(v: Option<[f64; 3]>) -> String {
    match v {
        Some([a, b, c]) => format!("{a:>7.1}{b:>8.1}{c:>7.1}"),
        None => format!("{:>7}{:>8}{:>7}", "-", "-", "-"),
    }
}

/// Computed vs published sensitivity and specificity, in percent.
pub fn comparison_table(c: &Comparison) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<24}{:>7}{:>8}{:>7}", "", "min", "median", "max");
    for (label, computed, published, diff) in [
        (
            "sensitivity",
            c.computed_sensitivity,
            c.published_sensitivity,
            c.sensitivity_abs_diff,
        ),
        (
            "specificity",
            c.computed_specificity,
            c.published_specificity,
            c.specificity_abs_diff,
        ),
    ] {
        let _ = writeln!(out, "{:<24}{}", format!("{label} computed"), triple(computed));
        let _ = writeln!(out, "{:<24}{}", format!("{label} published"), triple(Some(published)));
        let _ = writeln!(out, "{:<24}{}", format!("{label} |diff|"), triple(diff));
    }
    out
}
