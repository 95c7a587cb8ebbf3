//! Per-run result rows, their CSV form, and mean ± std aggregation.

use std::fmt::Write as _;
use std::path::Path;

use mintood::metrics::{EvalReport, REPORT_COLUMNS};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

const KEY_COLUMNS: [&str; 4] = ["variant", "label", "seed", "scorer"];

/// One trained model evaluated with one scorer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub variant: String,
    pub label: String,
    pub seed: u64,
    pub scorer: String,
    /// Values in `REPORT_COLUMNS` order.
    pub metrics: [f64; 11],
}

impl RunRow {
    pub fn new(variant: &str, label: &str, seed: u64, report: &EvalReport) -> Self {
        Self {
            variant: variant.into(),
            label: label.into(),
            seed,
            scorer: report.scorer.clone(),
            metrics: report.csv_row(),
        }
    }

    pub fn metric(&self, name: &str) -> Option<f64> {
        column(name).map(|i| self.metrics[i])
    }
}

/// Mean and sample standard deviation of each metric over the seeds of one
/// (variant, scorer) group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub variant: String,
    pub label: String,
    pub scorer: String,
    pub n: usize,
    pub mean: [f64; 11],
    pub std: [f64; 11],
}

impl Aggregate {
    pub fn mean_of(&self, name: &str) -> Option<f64> {
        column(name).map(|i| self.mean[i])
    }
}

/// A directional comparison between two variants' mean metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderingCheck {
    pub name: String,
    pub metric: String,
    pub lhs: String,
    pub rhs: String,
    pub lhs_mean: f64,
    pub rhs_mean: f64,
    pub holds: bool,
}

fn column(name: &str) -> Option<usize> {
    REPORT_COLUMNS.iter().position(|c| *c == name)
}

/// Groups rows by (variant, scorer) in first-appearance order. Sums run in
/// row order.
pub fn aggregate(rows: &[RunRow]) -> Vec<Aggregate> {
    let mut groups: Vec<(&str, &str, &str, Vec<&RunRow>)> = Vec::new();
    for r in rows {
        match groups.iter_mut().find(|g| g.0 == r.variant && g.2 == r.scorer) {
            Some(g) => g.3.push(r),
            None => groups.push((&r.variant, &r.label, &r.scorer, vec![r])),
        }
    }
    groups
        .into_iter()
        .map(|(variant, label, scorer, members)| {
            let n = members.len();
            let mut mean = [0.0; 11];
            let mut std = [0.0; 11];
            for j in 0..11 {
                let sum: f64 = members.iter().map(|r| r.metrics[j]).sum();
                mean[j] = sum / n as f64;
                if n > 1 {
                    let ss: f64 = members.iter().map(|r| (r.metrics[j] - mean[j]).powi(2)).sum();
                    std[j] = (ss / (n - 1) as f64).sqrt();
                }
            }
            Aggregate {
                variant: variant.into(),
                label: label.into(),
                scorer: scorer.into(),
                n,
                mean,
                std,
            }
        })
        .collect()
}

/// Weighted fusion against additive and concatenating fusion, and the full
/// model against the one without binary pre-training, on mean AUROC.
/// Comparisons whose variants are absent are left out.
pub fn ordering_checks(aggs: &[Aggregate]) -> Vec<OrderingCheck> {
    let pairs = [
        ("weighted >= add", "full", "add"),
        ("weighted >= concat", "full", "concat"),
        ("full >= no_binary", "full", "no_binary"),
    ];
    let mut out = Vec::new();
    let scorers = {
        let mut s: Vec<&str> = aggs.iter().map(|a| a.scorer.as_str()).collect();
        s.dedup();
        s
    };
    for scorer in scorers {
        let find = |v: &str| aggs.iter().find(|a| a.variant == v && a.scorer == scorer);
        for (name, l, r) in pairs {
            if let (Some(a), Some(b)) = (find(l), find(r)) {
                let (lm, rm) = (a.mean_of("auroc").unwrap(), b.mean_of("auroc").unwrap());
                out.push(OrderingCheck {
                    name: name.into(),
                    metric: "auroc".into(),
                    lhs: l.into(),
                    rhs: r.into(),
                    lhs_mean: lm,
                    rhs_mean: rm,
                    holds: lm >= rm,
                });
            }
        }
    }
    out
}

fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

pub fn write_runs(path: &Path, rows: &[RunRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| table_err(path, e))?;
    let header: Vec<&str> = KEY_COLUMNS.iter().chain(REPORT_COLUMNS.iter()).copied().collect();
    w.write_record(&header).map_err(|e| table_err(path, e))?;
    for r in rows {
        let mut rec = vec![r.variant.clone(), r.label.clone(), r.seed.to_string(), r.scorer.clone()];
        rec.extend(r.metrics.iter().map(|&v| fmt_f64(v)));
        w.write_record(&rec).map_err(|e| table_err(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn read_runs(path: &Path) -> Result<Vec<RunRow>> {
    let mut rd = csv::Reader::from_path(path).map_err(|e| table_err(path, e))?;
    let header = rd.headers().map_err(|e| table_err(path, e))?.clone();
    let expected: Vec<&str> = KEY_COLUMNS.iter().chain(REPORT_COLUMNS.iter()).copied().collect();
    if header.iter().collect::<Vec<_>>() != expected {
        return Err(CliError::Table {
            path: path.into(),
            reason: format!("expected columns {}", expected.join(",")),
        });
    }
    let mut rows = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec.map_err(|e| table_err(path, e))?;
        let bad = |what: &str| CliError::Table {
            path: path.into(),
            reason: format!("row {}: bad {what}", i + 1),
        };
        let seed = rec[2].parse().map_err(|_| bad("seed"))?;
        let mut metrics = [0.0; 11];
        for (j, m) in metrics.iter_mut().enumerate() {
            *m = rec[4 + j].parse().map_err(|_| bad(REPORT_COLUMNS[j]))?;
        }
        rows.push(RunRow {
            variant: rec[0].into(),
            label: rec[1].into(),
            seed,
            scorer: rec[3].into(),
            metrics,
        });
    }
    Ok(rows)
}

pub fn write_summary(path: &Path, aggs: &[Aggregate]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| table_err(path, e))?;
    let mut header = vec!["variant".to_string(), "label".into(), "scorer".into(), "n".into()];
    for c in REPORT_COLUMNS {
        header.push(format!("{c}_mean"));
        header.push(format!("{c}_std"));
    }
    w.write_record(&header).map_err(|e| table_err(path, e))?;
    for a in aggs {
        let mut rec = vec![a.variant.clone(), a.label.clone(), a.scorer.clone(), a.n.to_string()];
        for j in 0..11 {
            rec.push(fmt_f64(a.mean[j]));
            rec.push(fmt_f64(a.std[j]));
        }
        w.write_record(&rec).map_err(|e| table_err(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Human-readable table with values in percent, `mean ± std`.
pub fn render(aggs: &[Aggregate]) -> String {
    let mut s = String::new();
    let _ = write!(s, "| Method | Scorer | n |");
    for c in REPORT_COLUMNS {
        let _ = write!(s, " {} |", c.to_uppercase());
    }
    s.push('\n');
    s.push_str(&"|---".repeat(3 + REPORT_COLUMNS.len()));
    s.push_str("|\n");
    for a in aggs {
        let _ = write!(s, "| {} | {} | {} |", a.label, a.scorer, a.n);
        for j in 0..11 {
            let _ = write!(s, " {:.2} ± {:.2} |", 100.0 * a.mean[j], 100.0 * a.std[j]);
        }
        s.push('\n');
    }
    s
}

fn table_err(path: &Path, e: csv::Error) -> CliError {
    CliError::Table {
        path: path.into(),
        reason: e.to_string(),
    }
}
