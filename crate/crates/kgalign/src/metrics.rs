//! Evaluation settings and report persistence.
//!
//! The real setting scores a prediction set against gold test pairs with
//! precision/recall/F1; nothing tells the system which entities are
//! matchable. The ideal setting ranks only matchable test sources and
//! reports Hits@k and MRR (computed in [`crate::infer::evaluate_ideal`]).

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::graph::EntityId;
use crate::{Error, Result};

/// Precision/recall/F1 of a prediction set against gold pairs.
///
/// Conventions: an empty prediction set scores precision 1.0 against empty
/// gold and 0.0 otherwise; empty gold yields recall 1.0 (vacuous).
pub fn evaluate_real(
    pred: &[(EntityId, EntityId)],
    gold: &[(EntityId, EntityId)],
) -> (f64, f64, f64) {
    let gold_set: HashSet<(u32, u32)> = gold.iter().map(|&(a, b)| (a.0, b.0)).collect();
    let correct = pred
        .iter()
        .filter(|&&(a, b)| gold_set.contains(&(a.0, b.0)))
        .count();
    let precision = if pred.is_empty() {
        if gold.is_empty() {
            1.0
        } else {
            0.0
        }
    } else {
        correct as f64 / pred.len() as f64
    };
    let recall = if gold.is_empty() {
        1.0
    } else {
        correct as f64 / gold.len() as f64
    };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    (precision, recall, f1)
}

/// Everything the pipeline reports at the end of a run.
#[derive(Debug, Clone, Default)]
pub struct MetricsReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub hits_at: BTreeMap<usize, f64>,
    pub mrr: f64,
    pub runtime_seconds: f64,
    pub peak_memory_bytes: u64,
}

/// Write the metrics file: the resolved configuration first (prefixed with
/// `cfg.`), then one `key=value` line per metric.
pub fn write_metrics(
    path: &Path,
    report: &MetricsReport,
    config_echo: &[(String, String)],
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for (k, v) in config_echo {
        writeln!(w, "cfg.{k}={v}").map_err(|e| Error::io(path, e))?;
    }
    writeln!(w, "precision={:.6}", report.precision).map_err(|e| Error::io(path, e))?;
    writeln!(w, "recall={:.6}", report.recall).map_err(|e| Error::io(path, e))?;
    writeln!(w, "f1={:.6}", report.f1).map_err(|e| Error::io(path, e))?;
    for (k, v) in &report.hits_at {
        writeln!(w, "hits@{k}={v:.6}").map_err(|e| Error::io(path, e))?;
    }
    writeln!(w, "mrr={:.6}", report.mrr).map_err(|e| Error::io(path, e))?;
    writeln!(w, "runtime_seconds={:.3}", report.runtime_seconds)
        .map_err(|e| Error::io(path, e))?;
    writeln!(w, "peak_memory_bytes={}", report.peak_memory_bytes)
        .map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Parse a metrics file back into a report (config echo lines are skipped).
pub fn read_metrics(path: &Path) -> Result<MetricsReport> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut report = MetricsReport::default();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.is_empty() || line.starts_with('#') || line.starts_with("cfg.") {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::parse(path, lineno + 1, "expected key=value"));
        };
        let parse = |v: &str| -> Result<f64> {
            v.parse::<f64>()
                .map_err(|_| Error::parse(path, lineno + 1, format!("bad number '{v}'")))
        };
        match key {
            "precision" => report.precision = parse(value)?,
            "recall" => report.recall = parse(value)?,
            "f1" => report.f1 = parse(value)?,
            "mrr" => report.mrr = parse(value)?,
            "runtime_seconds" => report.runtime_seconds = parse(value)?,
            "peak_memory_bytes" => {
                report.peak_memory_bytes = value.parse::<u64>().map_err(|_| {
                    Error::parse(path, lineno + 1, format!("bad number '{value}'"))
                })?
            }
            _ => {
                if let Some(k) = key.strip_prefix("hits@") {
                    let k: usize = k.parse().map_err(|_| {
                        Error::parse(path, lineno + 1, format!("bad cutoff '{key}'"))
                    })?;
                    report.hits_at.insert(k, parse(value)?);
                }
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs(raw: &[(u32, u32)]) -> Vec<(EntityId, EntityId)> {
        raw.iter().map(|&(a, b)| (EntityId(a), EntityId(b))).collect()
    }

    #[test]
    fn half_right_prediction() {
        let pred = pairs(&[(0, 10), (1, 11)]);
        let gold = pairs(&[(0, 10), (1, 12)]);
        let (p, r, f1) = evaluate_real(&pred, &gold);
        assert_eq!(p, 0.5);
        assert_eq!(r, 0.5);
        assert_eq!(f1, 0.5);
    }

    #[test]
    fn exact_prediction_is_perfect() {
        let gold = pairs(&[(0, 1), (2, 3)]);
        let (p, r, f1) = evaluate_real(&gold, &gold);
        assert_eq!((p, r, f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn empty_prediction_against_gold() {
        let gold = pairs(&[(0, 1)]);
        let (p, r, f1) = evaluate_real(&[], &gold);
        assert_eq!((p, r, f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn empty_both_sides() {
        let (p, r, f1) = evaluate_real(&[], &[]);
        assert_eq!(p, 1.0);
        assert_eq!(r, 1.0);
        assert!(f1 > 0.0);
    }

    #[test]
    fn metrics_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.txt");
        let mut report = MetricsReport {
            precision: 0.5,
            recall: 0.25,
            f1: 1.0 / 3.0,
            mrr: 0.75,
            runtime_seconds: 1.5,
            peak_memory_bytes: 1024,
            ..Default::default()
        };
        report.hits_at.insert(1, 0.5);
        report.hits_at.insert(5, 0.9);
        write_metrics(
            &path,
            &report,
            &[("seed".into(), "42".into()), ("dim".into(), "32".into())],
        )
        .unwrap();
        let loaded = read_metrics(&path).unwrap();
        assert_eq!(loaded.precision, 0.5);
        assert_eq!(loaded.hits_at[&5], 0.9);
        assert_eq!(loaded.peak_memory_bytes, 1024);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("cfg.seed=42"));
        assert!(text.lines().all(|l| l.contains('=')));
    }
}
