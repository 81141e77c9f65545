use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::policy::FeatureKind;

use super::runner::RegretTrace;

pub const SUMMARY_HEADER: &str = "policy,lambda,K,d,step,runs,mean_regret,stderr";

/// Experiment cell: every run sharing policy, lambda, K and d.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellKey {
    pub policy: FeatureKind,
    pub lambda: f64,
    pub k: usize,
    pub d: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummaryPoint {
    pub step: u64,
    pub runs: usize,
    pub mean: f64,
    /// Sample standard deviation over `sqrt(runs)`; `None` for a single run.
    pub stderr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub cell: CellKey,
    pub points: Vec<SummaryPoint>,
}

impl CellSummary {
    pub fn final_point(&self) -> Option<&SummaryPoint> {
        self.points.last()
    }
}

/// Mean and standard error of a sample; the error is `None` below two values.
pub fn mean_stderr(values: &[f64]) -> (f64, Option<f64>) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, None);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, Some((var / n).sqrt()))
}

/// Per-cell, per-logged-step mean cumulative regret and its standard error.
/// Cells appear in order of first occurrence.
pub fn aggregate(traces: &[RegretTrace]) -> Result<Vec<CellSummary>> {
    let mut cells: Vec<(CellKey, Vec<&RegretTrace>)> = Vec::new();
    for t in traces {
        let key = CellKey {
            policy: t.key.policy,
            lambda: t.key.lambda,
            k: t.key.k,
            d: t.key.d,
        };
        match cells.iter_mut().find(|(c, _)| *c == key) {
            Some((_, runs)) => runs.push(t),
            None => cells.push((key, vec![t])),
        }
    }
    cells
        .into_iter()
        .map(|(cell, runs)| {
            let steps: Vec<u64> = runs[0].points.iter().map(|p| p.step).collect();
            if runs
                .iter()
                .any(|r| r.points.iter().map(|p| p.step).ne(steps.iter().copied()))
            {
                return Err(Error::invalid(format!(
                    "runs of cell {} lambda={} K={} d={} are logged at different steps",
                    cell.policy, cell.lambda, cell.k, cell.d
                )));
            }
            let points = steps
                .iter()
                .enumerate()
                .map(|(i, &step)| {
                    let values: Vec<f64> = runs.iter().map(|r| r.points[i].cum_regret).collect();
                    let (mean, stderr) = mean_stderr(&values);
                    SummaryPoint {
                        step,
                        runs: runs.len(),
                        mean,
                        stderr,
                    }
                })
                .collect();
            Ok(CellSummary { cell, points })
        })
        .collect()
}

pub fn summary_to_csv(summary: &[CellSummary]) -> String {
    let mut out = format!("{SUMMARY_HEADER}\n");
    for s in summary {
        let c = &s.cell;
        for p in &s.points {
            let stderr = p.stderr.map(|e| e.to_string()).unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                c.policy.policy_name(),
                c.lambda,
                c.k,
                c.d,
                p.step,
                p.runs,
                p.mean,
                stderr
            )
            .expect("writing to a string cannot fail");
        }
    }
    out
}

pub fn parse_summary(text: &str, path: &Path) -> Result<Vec<CellSummary>> {
    let mut lines = text.lines();
    let err = |line: usize, message: &str| Error::Parse {
        path: path.to_owned(),
        line,
        message: message.to_owned(),
    };
    if lines.next().map(str::trim) != Some(SUMMARY_HEADER) {
        return Err(err(1, "not a summary table"));
    }
    let mut summary: Vec<CellSummary> = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line_no = idx + 2;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 8 {
            return Err(err(line_no, "expected 8 columns"));
        }
        let bad = |_| err(line_no, "malformed value");
        let cell = CellKey {
            policy: f[0].parse().map_err(|_| err(line_no, "unknown policy"))?,
            lambda: f[1].parse().map_err(bad)?,
            k: f[2].parse().map_err(|_| err(line_no, "malformed value"))?,
            d: f[3].parse().map_err(|_| err(line_no, "malformed value"))?,
        };
        let point = SummaryPoint {
            step: f[4].parse().map_err(|_| err(line_no, "malformed value"))?,
            runs: f[5].parse().map_err(|_| err(line_no, "malformed value"))?,
            mean: f[6].parse().map_err(bad)?,
            stderr: if f[7].is_empty() {
                None
            } else {
                Some(f[7].parse().map_err(bad)?)
            },
        };
        match summary.last_mut() {
            Some(s) if s.cell == cell => s.points.push(point),
            _ => summary.push(CellSummary {
                cell,
                points: vec![point],
            }),
        }
    }
    Ok(summary)
}
