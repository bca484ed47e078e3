//! Cross-seed summaries: median and 25/75 percentiles per evaluation point.

use anyhow::{bail, Result};

use emarl::stats::{median, percentile};

use crate::metrics::MetricsRow;

pub const HEADER: &str =
    "step,seeds,return_median,return_p25,return_p75,success_median,success_p25,success_p75";

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    /// Nominal step `k * eval_interval` of the k-th evaluation point.
    pub step: u64,
    pub seeds: usize,
    pub return_median: f64,
    pub return_p25: f64,
    pub return_p75: f64,
    pub success_median: f64,
    pub success_p25: f64,
    pub success_p75: f64,
}

/// Aligns runs by evaluation index; every run must have the same number of
/// points.
pub fn summarize(runs: &[Vec<MetricsRow>], eval_interval: u64) -> Result<Vec<SummaryRow>> {
    let Some(first) = runs.first() else { bail!("no runs to summarize") };
    if runs.iter().any(|r| r.len() != first.len()) {
        bail!("runs disagree on the number of evaluation points");
    }
    Ok((0..first.len())
        .map(|k| {
            let ret: Vec<f64> = runs.iter().map(|r| r[k].eval_return_mean).collect();
            let succ: Vec<f64> = runs.iter().map(|r| r[k].eval_success_rate).collect();
            SummaryRow {
                step: k as u64 * eval_interval,
                seeds: runs.len(),
                return_median: median(&ret),
                return_p25: percentile(&ret, 0.25),
                return_p75: percentile(&ret, 0.75),
                success_median: median(&succ),
                success_p25: percentile(&succ, 0.25),
                success_p75: percentile(&succ, 0.75),
            }
        })
        .collect())
}

pub fn to_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from(HEADER);
    out.push('\n');
    for r in rows {
        out += &format!(
            "{},{},{},{},{},{},{},{}\n",
            r.step, r.seeds, r.return_median, r.return_p25, r.return_p75, r.success_median, r.success_p25, r.success_p75
        );
    }
    out
}

pub fn parse_csv(text: &str) -> Result<Vec<SummaryRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(HEADER) {
        bail!("missing or unexpected summary header");
    }
    lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 8 {
                bail!("expected 8 fields, found {}", f.len());
            }
            let x = |i: usize| -> Result<f64> { Ok(f[i].parse()?) };
            Ok(SummaryRow {
                step: f[0].parse()?,
                seeds: f[1].parse()?,
                return_median: x(2)?,
                return_p25: x(3)?,
                return_p75: x(4)?,
                success_median: x(5)?,
                success_p25: x(6)?,
                success_p75: x(7)?,
            })
        })
        .collect()
}
