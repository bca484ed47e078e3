//! Metrics CSV files.
//!
//! One row per evaluation point, columns in the fixed order of [`HEADER`].
//! Absent statistics are empty fields. UTF-8, LF line endings, header row
//! always present.

use anyhow::{anyhow, bail, Result};

use emarl::trainer::MetricsRecord;

pub const HEADER: &str =
    "step,episode,loss,mean_y,mean_E_s,mean_E_su,eval_return_mean,eval_success_rate,table_size,table_hits,table_misses,wall_ms";

/// A metrics row as read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub step: u64,
    pub episode: u64,
    pub loss: Option<f64>,
    pub mean_y: Option<f64>,
    pub mean_e_s: Option<f64>,
    pub mean_e_su: Option<f64>,
    pub eval_return_mean: f64,
    pub eval_success_rate: f64,
    pub table_size: usize,
    pub table_hits: u64,
    pub table_misses: u64,
    pub wall_ms: u64,
}

impl From<&MetricsRecord> for MetricsRow {
    fn from(r: &MetricsRecord) -> Self {
        Self {
            step: r.step,
            episode: r.episode,
            loss: r.loss,
            mean_y: r.mean_y,
            mean_e_s: r.mean_e_s,
            mean_e_su: r.mean_e_su,
            eval_return_mean: r.eval_return_mean,
            eval_success_rate: r.eval_success_rate,
            table_size: r.table_size,
            table_hits: r.table_hits,
            table_misses: r.table_misses,
            wall_ms: r.wall_ms,
        }
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

impl MetricsRow {
    pub fn to_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.step,
            self.episode,
            opt(self.loss),
            opt(self.mean_y),
            opt(self.mean_e_s),
            opt(self.mean_e_su),
            self.eval_return_mean,
            self.eval_success_rate,
            self.table_size,
            self.table_hits,
            self.table_misses,
            self.wall_ms
        )
    }

    pub fn parse_line(line: &str) -> Result<Self> {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 12 {
            bail!("expected 12 fields, found {}", f.len());
        }
        let int = |i: usize| f[i].parse::<u64>().map_err(|e| anyhow!("field {}: {e}", i + 1));
        let float = |i: usize| f[i].parse::<f64>().map_err(|e| anyhow!("field {}: {e}", i + 1));
        let maybe = |i: usize| if f[i].is_empty() { Ok(None) } else { float(i).map(Some) };
        Ok(Self {
            step: int(0)?,
            episode: int(1)?,
            loss: maybe(2)?,
            mean_y: maybe(3)?,
            mean_e_s: maybe(4)?,
            mean_e_su: maybe(5)?,
            eval_return_mean: float(6)?,
            eval_success_rate: float(7)?,
            table_size: int(8)? as usize,
            table_hits: int(9)?,
            table_misses: int(10)?,
            wall_ms: int(11)?,
        })
    }
}

pub fn to_csv(records: &[MetricsRecord]) -> String {
    let mut out = String::from(HEADER);
    out.push('\n');
    for r in records {
        out += &MetricsRow::from(r).to_line();
        out.push('\n');
    }
    out
}

pub fn parse_csv(text: &str) -> Result<Vec<MetricsRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == HEADER => {}
        _ => bail!("missing or unexpected header row"),
    }
    lines
        .enumerate()
        .map(|(i, l)| MetricsRow::parse_line(l).map_err(|e| anyhow!("line {}: {e}", i + 2)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(loss: Option<f64>) -> MetricsRecord {
        MetricsRecord {
            step: 2000,
            episode: 97,
            loss,
            mean_y: Some(1.5),
            mean_e_s: Some(-0.125),
            mean_e_su: None,
            eval_return_mean: 9.755830201983288,
            eval_success_rate: 0.96875,
            table_size: 31,
            table_hits: 12,
            table_misses: 4,
            wall_ms: 0,
            max_hit_e_s: Some(3.0),
            updates: 60,
        }
    }

    #[test]
    fn fixed_layout() {
        let csv = to_csv(&[record(None)]);
        assert_eq!(csv, format!("{HEADER}\n2000,97,,1.5,-0.125,,9.755830201983288,0.96875,31,12,4,0\n"));
    }

    #[test]
    fn round_trip_is_exact() {
        let records = [record(Some(0.1 + 0.2)), record(None)];
        let rows = parse_csv(&to_csv(&records)).unwrap();
        assert_eq!(rows, records.iter().map(MetricsRow::from).collect::<Vec<_>>());
    }

    #[test]
    fn bad_input() {
        assert!(parse_csv("step\n").is_err());
        let err = parse_csv(&format!("{HEADER}\n1,2,3\n")).unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
    }
}
