//! Run orchestration: seed replicas, sweeps and target comparisons.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};

use emarl::stats::mean;
use emarl::trainer::{MetricsRecord, Trainer};

use crate::config::ExperimentConfig;
use crate::metrics::{self, MetricsRow};
use crate::plot::{Chart, Series};
use crate::summary::{self, SummaryRow};

pub const RESOLVED_FILE: &str = "resolved.toml";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const CURVE_FILE: &str = "curve.svg";
pub const PARTIAL_MARKER: &str = "PARTIAL";
pub const TARGETS_FILE: &str = "targets.csv";
pub const TARGETS_PLOT: &str = "targets.svg";
pub const OVERLAY_FILE: &str = "overlay.svg";

pub fn seed_file(seed: u64) -> String {
    format!("seed_{seed}.csv")
}

/// Files written by one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct RunArtifact {
    pub dir: PathBuf,
    pub seed_files: Vec<PathBuf>,
    pub summary_file: PathBuf,
    pub plot_file: PathBuf,
    pub runs: Vec<(u64, Vec<MetricsRecord>)>,
    pub summary: Vec<SummaryRow>,
}

/// Trains one seed to completion.
pub fn run_seed(config: &ExperimentConfig, seed: u64) -> Result<Vec<MetricsRecord>> {
    let mut trainer = Trainer::new(config.for_seed(seed)).map_err(|e| anyhow!("seed {seed}: {e}"))?;
    trainer.train(|_| {}).map_err(|e| anyhow!("seed {seed}: {e}"))
}

/// Runs every seed, at most `jobs` at a time. Results come back in seed order.
pub fn run_seeds(config: &ExperimentConfig, jobs: usize) -> Vec<(u64, Result<Vec<MetricsRecord>>)> {
    let jobs = jobs.max(1);
    let mut out = Vec::with_capacity(config.seeds.len());
    for chunk in config.seeds.chunks(jobs) {
        let results: Vec<_> = std::thread::scope(|s| {
            let handles: Vec<_> = chunk.iter().map(|&seed| s.spawn(move || (seed, run_seed(config, seed)))).collect();
            handles.into_iter().map(|h| h.join().expect("replica thread panicked")).collect()
        });
        out.extend(results);
    }
    out
}

pub fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("cannot write {}", path.display()))
}

fn learning_curve(title: &str, summary: &[SummaryRow]) -> Series {
    Series {
        label: title.into(),
        points: summary.iter().map(|r| (r.step as f64, r.return_median)).collect(),
        band: summary.iter().map(|r| (r.step as f64, r.return_p25, r.return_p75)).collect(),
    }
}

/// Trains every seed and writes the resolved config, one CSV per seed, the
/// summary CSV and the learning-curve plot into `out`. If any replica fails,
/// the completed files stay in place next to a `PARTIAL` marker and an error
/// is returned.
pub fn run_experiment(config: &ExperimentConfig, out: &Path, jobs: usize) -> Result<RunArtifact> {
    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    let marker = out.join(PARTIAL_MARKER);
    if marker.exists() {
        fs::remove_file(&marker)?;
    }
    write(&out.join(RESOLVED_FILE), &config.resolved_toml())?;
    let mut runs = Vec::new();
    let mut seed_files = Vec::new();
    let mut failures = Vec::new();
    for (seed, result) in run_seeds(config, jobs) {
        match result {
            Ok(records) => {
                let path = out.join(seed_file(seed));
                write(&path, &metrics::to_csv(&records))?;
                seed_files.push(path);
                runs.push((seed, records));
            }
            Err(e) => failures.push(format!("{e:#}")),
        }
    }
    if !failures.is_empty() {
        write(&marker, &format!("{}\n", failures.join("\n")))?;
        bail!("{} of {} replicas failed: {}", failures.len(), config.seeds.len(), failures.join("; "));
    }
    let rows: Vec<Vec<MetricsRow>> = runs.iter().map(|(_, r)| r.iter().map(MetricsRow::from).collect()).collect();
    let summary = summary::summarize(&rows, config.trainer.eval_interval)?;
    let summary_file = out.join(SUMMARY_FILE);
    write(&summary_file, &summary::to_csv(&summary))?;
    let label = format!("{}-{}", config.trainer.memory.as_str(), config.trainer.mixer.as_str());
    let chart = Chart {
        title: format!("{} on {}", label, config.trainer.env.name()),
        x_label: "environment steps".into(),
        y_label: "evaluation return (median, 25-75%)".into(),
        series: vec![learning_curve(&label, &summary)],
    };
    let plot_file = out.join(CURVE_FILE);
    write(&plot_file, &chart.to_svg())?;
    Ok(RunArtifact {
        dir: out.to_path_buf(),
        seed_files,
        summary_file,
        plot_file,
        runs,
        summary,
    })
}

/// Hyper-parameters that can be swept.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Lambda,
    TableCapacity,
    MSize,
    ProjectionDim,
}

impl SweepParam {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepParam::Lambda => "lambda",
            SweepParam::TableCapacity => "table_capacity",
            SweepParam::MSize => "m_size",
            SweepParam::ProjectionDim => "projection_dim",
        }
    }

    /// Grid documented for each parameter.
    pub fn reference_grid(&self) -> &'static [f64] {
        match self {
            SweepParam::Lambda => &[0.0, 0.01, 0.05, 0.1, 0.2, 0.5, 1.0],
            SweepParam::TableCapacity => &[1e4, 1e5, 1e6, 2e6],
            SweepParam::MSize => &[1000.0, 2500.0, 5000.0, 10000.0],
            SweepParam::ProjectionDim => &[1.0, 2.0, 4.0, 10.0],
        }
    }

    /// A copy of `base` with this parameter set to `value`.
    pub fn apply(&self, base: &ExperimentConfig, value: f64) -> Result<ExperimentConfig> {
        let mut c = base.clone();
        let count = || -> Result<usize> {
            if value < 1.0 || value.fract() != 0.0 || value > usize::MAX as f64 {
                bail!("{}: {value} is not a positive integer", self.as_str());
            }
            Ok(value as usize)
        };
        match self {
            SweepParam::Lambda => c.trainer.lambda = value,
            SweepParam::TableCapacity => c.trainer.table_capacity = count()?,
            SweepParam::MSize => c.trainer.mset_capacity = count()?,
            SweepParam::ProjectionDim => c.trainer.key_dim = count()?,
        }
        c.trainer.validate().map_err(|e| anyhow!("{}={value}: {e}", self.as_str()))?;
        Ok(c)
    }
}

impl FromStr for SweepParam {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "lambda" => SweepParam::Lambda,
            "table_capacity" => SweepParam::TableCapacity,
            "m_size" => SweepParam::MSize,
            "projection_dim" => SweepParam::ProjectionDim,
            other => bail!("unknown sweep parameter {other:?} (lambda, table_capacity, m_size, projection_dim)"),
        })
    }
}

pub fn parse_values(list: &str) -> Result<Vec<f64>> {
    let values: Vec<f64> = list
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|e| anyhow!("bad value {v:?}: {e}")))
        .collect::<Result<_>>()?;
    if values.is_empty() {
        bail!("no sweep values");
    }
    Ok(values)
}

/// One experiment per value under `out/<param>=<value>/`, plus an overlay of
/// the median curves.
pub fn sweep(base: &ExperimentConfig, param: SweepParam, values: &[f64], out: &Path, jobs: usize) -> Result<Vec<(f64, RunArtifact)>> {
    let configs: Vec<_> = values.iter().map(|&v| param.apply(base, v).map(|c| (v, c))).collect::<Result<_>>()?;
    fs::create_dir_all(out)?;
    let mut cells = Vec::new();
    for (value, config) in configs {
        let dir = out.join(format!("{}={value}", param.as_str()));
        cells.push((value, run_experiment(&config, &dir, jobs)?));
    }
    let chart = Chart {
        title: format!("sweep over {}", param.as_str()),
        x_label: "environment steps".into(),
        y_label: "median evaluation return".into(),
        series: cells
            .iter()
            .map(|(v, a)| Series::line(format!("{}={v}", param.as_str()), a.summary.iter().map(|r| (r.step as f64, r.return_median)).collect()))
            .collect(),
    };
    write(&out.join(OVERLAY_FILE), &chart.to_svg())?;
    Ok(cells)
}

/// Seed-averaged target statistics at one evaluation point.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetRow {
    pub step: u64,
    pub mean_y: Option<f64>,
    pub mean_e_s: Option<f64>,
    pub mean_e_su: Option<f64>,
}

pub const TARGETS_HEADER: &str = "step,mean_y,mean_E_s,mean_E_su";

fn seed_mean(values: Vec<Option<f64>>) -> Option<f64> {
    let present: Vec<f64> = values.into_iter().flatten().collect();
    (!present.is_empty()).then(|| mean(&present))
}

pub fn target_rows(runs: &[Vec<MetricsRecord>], eval_interval: u64) -> Vec<TargetRow> {
    let points = runs.iter().map(Vec::len).min().unwrap_or(0);
    (0..points)
        .map(|k| TargetRow {
            step: k as u64 * eval_interval,
            mean_y: seed_mean(runs.iter().map(|r| r[k].mean_y).collect()),
            mean_e_s: seed_mean(runs.iter().map(|r| r[k].mean_e_s).collect()),
            mean_e_su: seed_mean(runs.iter().map(|r| r[k].mean_e_su).collect()),
        })
        .collect()
}

pub fn targets_csv(rows: &[TargetRow]) -> String {
    let f = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
    let mut out = format!("{TARGETS_HEADER}\n");
    for r in rows {
        out += &format!("{},{},{},{}\n", r.step, f(r.mean_y), f(r.mean_e_s), f(r.mean_e_su));
    }
    out
}

/// Trains the configured seeds and reports the mean `y`, `E_s` and `E_su`
/// per evaluation point, as a CSV and a single-axis plot.
pub fn compare_targets(config: &ExperimentConfig, out: &Path, jobs: usize) -> Result<Vec<TargetRow>> {
    let artifact = run_experiment(config, out, jobs)?;
    let runs: Vec<_> = artifact.runs.into_iter().map(|(_, r)| r).collect();
    let rows = target_rows(&runs, config.trainer.eval_interval);
    write(&out.join(TARGETS_FILE), &targets_csv(&rows))?;
    let series = |label: &str, get: fn(&TargetRow) -> Option<f64>| {
        Series::line(label, rows.iter().map(|r| (r.step as f64, get(r).unwrap_or(f64::NAN))).collect())
    };
    let mut all = vec![series("y", |r| r.mean_y), series("E_s", |r| r.mean_e_s)];
    if rows.iter().any(|r| r.mean_e_su.is_some()) {
        all.push(series("E_su", |r| r.mean_e_su));
    }
    let chart = Chart {
        title: format!("targets for {}-{}", config.trainer.memory.as_str(), config.trainer.mixer.as_str()),
        x_label: "environment steps".into(),
        y_label: "mean target".into(),
        series: all,
    };
    write(&out.join(TARGETS_PLOT), &chart.to_svg())?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TINY: &str = r#"
seeds = [0, 1]
profile = "desk"
[env]
name = "climbing_game"
[algo]
mixer = "vdn"
memory = "sem"
[training]
batch_size = 4
buffer_capacity = 64
total_steps = 60
eval_interval = 20
eval_episodes = 2
agent_hidden = 8
critic_hidden = 8
mixing_embed = 4
epsilon_anneal_steps = 50
"#;

    #[test]
    fn sweep_params_apply() {
        let base = ExperimentConfig::from_str(TINY).unwrap();
        assert_eq!(SweepParam::Lambda.apply(&base, 0.5).unwrap().trainer.lambda, 0.5);
        assert_eq!(SweepParam::MSize.apply(&base, 2500.0).unwrap().trainer.mset_capacity, 2500);
        assert_eq!(SweepParam::ProjectionDim.apply(&base, 10.0).unwrap().trainer.key_dim, 10);
        assert!(SweepParam::Lambda.apply(&base, 1.5).is_err());
        assert!(SweepParam::TableCapacity.apply(&base, 2.5).is_err());
        assert_eq!("m_size".parse::<SweepParam>().unwrap(), SweepParam::MSize);
        assert!("mu".parse::<SweepParam>().is_err());
        assert_eq!(SweepParam::Lambda.reference_grid().len(), 7);
        assert_eq!(parse_values("0, 0.1,1").unwrap(), vec![0.0, 0.1, 1.0]);
        assert!(parse_values("a").is_err());
    }

    #[test]
    fn experiment_writes_all_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig::from_str(TINY).unwrap();
        let a = run_experiment(&cfg, dir.path(), 2).unwrap();
        assert_eq!(a.seed_files.len(), 2);
        assert_eq!(a.summary.len(), 4);
        for f in [RESOLVED_FILE, SUMMARY_FILE, CURVE_FILE, "seed_0.csv", "seed_1.csv"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        assert!(!dir.path().join(PARTIAL_MARKER).exists());
        let again = ExperimentConfig::load(&dir.path().join(RESOLVED_FILE)).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn targets_average_over_seeds() {
        let rec = |y: Option<f64>| MetricsRecord {
            step: 0,
            episode: 0,
            loss: None,
            mean_y: y,
            mean_e_s: Some(1.0),
            mean_e_su: None,
            eval_return_mean: 0.0,
            eval_success_rate: 0.0,
            table_size: 0,
            table_hits: 0,
            table_misses: 0,
            wall_ms: 0,
            max_hit_e_s: None,
            updates: 0,
        };
        let rows = target_rows(&[vec![rec(None), rec(Some(1.0))], vec![rec(None), rec(Some(3.0))]], 10);
        assert_eq!(rows[0].mean_y, None);
        assert_eq!(rows[1].mean_y, Some(2.0));
        assert_eq!(targets_csv(&rows), format!("{TARGETS_HEADER}\n0,,1,\n10,2,1,\n"));
    }
}
