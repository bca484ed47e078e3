use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use emarl_cli::metrics::parse_csv;
use emarl_cli::summary;

const TINY: &str = r#"
seeds = [0, 1, 2, 3, 4]
profile = "desk"

[env]
name = "climbing_game"

[algo]
mixer = "vdn"
memory = "sem"

[training]
batch_size = 4
buffer_capacity = 64
total_steps = 120
eval_interval = 30
eval_episodes = 4
agent_hidden = 8
epsilon_anneal_steps = 100
"#;

fn emarl(args: &[&str], env: &[(&str, &Path)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_emarl"));
    cmd.args(args).env_remove("EMARL_OUT_DIR");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Linear-interpolation quantile, written independently of the library.
fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let h = (v.len() - 1) as f64 * q;
    let (lo, hi) = (h.floor() as usize, h.ceil() as usize);
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

#[test]
fn train_writes_one_csv_per_seed_and_a_correct_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "tiny.toml", TINY);
    let out = dir.path().join("out");
    let o = emarl(&["train", "--config", s(&cfg), "--out", s(&out)], &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let runs: Vec<_> = (0..5)
        .map(|k| parse_csv(&std::fs::read_to_string(out.join(format!("seed_{k}.csv"))).unwrap()).unwrap())
        .collect();
    assert!(runs.iter().all(|r| r.len() == 5));
    let sum = summary::parse_csv(&std::fs::read_to_string(out.join("summary.csv")).unwrap()).unwrap();
    assert_eq!(sum.len(), 5);
    for (k, row) in sum.iter().enumerate() {
        let ret: Vec<f64> = runs.iter().map(|r| r[k].eval_return_mean).collect();
        let succ: Vec<f64> = runs.iter().map(|r| r[k].eval_success_rate).collect();
        assert_eq!(row.step, 30 * k as u64);
        assert_eq!(row.return_median, quantile(&ret, 0.5));
        assert_eq!(row.return_p25, quantile(&ret, 0.25));
        assert_eq!(row.return_p75, quantile(&ret, 0.75));
        assert_eq!(row.success_median, quantile(&succ, 0.5));
    }
    let svg = std::fs::read_to_string(out.join("curve.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
    let csv = std::fs::read(out.join("seed_0.csv")).unwrap();
    assert!(!csv.contains(&b'\r'));
}

#[test]
fn invalid_config_fails_with_line_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.toml", "[env]\nname = \"climbing_game\"\n[algo]\nmixer = \"vdn\"\nlambda = 1.5\n");
    let o = emarl(&["train", "--config", s(&cfg), "--out", s(&dir.path().join("o"))], &[]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 5") && err.contains("algo.lambda") && err.contains("[0, 1]"), "{err}");
    assert!(!dir.path().join("o").exists());

    let o = emarl(&["train", "--config", s(&dir.path().join("missing.toml"))], &[]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("cannot read config"));
}

#[test]
fn failed_replica_leaves_a_partial_marker() {
    let dir = tempfile::tempdir().unwrap();
    let body = TINY.replace("batch_size = 4", "batch_size = 4\nlearning_rate = 1e300");
    let cfg = write_config(dir.path(), "diverge.toml", &body);
    let out = dir.path().join("out");
    let o = emarl(&["train", "--config", s(&cfg), "--out", s(&out)], &[]);
    assert!(!o.status.success());
    assert!(out.join("PARTIAL").exists());
    assert!(out.join("resolved.toml").exists());
}

#[test]
fn output_root_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "rooted.toml", &TINY.replace("[0, 1, 2, 3, 4]", "[7]"));
    let root = dir.path().join("root");
    let o = emarl(&["train", "--config", s(&cfg)], &[("EMARL_OUT_DIR", &root)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(root.join("rooted").join("seed_7.csv").exists());
}

#[test]
fn single_value_sweep_matches_train() {
    let dir = tempfile::tempdir().unwrap();
    let body = TINY.replace("[0, 1, 2, 3, 4]", "[3]");
    let cfg = write_config(dir.path(), "one.toml", &body);
    let train_out = dir.path().join("train");
    assert!(emarl(&["train", "--config", s(&cfg), "--out", s(&train_out)], &[]).status.success());
    let sweep_out = dir.path().join("sweep");
    let o = emarl(&["sweep", "--config", s(&cfg), "--param", "lambda", "--values", "0.1", "--out", s(&sweep_out)], &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let cell = sweep_out.join("sweep_lambda").join("lambda=0.1");
    assert_eq!(std::fs::read(cell.join("seed_3.csv")).unwrap(), std::fs::read(train_out.join("seed_3.csv")).unwrap());
    assert!(sweep_out.join("sweep_lambda").join("overlay.svg").exists());
}

#[test]
fn sweep_grid_produces_one_artifact_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "grid.toml", &TINY.replace("[0, 1, 2, 3, 4]", "[0]"));
    let out = dir.path().join("o");
    let o = emarl(&["sweep", "--config", s(&cfg), "--param", "projection_dim", "--out", s(&out)], &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let cells = std::fs::read_dir(out.join("sweep_projection_dim")).unwrap().filter(|e| e.as_ref().unwrap().path().is_dir()).count();
    assert_eq!(cells, 4);
    let o = emarl(&["sweep", "--config", s(&cfg), "--param", "gamma", "--values", "0.5"], &[]);
    assert!(!o.status.success());
}

#[test]
fn compare_targets_logs_all_three_targets() {
    let dir = tempfile::tempdir().unwrap();
    let body = r#"
seeds = [0, 1]
profile = "desk"
[env]
name = "lever"
[algo]
mixer = "vdn"
memory = "saem"
[training]
batch_size = 4
total_steps = 600
eval_interval = 150
eval_episodes = 4
agent_hidden = 8
"#;
    let cfg = write_config(dir.path(), "t.toml", body);
    let out = dir.path().join("o");
    let o = emarl(&["compare-targets", "--config", s(&cfg), "--out", s(&out)], &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(out.join("targets").join("targets.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("step,mean_y,mean_E_s,mean_E_su"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 5);
    assert!(rows[0][1..].iter().all(|f| f.is_empty()));
    for r in &rows[1..] {
        assert!(r[1..].iter().all(|f| !f.is_empty()), "{r:?}");
        // single-pull reward of 1 bounds every realised return
        assert!(r[2].parse::<f64>().unwrap() <= 1.0 + 1e-9);
    }
    assert!(out.join("targets").join("targets.svg").exists());
}

#[test]
fn bench_memory_reports_table_counts() {
    let o = emarl(&["bench-memory", "--agents", "2", "--actions", "70", "--flushes", "2", "--mset", "4900", "--capacity", "1000"], &[]);
    assert!(o.status.success());
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("joint-action bound |U|^n: 4900"), "{text}");
    assert!(text.contains("member tables: SEM 1  SAEM 4900"), "{text}");
}

#[test]
fn oracle_prints_the_climbing_optimum() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", "[env]\nname = \"climbing_game\"\n");
    let o = emarl(&["oracle", "--config", s(&cfg)], &[]);
    assert!(o.status.success());
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("optimal_discounted_return: 11"), "{text}");
    assert!(text.contains("[0, 0]"), "{text}");
}
