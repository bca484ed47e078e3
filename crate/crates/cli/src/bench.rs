//! Space and time benchmark of the state-keyed table against the family of
//! per-joint-action tables.

use std::fmt::Write as _;
use std::time::Instant;

use anyhow::{bail, Result};
use rand::Rng as _;

use emarl::envs::decode_joint;
use emarl::memory::{MemoryItem, MemoryKey, SaemTable, SemTable, Snapshot, DEFAULT_QUANTIZATION};
use emarl::stream_rng;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub n_agents: usize,
    pub n_actions: usize,
    pub flushes: usize,
    pub mset: usize,
    /// Distinct state keys the workload draws from.
    pub keys: usize,
    pub key_dim: usize,
    /// Per-table capacity used for the projected storage figures.
    pub capacity: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            n_agents: 2,
            n_actions: 5,
            flushes: 10,
            mset: 500,
            keys: 1000,
            key_dim: 4,
            capacity: 1_000_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub config: BenchConfig,
    /// `|U|^n`, saturating.
    pub joint_action_bound: usize,
    pub sem_tables: usize,
    pub saem_tables: usize,
    /// Distinct joint actions staged across the whole workload.
    pub distinct_joint_actions: usize,
    /// Tables touched by each flush, as counted by the tables themselves.
    pub sem_touches: Vec<usize>,
    pub saem_touches: Vec<usize>,
    /// Distinct joint actions in each flush, counted independently.
    pub expected_saem_touches: Vec<usize>,
    pub sem_entries: usize,
    pub saem_entries: usize,
    pub sem_bytes_per_entry: f64,
    pub saem_bytes_per_entry: f64,
    /// Storage at full capacity: one table for SEM, `joint_action_bound`
    /// tables for SAEM.
    pub sem_projected_bytes: f64,
    pub saem_projected_bytes: f64,
    pub sem_flush_ns: Vec<u128>,
    pub saem_flush_ns: Vec<u128>,
}

impl BenchReport {
    pub fn sem_flush_total_ns(&self) -> u128 {
        self.sem_flush_ns.iter().sum()
    }

    pub fn saem_flush_total_ns(&self) -> u128 {
        self.saem_flush_ns.iter().sum()
    }
}

/// Items of flush `f`. Joint actions cycle through the whole joint space so
/// each flush holds `min(mset, |U|^n)` distinct ones.
pub fn workload(config: &BenchConfig, flush: usize, rng: &mut emarl::Rng) -> Vec<MemoryItem> {
    let bound = config.n_actions.saturating_pow(config.n_agents as u32);
    (0..config.mset)
        .map(|i| {
            let index = (flush * config.mset + i) % bound;
            let key_id = rng.random_range(0..config.keys) as i64;
            MemoryItem {
                key: MemoryKey::from_components((0..config.key_dim as i64).map(|d| key_id * 31 + d).collect()),
                joint_action: decode_joint(index, config.n_agents, config.n_actions),
                ret: rng.random_range(-1.0..10.0),
            }
        })
        .collect()
}

fn bytes_per_entry(full: &[u8], empty: &[u8], entries: usize) -> f64 {
    if entries == 0 {
        return 0.0;
    }
    (full.len() - empty.len()) as f64 / entries as f64
}

pub fn bench_memory(config: &BenchConfig) -> Result<BenchReport> {
    if config.n_agents == 0 || config.n_actions == 0 || config.mset == 0 || config.keys == 0 || config.key_dim == 0 {
        bail!("agents, actions, mset, keys and key_dim must be positive");
    }
    let bound = config.n_actions.saturating_pow(config.n_agents as u32);
    let mut sem = SemTable::new(config.capacity)?;
    let mut saem = SaemTable::new(config.capacity)?;
    let mut rng = stream_rng(config.seed, 0);
    let mut report = BenchReport {
        config: config.clone(),
        joint_action_bound: bound,
        sem_tables: 0,
        saem_tables: 0,
        distinct_joint_actions: 0,
        sem_touches: Vec::new(),
        saem_touches: Vec::new(),
        expected_saem_touches: Vec::new(),
        sem_entries: 0,
        saem_entries: 0,
        sem_bytes_per_entry: 0.0,
        saem_bytes_per_entry: 0.0,
        sem_projected_bytes: 0.0,
        saem_projected_bytes: 0.0,
        sem_flush_ns: Vec::new(),
        saem_flush_ns: Vec::new(),
    };
    let mut all_actions = std::collections::BTreeSet::new();
    for f in 0..config.flushes {
        let items = workload(config, f, &mut rng);
        let distinct: std::collections::BTreeSet<_> = items.iter().map(|i| i.joint_action.clone()).collect();
        report.expected_saem_touches.push(distinct.len());
        all_actions.extend(distinct);
        let t0 = Instant::now();
        let s = sem.flush(&items);
        report.sem_flush_ns.push(t0.elapsed().as_nanos());
        let t0 = Instant::now();
        let a = saem.flush(&items);
        report.saem_flush_ns.push(t0.elapsed().as_nanos());
        report.sem_touches.push(s.tables_touched);
        report.saem_touches.push(a.tables_touched);
    }
    report.distinct_joint_actions = all_actions.len();
    report.sem_tables = sem.table_count();
    report.saem_tables = saem.table_count();
    report.sem_entries = sem.len();
    report.saem_entries = saem.len();
    let q = DEFAULT_QUANTIZATION;
    let empty_sem = Snapshot::of_sem(&SemTable::new(1)?, q).to_bytes();
    let empty_saem = Snapshot::of_saem(&SaemTable::new(1)?, q).to_bytes();
    report.sem_bytes_per_entry = bytes_per_entry(&Snapshot::of_sem(&sem, q).to_bytes(), &empty_sem, sem.len());
    report.saem_bytes_per_entry = bytes_per_entry(&Snapshot::of_saem(&saem, q).to_bytes(), &empty_saem, saem.len());
    report.sem_projected_bytes = report.sem_bytes_per_entry * config.capacity as f64;
    report.saem_projected_bytes = report.saem_bytes_per_entry * config.capacity as f64 * bound as f64;
    Ok(report)
}

fn gib(bytes: f64) -> String {
    format!("{:.3} GiB", bytes / (1u64 << 30) as f64)
}

pub fn render(r: &BenchReport) -> String {
    let c = &r.config;
    let mut out = String::new();
    let _ = writeln!(out, "workload: n={} |U|={} flushes={} |M|={} keys={} D={} capacity={}", c.n_agents, c.n_actions, c.flushes, c.mset, c.keys, c.key_dim, c.capacity);
    let _ = writeln!(out, "joint-action bound |U|^n: {}", r.joint_action_bound);
    let _ = writeln!(out, "member tables: SEM {}  SAEM {}  (distinct joint actions seen {})", r.sem_tables, r.saem_tables, r.distinct_joint_actions);
    let _ = writeln!(
        out,
        "tables touched per flush: SEM {:?}  SAEM {:?}",
        r.sem_touches.iter().max().copied().unwrap_or(0),
        r.saem_touches.iter().max().copied().unwrap_or(0)
    );
    let _ = writeln!(out, "entries: SEM {}  SAEM {}", r.sem_entries, r.saem_entries);
    let _ = writeln!(out, "serialized bytes/entry: SEM {:.1}  SAEM {:.1}", r.sem_bytes_per_entry, r.saem_bytes_per_entry);
    let _ = writeln!(
        out,
        "projected storage at capacity: SEM {}  SAEM {} ({} tables)",
        gib(r.sem_projected_bytes),
        gib(r.saem_projected_bytes),
        r.joint_action_bound
    );
    let per = |ns: u128| ns as f64 / c.flushes.max(1) as f64 / 1e3;
    let _ = writeln!(
        out,
        "mean flush time: SEM {:.1} us  SAEM {:.1} us",
        per(r.sem_flush_total_ns()),
        per(r.saem_flush_total_ns())
    );
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn five_actions_allocate_all_joint_tables() {
        let r = bench_memory(&BenchConfig { flushes: 3, mset: 50, ..BenchConfig::default() }).unwrap();
        assert_eq!(r.joint_action_bound, 25);
        assert_eq!((r.sem_tables, r.saem_tables), (1, 25));
        assert!(r.sem_touches.iter().all(|&t| t == 1));
        assert_eq!(r.saem_touches, r.expected_saem_touches);
        assert_eq!(r.saem_touches, vec![25, 25, 25]);
    }

    #[test]
    fn bound_for_seventy_actions() {
        let r = bench_memory(&BenchConfig { n_actions: 70, flushes: 1, mset: 100, ..BenchConfig::default() }).unwrap();
        assert_eq!(r.joint_action_bound, 4900);
        assert_eq!(r.saem_tables, 100);
        assert!(render(&r).contains("joint-action bound |U|^n: 4900"));
    }

    #[test]
    fn entry_sizes_match_the_binary_layout() {
        let r = bench_memory(&BenchConfig { flushes: 1, mset: 40, ..BenchConfig::default() }).unwrap();
        // u32 action count + u32 key dim + 4 key components + value + count + insertion
        assert_eq!(r.sem_bytes_per_entry, (4 + 4 + 4 * 8 + 8 + 8 + 8) as f64);
        assert_eq!(r.saem_bytes_per_entry, r.sem_bytes_per_entry + 8.0);
    }

    #[test]
    fn rejects_empty_workload() {
        assert!(bench_memory(&BenchConfig { mset: 0, ..BenchConfig::default() }).is_err());
    }
}
