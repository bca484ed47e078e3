//! Episodic memory: keys from projected global states, a staging set `M`,
//! and max-return tables with LFU eviction.
//!
//! The state table (SEM) maps `key → best return`. The state-action family
//! (SAEM) keeps one member table per joint action, mapping `key → best
//! return` for that action. Both are filled from the same staging set.

mod key;
mod snapshot;
mod table;

pub use key::{KeyEncoder, MemoryKey, ProjectionMatrix, DEFAULT_KEY_DIM, DEFAULT_QUANTIZATION};
pub use snapshot::{Snapshot, SnapshotEntry, TableKind, SNAPSHOT_MAGIC, SNAPSHOT_VERSION};
pub use table::{Entry, LfuTable, MergeOutcome};

use std::collections::{BTreeMap, HashMap};

use crate::{Error, JointAction, Result};

pub const PAPER_TABLE_CAPACITY: usize = 1_000_000;
pub const PAPER_MSET_CAPACITY: usize = 5000;
pub const DESK_TABLE_CAPACITY: usize = 10_000;
pub const DESK_MSET_CAPACITY: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MemoryMode {
    None,
    Sem,
    Saem,
}

impl MemoryMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            MemoryMode::None => "none",
            MemoryMode::Sem => "sem",
            MemoryMode::Saem => "saem",
        }
    }
}

impl std::str::FromStr for MemoryMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(MemoryMode::None),
            "sem" => Ok(MemoryMode::Sem),
            "saem" => Ok(MemoryMode::Saem),
            other => Err(Error::Config(format!("unknown memory mode {other:?} (none, sem, saem)"))),
        }
    }
}

/// One staged observation of a realized return.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryItem {
    pub key: MemoryKey,
    pub joint_action: JointAction,
    pub ret: f64,
}

/// Fixed-size staging buffer `M`.
#[derive(Debug, Clone)]
pub struct ReturnSet {
    capacity: usize,
    items: Vec<MemoryItem>,
}

impl ReturnSet {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("staging set capacity must be positive".into()));
        }
        Ok(Self { capacity, items: Vec::with_capacity(capacity) })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[MemoryItem] {
        &self.items
    }

    /// Appends and reports whether the set is now full.
    pub fn push(&mut self, item: MemoryItem) -> bool {
        self.items.push(item);
        self.items.len() >= self.capacity
    }

    pub fn clear(&mut self) {
        self.items.clear();
    }
}

/// Instrumented counts for one flush.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FlushReport {
    pub tables_touched: usize,
    pub items: usize,
    pub inserts: usize,
    pub raised: usize,
    pub unchanged: usize,
    pub evictions: usize,
}

impl FlushReport {
    fn record<K>(&mut self, outcome: MergeOutcome<K>) {
        match outcome {
            MergeOutcome::Inserted { evicted } => {
                self.inserts += 1;
                self.evictions += usize::from(evicted.is_some());
            }
            MergeOutcome::Raised => self.raised += 1,
            MergeOutcome::Unchanged => self.unchanged += 1,
        }
    }

    pub fn accumulate(&mut self, other: &FlushReport) {
        self.tables_touched += other.tables_touched;
        self.items += other.items;
        self.inserts += other.inserts;
        self.raised += other.raised;
        self.unchanged += other.unchanged;
        self.evictions += other.evictions;
    }
}

/// Groups by `group` in first-appearance order, keeping the largest return.
fn max_by_group<G: Clone + Eq + std::hash::Hash>(items: &[MemoryItem], group: impl Fn(&MemoryItem) -> G) -> Vec<(G, f64)> {
    let mut index: HashMap<G, usize> = HashMap::new();
    let mut out: Vec<(G, f64)> = Vec::new();
    for item in items {
        let g = group(item);
        match index.get(&g) {
            Some(&i) => out[i].1 = out[i].1.max(item.ret),
            None => {
                index.insert(g.clone(), out.len());
                out.push((g, item.ret));
            }
        }
    }
    out
}

/// Single state-keyed table.
#[derive(Debug, Clone)]
pub struct SemTable {
    table: LfuTable<MemoryKey>,
}

impl SemTable {
    pub fn new(capacity: usize) -> Result<Self> {
        Ok(Self { table: LfuTable::new(capacity)? })
    }

    pub fn table(&self) -> &LfuTable<MemoryKey> {
        &self.table
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn table_count(&self) -> usize {
        1
    }

    pub fn lookup(&mut self, key: &MemoryKey) -> Option<f64> {
        self.table.lookup(key)
    }

    pub fn peek(&self, key: &MemoryKey) -> Option<f64> {
        self.table.peek(key).map(|e| e.value)
    }

    pub fn flush(&mut self, items: &[MemoryItem]) -> FlushReport {
        let mut report = FlushReport {
            items: items.len(),
            ..FlushReport::default()
        };
        if items.is_empty() {
            return report;
        }
        report.tables_touched = 1;
        for (key, best) in max_by_group(items, |i| i.key.clone()) {
            report.record(self.table.merge(key, best));
        }
        report
    }

    pub(crate) fn table_mut(&mut self) -> &mut LfuTable<MemoryKey> {
        &mut self.table
    }
}

/// One table per joint action, each with the same capacity.
#[derive(Debug, Clone)]
pub struct SaemTable {
    member_capacity: usize,
    members: BTreeMap<JointAction, LfuTable<MemoryKey>>,
    hits: u64,
    misses: u64,
}

impl SaemTable {
    pub fn new(member_capacity: usize) -> Result<Self> {
        LfuTable::<MemoryKey>::new(member_capacity)?;
        Ok(Self {
            member_capacity,
            members: BTreeMap::new(),
            hits: 0,
            misses: 0,
        })
    }

    pub fn member_capacity(&self) -> usize {
        self.member_capacity
    }

    pub fn table_count(&self) -> usize {
        self.members.len()
    }

    pub fn len(&self) -> usize {
        self.members.values().map(LfuTable::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn members(&self) -> &BTreeMap<JointAction, LfuTable<MemoryKey>> {
        &self.members
    }

    pub fn hits(&self) -> u64 {
        self.hits
    }

    /// Includes lookups for joint actions that have no member table yet.
    pub fn misses(&self) -> u64 {
        self.misses
    }

    pub fn lookup(&mut self, key: &MemoryKey, joint_action: &[usize]) -> Option<f64> {
        let found = self.members.get_mut(joint_action).and_then(|t| t.lookup(key));
        if found.is_some() {
            self.hits += 1;
        } else {
            self.misses += 1;
        }
        found
    }

    pub fn peek(&self, key: &MemoryKey, joint_action: &[usize]) -> Option<f64> {
        self.members.get(joint_action)?.peek(key).map(|e| e.value)
    }

    pub fn flush(&mut self, items: &[MemoryItem]) -> FlushReport {
        let mut report = FlushReport {
            items: items.len(),
            ..FlushReport::default()
        };
        let grouped = max_by_group(items, |i| (i.joint_action.clone(), i.key.clone()));
        let mut touched: Vec<&JointAction> = grouped.iter().map(|((u, _), _)| u).collect();
        touched.sort();
        touched.dedup();
        report.tables_touched = touched.len();
        for ((u, key), best) in grouped {
            let capacity = self.member_capacity;
            let member = self
                .members
                .entry(u)
                .or_insert_with(|| LfuTable::new(capacity).expect("capacity validated"));
            report.record(member.merge(key, best));
        }
        report
    }

    pub(crate) fn member_mut(&mut self, joint_action: JointAction) -> &mut LfuTable<MemoryKey> {
        let capacity = self.member_capacity;
        self.members
            .entry(joint_action)
            .or_insert_with(|| LfuTable::new(capacity).expect("capacity validated"))
    }
}

/// `r` on terminal steps, otherwise `r + γ·Q^S(s')` on a hit and
/// `r + γ·fallback` on a miss.
pub fn sem_target(reward: f64, next_value: Option<f64>, gamma: f64, terminal: bool, fallback: f64) -> f64 {
    if terminal {
        reward
    } else {
        reward + gamma * next_value.unwrap_or(fallback)
    }
}

/// Stored `Q^SA(s, u)` on a hit, the TD target `y` on a miss.
pub fn saem_target(stored: Option<f64>, y: f64) -> f64 {
    stored.unwrap_or(y)
}

/// Flush counts from one fill of `M`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FlushEvent {
    pub sem: FlushReport,
    pub saem: Option<FlushReport>,
}

/// Encoder, staging set and tables owned by one training run.
#[derive(Debug, Clone)]
pub struct EpisodicMemory {
    encoder: KeyEncoder,
    staging: ReturnSet,
    sem: SemTable,
    saem: Option<SaemTable>,
    flushes: usize,
}

impl EpisodicMemory {
    pub fn new(encoder: KeyEncoder, table_capacity: usize, mset_capacity: usize, with_saem: bool) -> Result<Self> {
        Ok(Self {
            encoder,
            staging: ReturnSet::new(mset_capacity)?,
            sem: SemTable::new(table_capacity)?,
            saem: if with_saem { Some(SaemTable::new(table_capacity)?) } else { None },
            flushes: 0,
        })
    }

    pub fn encoder(&self) -> &KeyEncoder {
        &self.encoder
    }

    pub fn sem(&self) -> &SemTable {
        &self.sem
    }

    pub fn sem_mut(&mut self) -> &mut SemTable {
        &mut self.sem
    }

    pub fn saem(&self) -> Option<&SaemTable> {
        self.saem.as_ref()
    }

    pub fn saem_mut(&mut self) -> Option<&mut SaemTable> {
        self.saem.as_mut()
    }

    pub fn staging(&self) -> &ReturnSet {
        &self.staging
    }

    pub fn flush_count(&self) -> usize {
        self.flushes
    }

    /// Stages an item; flushes into every table the moment `M` fills.
    pub fn push(&mut self, item: MemoryItem) -> Option<FlushEvent> {
        if self.staging.push(item) {
            Some(self.flush())
        } else {
            None
        }
    }

    /// Merges whatever is staged and empties `M`.
    pub fn flush(&mut self) -> FlushEvent {
        let items = self.staging.items();
        let event = FlushEvent {
            sem: self.sem.flush(items),
            saem: self.saem.as_mut().map(|t| t.flush(items)),
        };
        self.staging.clear();
        self.flushes += 1;
        event
    }
}
