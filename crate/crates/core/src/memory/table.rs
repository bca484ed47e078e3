use std::collections::{BTreeMap, HashMap};
use std::hash::Hash;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Entry {
    pub value: f64,
    pub access_count: u64,
    pub insertion_index: u64,
}

/// Result of merging one candidate return into a table.
#[derive(Debug, Clone, PartialEq)]
pub enum MergeOutcome<K> {
    Inserted { evicted: Option<K> },
    Raised,
    Unchanged,
}

/// Capacity-bounded map that keeps the highest value ever merged per key and
/// evicts the least-frequently-read entry (oldest insertion on ties).
#[derive(Debug, Clone)]
pub struct LfuTable<K> {
    capacity: usize,
    entries: HashMap<K, Entry>,
    by_frequency: BTreeMap<(u64, u64), K>,
    next_insertion: u64,
    hits: u64,
    misses: u64,
}

impl<K: Clone + Eq + Hash> LfuTable<K> {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("table capacity must be positive".into()));
        }
        Ok(Self {
            capacity,
            entries: HashMap::new(),
            by_frequency: BTreeMap::new(),
            next_insertion: 0,
            hits: 0,
            misses: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn hits(&self) -> u64 {
        self.hits
    }

    pub fn misses(&self) -> u64 {
        self.misses
    }

    /// Read without counting as an access.
    pub fn peek(&self, key: &K) -> Option<&Entry> {
        self.entries.get(key)
    }

    pub fn contains(&self, key: &K) -> bool {
        self.entries.contains_key(key)
    }

    /// Read that counts as an access on a hit.
    pub fn lookup(&mut self, key: &K) -> Option<f64> {
        match self.entries.get_mut(key) {
            Some(e) => {
                self.by_frequency.remove(&(e.access_count, e.insertion_index));
                e.access_count += 1;
                self.by_frequency.insert((e.access_count, e.insertion_index), key.clone());
                self.hits += 1;
                Some(e.value)
            }
            None => {
                self.misses += 1;
                None
            }
        }
    }

    /// Removes the entry with the smallest access count, oldest first on ties.
    pub fn evict_lfu(&mut self) -> Option<K> {
        let (_, key) = self.by_frequency.pop_first()?;
        self.entries.remove(&key);
        Some(key)
    }

    /// `value = max(old, candidate)`, inserting (and evicting if full) when absent.
    pub fn merge(&mut self, key: K, candidate: f64) -> MergeOutcome<K> {
        if let Some(e) = self.entries.get_mut(&key) {
            return if candidate > e.value {
                e.value = candidate;
                MergeOutcome::Raised
            } else {
                MergeOutcome::Unchanged
            };
        }
        let evicted = if self.entries.len() >= self.capacity { self.evict_lfu() } else { None };
        self.insert_entry(
            key,
            Entry {
                value: candidate,
                access_count: 0,
                insertion_index: self.next_insertion,
            },
        );
        self.next_insertion += 1;
        MergeOutcome::Inserted { evicted }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&K, &Entry)> {
        self.entries.iter()
    }

    /// Entries in insertion order.
    pub fn ordered(&self) -> Vec<(&K, &Entry)> {
        let mut v: Vec<_> = self.entries.iter().collect();
        v.sort_by_key(|(_, e)| e.insertion_index);
        v
    }

    /// Restores an entry verbatim (snapshot import).
    pub(crate) fn restore(&mut self, key: K, entry: Entry) -> Result<()> {
        if self.entries.len() >= self.capacity || self.entries.contains_key(&key) {
            return Err(Error::Config("snapshot exceeds capacity or repeats a key".into()));
        }
        if self.by_frequency.contains_key(&(entry.access_count, entry.insertion_index)) {
            return Err(Error::Config("snapshot repeats an insertion index".into()));
        }
        self.next_insertion = self.next_insertion.max(entry.insertion_index + 1);
        self.insert_entry(key, entry);
        Ok(())
    }

    fn insert_entry(&mut self, key: K, entry: Entry) {
        self.by_frequency.insert((entry.access_count, entry.insertion_index), key.clone());
        self.entries.insert(key, entry);
    }
}
