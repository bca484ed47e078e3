//! Flat table dumps.
//!
//! Binary layout, all integers and floats little-endian:
//!
//! ```text
//! magic    "EMTB"
//! version  u32 (= 1)
//! kind     u8  (0 = state table, 1 = state-action family)
//! quant    f64 quantization step of the keys
//! capacity u64 per-table capacity
//! count    u64 number of entries
//! count × { n u32, n × u32 joint action (n = 0 for the state table),
//!           d u32, d × i64 key, f64 value, u64 access_count, u64 insertion_index }
//! ```
//!
//! The text form has a header line
//! `emarl-table v1 kind=<sem|saem> capacity=<c> quantization=<q>` followed by
//! one tab-separated line per entry:
//! `joint_action  key  value  access_count  insertion_index`, where lists are
//! comma-separated and `-` stands for "no joint action".

use super::{Entry, LfuTable, MemoryKey, SaemTable, SemTable};
use crate::{Error, JointAction, Result};

pub const SNAPSHOT_MAGIC: &[u8; 4] = b"EMTB";
pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableKind {
    Sem,
    Saem,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotEntry {
    pub joint_action: Option<JointAction>,
    pub key: Vec<i64>,
    pub value: f64,
    pub access_count: u64,
    pub insertion_index: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub kind: TableKind,
    pub quantization: f64,
    pub capacity: usize,
    pub entries: Vec<SnapshotEntry>,
}

fn entries_of<'a>(table: &'a LfuTable<MemoryKey>, joint_action: Option<&JointAction>) -> impl Iterator<Item = SnapshotEntry> + 'a {
    let u = joint_action.cloned();
    table.ordered().into_iter().map(move |(k, e)| SnapshotEntry {
        joint_action: u.clone(),
        key: k.components().to_vec(),
        value: e.value,
        access_count: e.access_count,
        insertion_index: e.insertion_index,
    })
}

fn entry_of(e: &SnapshotEntry) -> (MemoryKey, Entry) {
    (
        MemoryKey::from_components(e.key.clone()),
        Entry {
            value: e.value,
            access_count: e.access_count,
            insertion_index: e.insertion_index,
        },
    )
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let end = self.pos + N;
        let slice = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| Error::Config(format!("snapshot truncated at byte {}", self.pos)))?;
        self.pos = end;
        Ok(slice.try_into().expect("length checked"))
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take::<1>()?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take()?))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take()?))
    }
    fn i64(&mut self) -> Result<i64> {
        Ok(i64::from_le_bytes(self.take()?))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take()?))
    }
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn split<T: std::str::FromStr>(s: &str, line: usize) -> Result<Vec<T>> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|p| p.parse().map_err(|_| Error::Config(format!("line {line}: bad list item {p:?}"))))
        .collect()
}

impl Snapshot {
    pub fn of_sem(table: &SemTable, quantization: f64) -> Self {
        Self {
            kind: TableKind::Sem,
            quantization,
            capacity: table.table().capacity(),
            entries: entries_of(table.table(), None).collect(),
        }
    }

    pub fn of_saem(table: &SaemTable, quantization: f64) -> Self {
        Self {
            kind: TableKind::Saem,
            quantization,
            capacity: table.member_capacity(),
            entries: table.members().iter().flat_map(|(u, t)| entries_of(t, Some(u))).collect(),
        }
    }

    pub fn to_sem(&self) -> Result<SemTable> {
        if self.kind != TableKind::Sem {
            return Err(Error::Config("snapshot holds a state-action family".into()));
        }
        let mut t = SemTable::new(self.capacity)?;
        for e in &self.entries {
            let (k, v) = entry_of(e);
            t.table_mut().restore(k, v)?;
        }
        Ok(t)
    }

    pub fn to_saem(&self) -> Result<SaemTable> {
        if self.kind != TableKind::Saem {
            return Err(Error::Config("snapshot holds a state table".into()));
        }
        let mut t = SaemTable::new(self.capacity)?;
        for e in &self.entries {
            let u = e
                .joint_action
                .clone()
                .ok_or_else(|| Error::Config("state-action entry without joint action".into()))?;
            let (k, v) = entry_of(e);
            t.member_mut(u).restore(k, v)?;
        }
        Ok(t)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(SNAPSHOT_MAGIC);
        out.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
        out.push(match self.kind {
            TableKind::Sem => 0,
            TableKind::Saem => 1,
        });
        out.extend_from_slice(&self.quantization.to_le_bytes());
        out.extend_from_slice(&(self.capacity as u64).to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u64).to_le_bytes());
        for e in &self.entries {
            let u = e.joint_action.as_deref().unwrap_or(&[]);
            out.extend_from_slice(&(u.len() as u32).to_le_bytes());
            for &a in u {
                out.extend_from_slice(&(a as u32).to_le_bytes());
            }
            out.extend_from_slice(&(e.key.len() as u32).to_le_bytes());
            for &c in &e.key {
                out.extend_from_slice(&c.to_le_bytes());
            }
            out.extend_from_slice(&e.value.to_le_bytes());
            out.extend_from_slice(&e.access_count.to_le_bytes());
            out.extend_from_slice(&e.insertion_index.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if &r.take::<4>()? != SNAPSHOT_MAGIC {
            return Err(Error::Config("not a table snapshot".into()));
        }
        let version = r.u32()?;
        if version != SNAPSHOT_VERSION {
            return Err(Error::Config(format!("unsupported snapshot version {version}")));
        }
        let kind = match r.u8()? {
            0 => TableKind::Sem,
            1 => TableKind::Saem,
            k => return Err(Error::Config(format!("unknown table kind {k}"))),
        };
        let quantization = r.f64()?;
        let capacity = r.u64()? as usize;
        let count = r.u64()?;
        let mut entries = Vec::new();
        for _ in 0..count {
            let n = r.u32()?;
            let u = (0..n).map(|_| r.u32().map(|a| a as usize)).collect::<Result<Vec<_>>>()?;
            let d = r.u32()?;
            let key = (0..d).map(|_| r.i64()).collect::<Result<Vec<_>>>()?;
            entries.push(SnapshotEntry {
                joint_action: (kind == TableKind::Saem).then_some(u),
                key,
                value: r.f64()?,
                access_count: r.u64()?,
                insertion_index: r.u64()?,
            });
        }
        if r.pos != bytes.len() {
            return Err(Error::Config("trailing bytes after snapshot".into()));
        }
        Ok(Self { kind, quantization, capacity, entries })
    }

    pub fn to_text(&self) -> String {
        let kind = match self.kind {
            TableKind::Sem => "sem",
            TableKind::Saem => "saem",
        };
        let mut out = format!(
            "emarl-table v{SNAPSHOT_VERSION} kind={kind} capacity={} quantization={}\n",
            self.capacity, self.quantization
        );
        for e in &self.entries {
            let u = e.joint_action.as_deref().map_or_else(|| "-".to_string(), join);
            out.push_str(&format!(
                "{u}\t{}\t{}\t{}\t{}\n",
                join(&e.key),
                e.value,
                e.access_count,
                e.insertion_index
            ));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Config("empty snapshot".into()))?;
        let mut fields = header.split_whitespace();
        if fields.next() != Some("emarl-table") || fields.next() != Some("v1") {
            return Err(Error::Config(format!("line 1: unrecognised header {header:?}")));
        }
        let (mut kind, mut capacity, mut quantization) = (None, None, None);
        for f in fields {
            match f.split_once('=') {
                Some(("kind", "sem")) => kind = Some(TableKind::Sem),
                Some(("kind", "saem")) => kind = Some(TableKind::Saem),
                Some(("capacity", v)) => capacity = v.parse().ok(),
                Some(("quantization", v)) => quantization = v.parse().ok(),
                _ => return Err(Error::Config(format!("line 1: bad header field {f:?}"))),
            }
        }
        let (Some(kind), Some(capacity), Some(quantization)) = (kind, capacity, quantization) else {
            return Err(Error::Config("line 1: header needs kind, capacity and quantization".into()));
        };
        let mut entries = Vec::new();
        for (i, line) in lines.enumerate() {
            let n = i + 2;
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 5 {
                return Err(Error::Config(format!("line {n}: expected 5 tab-separated fields")));
            }
            let bad = |what: &str| Error::Config(format!("line {n}: bad {what}"));
            entries.push(SnapshotEntry {
                joint_action: if cols[0] == "-" { None } else { Some(split(cols[0], n)?) },
                key: split(cols[1], n)?,
                value: cols[2].parse().map_err(|_| bad("value"))?,
                access_count: cols[3].parse().map_err(|_| bad("access count"))?,
                insertion_index: cols[4].parse().map_err(|_| bad("insertion index"))?,
            });
        }
        Ok(Self { kind, quantization, capacity, entries })
    }
}
