//! Finalized word representations and the TSR1 file format.
//!
//! ```text
//! "TSR1" version:u16 dim:u16 table entry*
//! entry := word_ref:u32 scope_ref:u32 count:u64 f32[dim]
//! ```
//!
//! The string table has the same layout as in CTE1 streams.

use std::collections::{BTreeMap, HashMap};
use std::io::{ErrorKind, Read, Write};

use super::{AggregateError, GLOBAL_SCOPE};
use crate::embedding_io::{decode_string_table, encode_string_table};
use crate::embedding_io::StreamError;

pub const STORE_MAGIC: [u8; 4] = *b"TSR1";
pub const STORE_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Representation {
    pub vector: Vec<f32>,
    pub count: u64,
}

/// Mean representations for every retained word in one scope.
#[derive(Debug, Clone, PartialEq)]
pub struct RepresentationStore {
    pub scope: String,
    pub dim: usize,
    pub entries: BTreeMap<String, Representation>,
}

impl RepresentationStore {
    pub fn new(scope: impl Into<String>, dim: usize) -> Self {
        Self { scope: scope.into(), dim, entries: BTreeMap::new() }
    }

    pub fn get(&self, word: &str) -> Option<&Representation> {
        self.entries.get(word)
    }

    pub fn is_global(&self) -> bool {
        self.scope == GLOBAL_SCOPE
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// All scopes produced by one aggregation run, periods first in stream
/// order, then GLOBAL.
#[derive(Debug, Clone, PartialEq)]
pub struct StoreSet {
    pub dim: usize,
    pub stores: Vec<RepresentationStore>,
}

impl StoreSet {
    pub fn new(dim: usize) -> Self {
        Self { dim, stores: Vec::new() }
    }

    pub fn get(&self, scope: &str) -> Option<&RepresentationStore> {
        self.stores.iter().find(|s| s.scope == scope)
    }

    pub fn global(&self) -> Option<&RepresentationStore> {
        self.get(GLOBAL_SCOPE)
    }

    pub fn period_labels(&self) -> impl Iterator<Item = &str> {
        self.stores.iter().filter(|s| !s.is_global()).map(|s| s.scope.as_str())
    }

    /// Adds the scopes of `other`; a scope present in both is an error.
    pub fn extend(&mut self, other: StoreSet) -> Result<(), AggregateError> {
        if other.stores.is_empty() {
            return Ok(());
        }
        if other.dim != self.dim {
            return Err(AggregateError::DimMismatch { expected: self.dim, found: other.dim });
        }
        for store in other.stores {
            if self.get(&store.scope).is_some() {
                return Err(AggregateError::DuplicateScope(store.scope));
            }
            self.stores.push(store);
        }
        // keep GLOBAL last
        self.stores.sort_by_key(|s| s.is_global());
        Ok(())
    }
}

pub fn write_store_set<W: Write>(set: &StoreSet, mut sink: W) -> Result<u64, AggregateError> {
    if set.dim == 0 || set.dim > u16::MAX as usize {
        return Err(AggregateError::Format(format!("unsupported dim {}", set.dim)));
    }
    let mut table: Vec<String> = Vec::new();
    let mut index: HashMap<String, u32> = HashMap::new();
    let mut intern = |s: &str, table: &mut Vec<String>| -> u32 {
        *index.entry(s.to_string()).or_insert_with(|| {
            table.push(s.to_string());
            (table.len() - 1) as u32
        })
    };
    let mut refs = Vec::new();
    for store in &set.stores {
        intern(&store.scope, &mut table);
    }
    for store in &set.stores {
        let scope_ref = intern(&store.scope, &mut table);
        for (word, rep) in &store.entries {
            if rep.vector.len() != set.dim {
                return Err(AggregateError::DimMismatch { expected: set.dim, found: rep.vector.len() });
            }
            refs.push((intern(word, &mut table), scope_ref, rep));
        }
    }
    if let Some(long) = table.iter().find(|s| s.len() > u16::MAX as usize) {
        return Err(AggregateError::Format(format!("string of {} bytes too long", long.len())));
    }

    let mut buf = Vec::with_capacity(64 + refs.len() * (16 + 4 * set.dim));
    buf.extend_from_slice(&STORE_MAGIC);
    buf.extend_from_slice(&STORE_VERSION.to_le_bytes());
    buf.extend_from_slice(&(set.dim as u16).to_le_bytes());
    encode_string_table(&mut buf, &table);
    for (word_ref, scope_ref, rep) in refs {
        buf.extend_from_slice(&word_ref.to_le_bytes());
        buf.extend_from_slice(&scope_ref.to_le_bytes());
        buf.extend_from_slice(&rep.count.to_le_bytes());
        for x in &rep.vector {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    sink.write_all(&buf)?;
    sink.flush()?;
    Ok(buf.len() as u64)
}

fn read_full<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<usize, std::io::Error> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}

pub fn read_store_set<R: Read>(mut source: R) -> Result<StoreSet, AggregateError> {
    let mut head = [0u8; 8];
    if read_full(&mut source, &mut head)? < head.len() {
        return Err(AggregateError::Format("truncated TSR1 header".into()));
    }
    if head[..4] != STORE_MAGIC {
        return Err(AggregateError::Format(format!("bad magic {:?}, expected TSR1", &head[..4])));
    }
    let version = u16::from_le_bytes([head[4], head[5]]);
    if version != STORE_VERSION {
        return Err(AggregateError::Format(format!("unsupported TSR1 version {version}")));
    }
    let dim = u16::from_le_bytes([head[6], head[7]]) as usize;
    if dim == 0 {
        return Err(AggregateError::Format("dim must be at least 1".into()));
    }
    let table = decode_string_table(&mut source).map_err(|e| match e {
        StreamError::Truncated { .. } => AggregateError::Format("truncated TSR1 string table".into()),
        other => AggregateError::Format(other.to_string()),
    })?;

    let mut set = StoreSet::new(dim);
    let mut entry = vec![0u8; 16 + 4 * dim];
    let mut ordinal = 0usize;
    loop {
        let n = read_full(&mut source, &mut entry)?;
        if n == 0 {
            break;
        }
        if n < entry.len() {
            return Err(AggregateError::Format(format!("truncated TSR1 entry {ordinal}")));
        }
        let u = |i: usize| u32::from_le_bytes(entry[i..i + 4].try_into().unwrap());
        let lookup = |r: u32| {
            table.get(r as usize).ok_or_else(|| {
                AggregateError::Format(format!("entry {ordinal}: string ref {r} out of range"))
            })
        };
        let word = lookup(u(0))?.clone();
        let scope = lookup(u(4))?;
        let count = u64::from_le_bytes(entry[8..16].try_into().unwrap());
        let vector: Vec<f32> = entry[16..]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        let store = match set.stores.iter().position(|s| &s.scope == scope) {
            Some(i) => &mut set.stores[i],
            None => {
                set.stores.push(RepresentationStore::new(scope.clone(), dim));
                set.stores.last_mut().unwrap()
            }
        };
        if store.entries.insert(word.clone(), Representation { vector, count }).is_some() {
            return Err(AggregateError::Format(format!(
                "entry {ordinal}: duplicate word {word:?} in scope {scope:?}"
            )));
        }
        ordinal += 1;
    }
    set.stores.sort_by_key(|s| s.is_global());
    Ok(set)
}
