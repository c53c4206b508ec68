//! Word reconstruction from subword vectors and mean aggregation into
//! per-period and corpus-wide representations.

mod accumulator;
mod store;

use std::collections::HashMap;

use rayon::prelude::*;
use thiserror::Error;

use crate::embedding_io::{SequenceBlock, StreamError, StreamHeader};

pub use accumulator::MeanAccumulator;
pub use store::{
    read_store_set, write_store_set, Representation, RepresentationStore, StoreSet, STORE_MAGIC,
};

/// Scope label of the corpus-wide representations.
pub const GLOBAL_SCOPE: &str = "GLOBAL";

#[derive(Debug, Error)]
pub enum AggregateError {
    #[error(transparent)]
    Stream(#[from] StreamError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error("no usage vectors")]
    NoUsages,
    #[error("non-finite mean for {word:?} in scope {scope:?}")]
    NonFinite { word: String, scope: String },
    #[error("scope {0:?} appears twice")]
    DuplicateScope(String),
    #[error("invalid representation store: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scope {
    Period,
    Global,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScopeSelection {
    PerPeriod,
    Global,
    #[default]
    Both,
}

impl ScopeSelection {
    fn includes(self, scope: Scope) -> bool {
        matches!(
            (self, scope),
            (ScopeSelection::Both, _)
                | (ScopeSelection::PerPeriod, Scope::Period)
                | (ScopeSelection::Global, Scope::Global)
        )
    }
}

pub const DEFAULT_MIN_COUNT: u64 = 5;

pub struct AggregateOptions<'a> {
    pub scope: ScopeSelection,
    pub min_count: u64,
    /// Words containing this token id are skipped entirely.
    pub unk_id: Option<u32>,
    /// Words for which this returns true are skipped.
    pub exclude: Option<&'a (dyn Fn(&str) -> bool + Sync)>,
}

impl Default for AggregateOptions<'_> {
    fn default() -> Self {
        Self { scope: ScopeSelection::Both, min_count: DEFAULT_MIN_COUNT, unk_id: None, exclude: None }
    }
}

/// Elementwise mean of the subword-piece vectors of one word usage.
pub fn reconstruct_word<V: AsRef<[f64]>>(pieces: &[V]) -> Result<Vec<f64>, AggregateError> {
    let first = pieces.first().ok_or(AggregateError::NoUsages)?.as_ref();
    let mut out = first.to_vec();
    for piece in &pieces[1..] {
        let piece = piece.as_ref();
        if piece.len() != out.len() {
            return Err(AggregateError::DimMismatch { expected: out.len(), found: piece.len() });
        }
        for (o, x) in out.iter_mut().zip(piece) {
            *o += x;
        }
    }
    let n = pieces.len() as f64;
    out.iter_mut().for_each(|o| *o /= n);
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ScopeSummary {
    pub scope: String,
    pub kept: usize,
    pub dropped: usize,
}

/// Partially reduced accumulators for one or more streams.
#[derive(Debug, Clone)]
pub struct Accumulation {
    dim: usize,
    scope_order: Vec<String>,
    scopes: HashMap<String, HashMap<String, MeanAccumulator>>,
    /// Layer-summed vector of each piece of the current word, reused.
    pieces: Vec<Vec<f64>>,
}

impl Accumulation {
    pub fn new(dim: usize) -> Self {
        Self { dim, scope_order: Vec::new(), scopes: HashMap::new(), pieces: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn scope_mut(&mut self, label: &str) -> &mut HashMap<String, MeanAccumulator> {
        if !self.scopes.contains_key(label) {
            self.scope_order.push(label.to_string());
        }
        self.scopes.entry(label.to_string()).or_default()
    }

    pub fn accumulator(&self, scope: &str, word: &str) -> Option<&MeanAccumulator> {
        self.scopes.get(scope)?.get(word)
    }

    /// Adds every usage in `block`.
    pub fn ingest(
        &mut self,
        header: &StreamHeader,
        block: &SequenceBlock,
        opts: &AggregateOptions<'_>,
    ) -> Result<(), AggregateError> {
        let dim = header.dim as usize;
        if dim != self.dim {
            return Err(AggregateError::DimMismatch { expected: self.dim, found: dim });
        }
        let period = header
            .string(block.period_ref)
            .ok_or_else(|| AggregateError::Format(format!("period ref {} unresolved", block.period_ref)))?
            .to_string();
        let mut pieces = std::mem::take(&mut self.pieces);
        for word_tokens in block.tokens.chunk_by(|a, b| a.word_instance == b.word_instance) {
            if let Some(unk) = opts.unk_id {
                if word_tokens.iter().any(|t| t.token_id == unk) {
                    continue;
                }
            }
            let word = header
                .string(word_tokens[0].word_ref)
                .ok_or_else(|| AggregateError::Format("word ref unresolved".into()))?;
            if word.is_empty() || opts.exclude.is_some_and(|f| f(word)) {
                continue;
            }
            pieces.resize_with(word_tokens.len(), Vec::new);
            for (piece, token) in pieces.iter_mut().zip(word_tokens) {
                piece.clear();
                piece.resize(dim, 0.0);
                for layer in token.layers(dim) {
                    for (p, &x) in piece.iter_mut().zip(layer) {
                        *p += x as f64;
                    }
                }
            }
            let usage = reconstruct_word(&pieces[..word_tokens.len()])?;
            if opts.scope.includes(Scope::Period) {
                self.add(&period, word, &usage)?;
            }
            if opts.scope.includes(Scope::Global) {
                self.add(GLOBAL_SCOPE, word, &usage)?;
            }
        }
        self.pieces = pieces;
        Ok(())
    }

    fn add(&mut self, scope: &str, word: &str, usage: &[f64]) -> Result<(), AggregateError> {
        let dim = self.dim;
        let words = self.scope_mut(scope);
        match words.get_mut(word) {
            Some(acc) => acc.accumulate_f64(usage),
            None => {
                let mut acc = MeanAccumulator::new(dim);
                acc.accumulate_f64(usage)?;
                words.insert(word.to_string(), acc);
                Ok(())
            }
        }
    }

    /// Folds `other` into `self`; scopes new to `self` keep `other`'s order.
    pub fn merge(&mut self, other: Accumulation) -> Result<(), AggregateError> {
        if other.scopes.is_empty() {
            return Ok(());
        }
        if other.dim != self.dim {
            return Err(AggregateError::DimMismatch { expected: self.dim, found: other.dim });
        }
        let mut other_scopes = other.scopes;
        for label in other.scope_order {
            let words = other_scopes.remove(&label).unwrap_or_default();
            let mine = self.scope_mut(&label);
            for (word, acc) in words {
                match mine.get_mut(&word) {
                    Some(existing) => existing.merge(&acc)?,
                    None => {
                        mine.insert(word, acc);
                    }
                }
            }
        }
        Ok(())
    }

    /// Drops words seen fewer than `min_count` times and computes the means.
    pub fn finalize(&self, min_count: u64) -> Result<(StoreSet, Vec<ScopeSummary>), AggregateError> {
        let mut set = StoreSet::new(self.dim);
        let mut summary = Vec::new();
        let mut order: Vec<&String> = self.scope_order.iter().collect();
        order.sort_by_key(|s| s.as_str() == GLOBAL_SCOPE);
        for label in order {
            let mut store = RepresentationStore::new(label.clone(), self.dim);
            let mut dropped = 0;
            for (word, acc) in &self.scopes[label] {
                if acc.count() < min_count {
                    dropped += 1;
                    continue;
                }
                let vector = acc.finalize()?;
                if vector.iter().any(|x| !x.is_finite()) {
                    return Err(AggregateError::NonFinite { word: word.clone(), scope: label.clone() });
                }
                store.entries.insert(word.clone(), Representation { vector, count: acc.count() });
            }
            summary.push(ScopeSummary { scope: label.clone(), kept: store.len(), dropped });
            set.stores.push(store);
        }
        Ok((set, summary))
    }
}

/// Reduces one stream's blocks into an [`Accumulation`].
pub fn accumulate_stream<I>(
    header: &StreamHeader,
    blocks: I,
    opts: &AggregateOptions<'_>,
) -> Result<Accumulation, AggregateError>
where
    I: IntoIterator<Item = Result<SequenceBlock, StreamError>>,
{
    let mut acc = Accumulation::new(header.dim as usize);
    for block in blocks {
        acc.ingest(header, &block?, opts)?;
    }
    Ok(acc)
}

/// Builds representations from several stream shards.
///
/// Shards are reduced in parallel and merged in input order, so the result
/// does not depend on the thread count.
pub fn build_representations<S, I>(
    shards: Vec<(StreamHeader, S)>,
    opts: &AggregateOptions<'_>,
) -> Result<(StoreSet, Vec<ScopeSummary>), AggregateError>
where
    S: IntoIterator<Item = Result<SequenceBlock, StreamError>, IntoIter = I> + Send,
    I: Iterator<Item = Result<SequenceBlock, StreamError>>,
{
    let Some(dim) = shards.first().map(|(h, _)| h.dim as usize) else {
        return Ok((StoreSet::new(1), Vec::new()));
    };
    if let Some((h, _)) = shards.iter().find(|(h, _)| h.dim as usize != dim) {
        return Err(AggregateError::DimMismatch { expected: dim, found: h.dim as usize });
    }
    let partials: Vec<Accumulation> = shards
        .into_par_iter()
        .map(|(header, blocks)| accumulate_stream(&header, blocks, opts))
        .collect::<Result<_, _>>()?;
    let mut total = Accumulation::new(dim);
    for part in partials {
        total.merge(part)?;
    }
    total.finalize(opts.min_count)
}
