//! Cosine shift scores, Levenshtein-filtered neighbors, meaning change and
//! similarity trajectories over finalized representation stores.

use std::cmp::Ordering;

use serde::Serialize;
use thiserror::Error;

use crate::aggregate::{RepresentationStore, StoreSet};

pub const DEFAULT_NEIGHBORS: usize = 50;
pub const DEFAULT_NORM_LD_THRESHOLD: f64 = 0.5;
pub const DEFAULT_TOP_CHANGED: usize = 10;

/// Query-time exclusion applied to neighbor candidates: pure punctuation,
/// symbols or digits.
pub const DEFAULT_WORD_FILTER: &str = r"^[\p{P}\p{S}\p{N}]+$";

#[derive(Debug, Error, PartialEq)]
pub enum ShiftError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("zero-norm vector")]
    ZeroNorm,
    #[error("{word:?} not found in scope {scope:?}")]
    NotFound { word: String, scope: String },
    #[error("scope {0:?} not present in the stores")]
    MissingScope(String),
}

/// Cosine similarity in `f64`, clamped to `[-1, 1]`.
pub fn cosine_similarity(u: &[f32], v: &[f32]) -> Result<f64, ShiftError> {
    if u.len() != v.len() {
        return Err(ShiftError::DimMismatch(u.len(), v.len()));
    }
    let (mut dot, mut nu, mut nv) = (0.0f64, 0.0f64, 0.0f64);
    for (&a, &b) in u.iter().zip(v) {
        let (a, b) = (a as f64, b as f64);
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if nu == 0.0 || nv == 0.0 {
        return Err(ShiftError::ZeroNorm);
    }
    Ok((dot / (nu.sqrt() * nv.sqrt())).clamp(-1.0, 1.0))
}

fn scope<'a>(stores: &'a StoreSet, label: &str) -> Result<&'a RepresentationStore, ShiftError> {
    stores.get(label).ok_or_else(|| ShiftError::MissingScope(label.to_string()))
}

fn vector<'a>(store: &'a RepresentationStore, word: &str) -> Result<&'a [f32], ShiftError> {
    store
        .get(word)
        .map(|r| r.vector.as_slice())
        .ok_or_else(|| ShiftError::NotFound { word: word.to_string(), scope: store.scope.clone() })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShiftScore {
    pub word: String,
    pub period_a: String,
    pub period_b: String,
    pub distance: f64,
    pub count_a: u64,
    pub count_b: u64,
}

pub fn shift_score(
    word: &str,
    period_a: &str,
    period_b: &str,
    stores: &StoreSet,
) -> Result<ShiftScore, ShiftError> {
    let a = scope(stores, period_a)?;
    let b = scope(stores, period_b)?;
    let not_found = |s: &RepresentationStore| ShiftError::NotFound {
        word: word.to_string(),
        scope: s.scope.clone(),
    };
    let ra = a.get(word).ok_or_else(|| not_found(a))?;
    let rb = b.get(word).ok_or_else(|| not_found(b))?;
    Ok(ShiftScore {
        word: word.to_string(),
        period_a: period_a.to_string(),
        period_b: period_b.to_string(),
        distance: 1.0 - cosine_similarity(&ra.vector, &rb.vector)?,
        count_a: ra.count,
        count_b: rb.count,
    })
}

/// Scores every word present in both periods, ranked by distance
/// descending, ties by word.
pub fn rank_shifts(period_a: &str, period_b: &str, stores: &StoreSet) -> Result<Vec<ShiftScore>, ShiftError> {
    let a = scope(stores, period_a)?;
    let b = scope(stores, period_b)?;
    let mut scores = Vec::new();
    for word in a.entries.keys().filter(|w| b.entries.contains_key(*w)) {
        match shift_score(word, period_a, period_b, stores) {
            Ok(s) => scores.push(s),
            // a zero vector has no direction to compare
            Err(ShiftError::ZeroNorm) => continue,
            Err(e) => return Err(e),
        }
    }
    sort_shifts(&mut scores);
    Ok(scores)
}

pub fn sort_shifts(scores: &mut [ShiftScore]) {
    scores.sort_by(|x, y| y.distance.total_cmp(&x.distance).then_with(|| x.word.cmp(&y.word)));
}

/// Unit-cost edit distance over Unicode scalar values.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let (short, long) = if a.len() <= b.len() { (&a, &b) } else { (&b, &a) };
    let mut row: Vec<usize> = (0..=short.len()).collect();
    for (i, &lc) in long.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, &sc) in short.iter().enumerate() {
            let substitute = diag + usize::from(lc != sc);
            diag = row[j + 1];
            row[j + 1] = substitute.min(row[j] + 1).min(diag + 1);
        }
    }
    row[short.len()]
}

/// `1 - LD / max(len)`, with two empty strings counted as identical.
pub fn norm_levenshtein(a: &str, b: &str) -> f64 {
    let longest = a.chars().count().max(b.chars().count());
    if longest == 0 {
        return 1.0;
    }
    1.0 - levenshtein(a, b) as f64 / longest as f64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Neighbor {
    pub word: String,
    pub similarity: f64,
    pub norm_ld: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NeighborSet {
    pub target: String,
    pub entries: Vec<Neighbor>,
}

fn by_similarity(a: &Neighbor, b: &Neighbor) -> Ordering {
    b.similarity.total_cmp(&a.similarity).then_with(|| a.word.cmp(&b.word))
}

/// The `k` words most similar to `target` in `store`, after discarding
/// candidates whose normalized Levenshtein similarity to the target exceeds
/// `threshold` and candidates rejected by `skip`.
pub fn neighbors(
    target: &str,
    store: &RepresentationStore,
    k: usize,
    threshold: f64,
    skip: impl Fn(&str) -> bool,
) -> Result<NeighborSet, ShiftError> {
    let t = vector(store, target)?;
    let mut entries = Vec::new();
    for (word, rep) in &store.entries {
        if word == target || skip(word) {
            continue;
        }
        let norm_ld = norm_levenshtein(target, word);
        if norm_ld > threshold {
            continue;
        }
        let similarity = match cosine_similarity(t, &rep.vector) {
            Ok(s) => s,
            Err(ShiftError::ZeroNorm) => continue,
            Err(e) => return Err(e),
        };
        entries.push(Neighbor { word: word.clone(), similarity, norm_ld });
    }
    entries.sort_by(by_similarity);
    entries.truncate(k);
    Ok(NeighborSet { target: target.to_string(), entries })
}

/// Meaning change of a target–seed pair between two periods: the absolute
/// difference of their cosine similarities.
pub fn meaning_change(
    target: &str,
    seed: &str,
    first: &str,
    last: &str,
    stores: &StoreSet,
) -> Result<f64, ShiftError> {
    let (cs_first, cs_last) = pair_similarities(target, seed, first, last, stores)?;
    Ok((cs_first - cs_last).abs())
}

fn pair_similarities(
    target: &str,
    seed: &str,
    first: &str,
    last: &str,
    stores: &StoreSet,
) -> Result<(f64, f64), ShiftError> {
    let cs = |label: &str| -> Result<f64, ShiftError> {
        let s = scope(stores, label)?;
        cosine_similarity(vector(s, target)?, vector(s, seed)?)
    };
    Ok((cs(first)?, cs(last)?))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeaningChange {
    pub target: String,
    pub seed: String,
    pub first: String,
    pub last: String,
    pub similarity_first: f64,
    pub similarity_last: f64,
    pub change: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedSelection {
    pub ranked: Vec<MeaningChange>,
    /// Neighbors lacking a representation in the first or last period.
    pub skipped: Vec<String>,
}

/// Ranks `candidates` by meaning change relative to `target` and keeps the
/// `top` largest (ties by word).
pub fn select_changed_seeds<'a>(
    target: &str,
    candidates: impl IntoIterator<Item = &'a str>,
    first: &str,
    last: &str,
    stores: &StoreSet,
    top: usize,
) -> Result<SeedSelection, ShiftError> {
    scope(stores, first)?;
    scope(stores, last)?;
    let mut ranked = Vec::new();
    let mut skipped = Vec::new();
    for seed in candidates {
        match pair_similarities(target, seed, first, last, stores) {
            Ok((a, b)) => ranked.push(MeaningChange {
                target: target.to_string(),
                seed: seed.to_string(),
                first: first.to_string(),
                last: last.to_string(),
                similarity_first: a,
                similarity_last: b,
                change: (a - b).abs(),
            }),
            Err(ShiftError::NotFound { .. } | ShiftError::ZeroNorm) => skipped.push(seed.to_string()),
            Err(e) => return Err(e),
        }
    }
    ranked.sort_by(|x, y| y.change.total_cmp(&x.change).then_with(|| x.seed.cmp(&y.seed)));
    ranked.truncate(top);
    Ok(SeedSelection { ranked, skipped })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryPoint {
    pub period: String,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub target: String,
    pub seed: String,
    pub points: Vec<TrajectoryPoint>,
    /// Periods where either word lacks a representation.
    pub missing: Vec<String>,
    /// Set when fewer than two points exist.
    pub warning: Option<String>,
}

pub fn trajectory<'a>(
    target: &str,
    seed: &str,
    periods: impl IntoIterator<Item = &'a str>,
    stores: &StoreSet,
) -> Result<Trajectory, ShiftError> {
    let mut points = Vec::new();
    let mut missing = Vec::new();
    for period in periods {
        let store = scope(stores, period)?;
        match (store.get(target), store.get(seed)) {
            (Some(t), Some(s)) => match cosine_similarity(&t.vector, &s.vector) {
                Ok(similarity) => points.push(TrajectoryPoint { period: period.to_string(), similarity }),
                Err(ShiftError::ZeroNorm) => missing.push(period.to_string()),
                Err(e) => return Err(e),
            },
            _ => missing.push(period.to_string()),
        }
    }
    let warning = (points.len() < 2).then(|| format!("only {} period(s) with both words", points.len()));
    Ok(Trajectory { target: target.to_string(), seed: seed.to_string(), points, missing, warning })
}
