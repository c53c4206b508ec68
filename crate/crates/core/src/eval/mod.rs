//! Correlation of model shift scores against a human-annotated gold index.

mod synth;

use std::collections::HashSet;
use std::io::BufRead;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::aggregate::StoreSet;
use crate::rng;
use crate::shift::{shift_score, ShiftError};

pub use synth::{synth_stream, write_gold, SynthOutput, SynthSpec, SYNTH_PERIODS};

pub const DEFAULT_PERMUTATIONS: usize = 10_000;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("gold line {line}: {message}")]
    Gold { line: usize, message: String },
    #[error("need at least 3 paired values, got {0}")]
    InsufficientData(usize),
    #[error("zero variance in {0}")]
    Degenerate(&'static str),
    #[error("x and y differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("|r| = {0} is outside [-1, 1]")]
    InvalidCorrelation(f64),
    #[error(transparent)]
    Shift(#[from] ShiftError),
    #[error("invalid synthetic spec: {0}")]
    Synth(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GoldRecord {
    pub word: String,
    pub shift_index: f64,
}

/// Parses `word<TAB>index` rows. A first line whose index is not numeric is
/// taken as a header. With `lowercase`, words are case-folded like word keys.
pub fn parse_gold<R: BufRead>(reader: R, lowercase: bool) -> Result<Vec<GoldRecord>, EvalError> {
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| EvalError::Gold { line: line_no, message };
        let mut cols = line.split('\t');
        let (Some(word), Some(index), None) = (cols.next(), cols.next(), cols.next()) else {
            return Err(err("expected two tab-separated columns".into()));
        };
        let word = word.trim();
        let index: f64 = match index.trim().parse() {
            Ok(v) => v,
            Err(_) if line_no == 1 => continue,
            Err(_) => return Err(err(format!("index {index:?} is not a number"))),
        };
        if !(0.0..=1.0).contains(&index) {
            return Err(err(format!("index {index} outside [0, 1]")));
        }
        if word.is_empty() {
            return Err(err("empty word".into()));
        }
        let word = if lowercase { word.to_lowercase() } else { word.to_string() };
        if !seen.insert(word.clone()) {
            return Err(err(format!("duplicate word {word:?}")));
        }
        records.push(GoldRecord { word, shift_index: index });
    }
    Ok(records)
}

pub fn load_gold(path: &Path, lowercase: bool) -> Result<Vec<GoldRecord>, EvalError> {
    parse_gold(std::io::BufReader::new(std::fs::File::open(path)?), lowercase)
}

struct Centered {
    values: Vec<f64>,
    norm: f64,
}

fn centered(xs: &[f64], name: &'static str) -> Result<Centered, EvalError> {
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let values: Vec<f64> = xs.iter().map(|x| x - mean).collect();
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(EvalError::Degenerate(name));
    }
    Ok(Centered { values, norm })
}

fn correlation(x: &Centered, y: &Centered) -> f64 {
    let dot: f64 = x.values.iter().zip(&y.values).map(|(a, b)| a * b).sum();
    (dot / (x.norm * y.norm)).clamp(-1.0, 1.0)
}

fn check_pairs(x: &[f64], y: &[f64]) -> Result<(), EvalError> {
    if x.len() != y.len() {
        return Err(EvalError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(EvalError::InsufficientData(x.len()));
    }
    Ok(())
}

/// Pearson product-moment correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, EvalError> {
    check_pairs(x, y)?;
    Ok(correlation(&centered(x, "x")?, &centered(y, "y")?))
}

/// Two-sided p-value of `r` from Student's t with `n - 2` degrees of freedom.
pub fn p_value_t(r: f64, n: usize) -> Result<f64, EvalError> {
    if n < 3 {
        return Err(EvalError::InsufficientData(n));
    }
    if r.is_nan() || r.abs() > 1.0 {
        return Err(EvalError::InvalidCorrelation(r));
    }
    if r.abs() == 1.0 {
        return Ok(0.0);
    }
    if r == 0.0 {
        return Ok(1.0);
    }
    let df = (n - 2) as f64;
    let t = r.abs() * (df / (1.0 - r * r)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("df >= 1");
    Ok((2.0 * dist.sf(t)).clamp(0.0, 1.0))
}

/// The t statistic `r * sqrt((n - 2) / (1 - r^2))`.
pub fn t_statistic(r: f64, n: usize) -> f64 {
    r * ((n as f64 - 2.0) / (1.0 - r * r)).sqrt()
}

/// Two-sided permutation p-value with add-one smoothing. Shuffle `i` draws
/// from ChaCha8 stream `i` of `seed`, so results do not depend on threads.
pub fn p_value_permutation(x: &[f64], y: &[f64], permutations: usize, seed: u64) -> Result<f64, EvalError> {
    check_pairs(x, y)?;
    let cx = centered(x, "x")?;
    let cy = centered(y, "y")?;
    let observed = correlation(&cx, &cy).abs();
    let hits: usize = (0..permutations)
        .into_par_iter()
        .map(|i| {
            let mut shuffled = cy.values.clone();
            rng::fisher_yates(&mut shuffled, &mut rng::seeded_stream(seed, i as u64));
            let perm = Centered { values: shuffled, norm: cy.norm };
            usize::from(correlation(&cx, &perm).abs() >= observed - 1e-12)
        })
        .sum();
    Ok((hits + 1) as f64 / (permutations + 1) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PValueMethod {
    TDist,
    Permutation { permutations: usize, seed: u64 },
}

impl PValueMethod {
    pub fn name(&self) -> &'static str {
        match self {
            PValueMethod::TDist => "t-dist",
            PValueMethod::Permutation { .. } => "permutation",
        }
    }
}

pub fn p_value(x: &[f64], y: &[f64], method: PValueMethod) -> Result<f64, EvalError> {
    match method {
        PValueMethod::TDist => p_value_t(pearson(x, y)?, x.len()),
        PValueMethod::Permutation { permutations, seed } => p_value_permutation(x, y, permutations, seed),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalPair {
    pub word: String,
    pub gold: f64,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub n_evaluated: usize,
    pub n_missing: usize,
    pub missing: Vec<String>,
    pub pearson_r: f64,
    pub p_value: f64,
    pub method: String,
    pub pairs: Vec<EvalPair>,
}

/// Correlates gold indices with the cosine distance of each gold word between
/// `period_a` and `period_b`. Words absent from either period are reported
/// in `missing` and left out of the correlation.
pub fn evaluate(
    stores: &StoreSet,
    gold: &[GoldRecord],
    period_a: &str,
    period_b: &str,
    method: PValueMethod,
) -> Result<EvalReport, EvalError> {
    for label in [period_a, period_b] {
        if stores.get(label).is_none() {
            return Err(ShiftError::MissingScope(label.to_string()).into());
        }
    }
    let mut pairs = Vec::new();
    let mut missing = Vec::new();
    for record in gold {
        match shift_score(&record.word, period_a, period_b, stores) {
            Ok(score) => pairs.push(EvalPair {
                word: record.word.clone(),
                gold: record.shift_index,
                distance: score.distance,
            }),
            Err(ShiftError::NotFound { .. } | ShiftError::ZeroNorm) => missing.push(record.word.clone()),
            Err(e) => return Err(e.into()),
        }
    }
    if pairs.len() < 3 {
        return Err(EvalError::InsufficientData(pairs.len()));
    }
    let x: Vec<f64> = pairs.iter().map(|p| p.gold).collect();
    let y: Vec<f64> = pairs.iter().map(|p| p.distance).collect();
    let r = pearson(&x, &y)?;
    let p = p_value(&x, &y, method)?;
    Ok(EvalReport {
        n_evaluated: pairs.len(),
        n_missing: missing.len(),
        missing,
        pearson_r: r,
        p_value: p,
        method: method.name().to_string(),
        pairs,
    })
}
