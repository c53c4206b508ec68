//! Document ingestion, preprocessing and period binning.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::sync::OnceLock;

use chrono::NaiveDate;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregate::GLOBAL_SCOPE;
use crate::rng;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: duplicate document id {id:?}")]
    DuplicateId { line: usize, id: String },
    #[error("invalid period config: {0}")]
    Periods(String),
    #[error("unknown period preset {0:?} (expected liverpoolfc, brexit or immigration)")]
    UnknownPreset(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub date: NaiveDate,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lang: Option<String>,
    pub title: String,
    pub body: String,
}

impl Document {
    /// Title and body joined by a single newline.
    pub fn text(&self) -> String {
        let mut text = String::with_capacity(self.title.len() + self.body.len() + 1);
        text.push_str(&self.title);
        text.push('\n');
        text.push_str(&self.body);
        text
    }
}

#[derive(Deserialize)]
struct RawDocument {
    id: Option<String>,
    date: Option<String>,
    #[serde(default)]
    lang: Option<String>,
    title: Option<String>,
    body: Option<String>,
}

fn parse_document(line: &str, line_no: usize) -> Result<Document, CorpusError> {
    let malformed = |message: String| CorpusError::Malformed { line: line_no, message };
    let raw: RawDocument =
        serde_json::from_str(line).map_err(|e| malformed(format!("invalid JSON: {e}")))?;
    let id = raw.id.ok_or_else(|| malformed("missing field \"id\"".into()))?;
    if id.is_empty() {
        return Err(malformed("empty \"id\"".into()));
    }
    let date = raw.date.ok_or_else(|| malformed("missing field \"date\"".into()))?;
    let date = NaiveDate::parse_from_str(&date, "%Y-%m-%d")
        .map_err(|e| malformed(format!("bad date {date:?}: {e}")))?;
    let title = raw.title.ok_or_else(|| malformed("missing field \"title\"".into()))?;
    let body = raw.body.ok_or_else(|| malformed("missing field \"body\"".into()))?;
    Ok(Document { id, date, lang: raw.lang, title, body })
}

/// Lazily parsed JSON-lines corpus. Blank lines are skipped.
pub struct CorpusReader<R> {
    lines: std::io::Lines<R>,
    line_no: usize,
    seen: HashSet<String>,
    failed: bool,
}

impl<R: BufRead> CorpusReader<R> {
    pub fn new(reader: R) -> Self {
        Self { lines: reader.lines(), line_no: 0, seen: HashSet::new(), failed: false }
    }
}

impl<R: BufRead> Iterator for CorpusReader<R> {
    type Item = Result<Document, CorpusError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        loop {
            let line = match self.lines.next()? {
                Ok(line) => line,
                Err(e) => {
                    self.failed = true;
                    return Some(Err(e.into()));
                }
            };
            self.line_no += 1;
            if line.trim().is_empty() {
                continue;
            }
            let result = parse_document(&line, self.line_no).and_then(|doc| {
                if self.seen.insert(doc.id.clone()) {
                    Ok(doc)
                } else {
                    Err(CorpusError::DuplicateId { line: self.line_no, id: doc.id })
                }
            });
            self.failed = result.is_err();
            return Some(result);
        }
    }
}

pub fn load_corpus(path: &Path) -> Result<CorpusReader<BufReader<File>>, CorpusError> {
    Ok(CorpusReader::new(BufReader::new(File::open(path)?)))
}

/// A labelled half-open date range `[start, end)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeriodConfig {
    pub label: String,
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl PeriodConfig {
    pub fn contains(&self, date: NaiveDate) -> bool {
        self.start <= date && date < self.end
    }
}

/// Validated, start-ordered, non-overlapping periods.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PeriodSet {
    periods: Vec<PeriodConfig>,
}

impl PeriodSet {
    pub fn new(mut periods: Vec<PeriodConfig>) -> Result<Self, CorpusError> {
        let mut labels = HashSet::new();
        for p in &periods {
            if p.label.is_empty() {
                return Err(CorpusError::Periods("empty period label".into()));
            }
            if p.label == GLOBAL_SCOPE {
                return Err(CorpusError::Periods(format!("label {GLOBAL_SCOPE:?} is reserved")));
            }
            if p.start >= p.end {
                return Err(CorpusError::Periods(format!(
                    "period {:?}: start {} is not before end {}",
                    p.label, p.start, p.end
                )));
            }
            if !labels.insert(p.label.clone()) {
                return Err(CorpusError::Periods(format!("duplicate label {:?}", p.label)));
            }
        }
        periods.sort_by_key(|p| p.start);
        for pair in periods.windows(2) {
            if pair[1].start < pair[0].end {
                return Err(CorpusError::Periods(format!(
                    "periods {:?} and {:?} overlap",
                    pair[0].label, pair[1].label
                )));
            }
        }
        Ok(Self { periods })
    }

    pub fn from_json(json: &str) -> Result<Self, CorpusError> {
        let periods: Vec<PeriodConfig> =
            serde_json::from_str(json).map_err(|e| CorpusError::Periods(e.to_string()))?;
        Self::new(periods)
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn preset(name: &str) -> Result<Self, CorpusError> {
        let d = |y, m, day| NaiveDate::from_ymd_opt(y, m, day).expect("valid preset date");
        let p = |label: &str, start, end| PeriodConfig { label: label.to_string(), start, end };
        let periods = match name {
            "liverpoolfc" => vec![
                p("2013", d(2011, 1, 1), d(2014, 1, 1)),
                p("2017", d(2017, 1, 1), d(2018, 1, 1)),
            ],
            "brexit" => vec![
                p("pre-referendum", d(2011, 1, 1), d(2016, 6, 24)),
                p("year1", d(2016, 6, 24), d(2017, 6, 24)),
                p("year2", d(2017, 6, 24), d(2018, 6, 24)),
                p("year3", d(2018, 6, 24), d(2019, 6, 24)),
                p("year4", d(2019, 6, 24), d(2019, 8, 24)),
            ],
            "immigration" => (2015..=2019)
                .map(|y| p(&y.to_string(), d(y, 1, 1), d(y + 1, 1, 1)))
                .collect(),
            other => return Err(CorpusError::UnknownPreset(other.to_string())),
        };
        Self::new(periods)
    }

    pub fn periods(&self) -> &[PeriodConfig] {
        &self.periods
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.periods.iter().map(|p| p.label.as_str())
    }

    pub fn assign(&self, date: NaiveDate) -> Option<&str> {
        let idx = self.periods.partition_point(|p| p.start <= date);
        let candidate = self.periods[..idx].last()?;
        candidate.contains(date).then_some(candidate.label.as_str())
    }
}

pub fn assign_period<'a>(doc: &Document, periods: &'a PeriodSet) -> Option<&'a str> {
    periods.assign(doc.date)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreprocessRules {
    pub strip_urls: bool,
    pub lowercase: bool,
}

fn url_pattern() -> &'static Regex {
    static URL: OnceLock<Regex> = OnceLock::new();
    URL.get_or_init(|| Regex::new(r"(?:https?://|\bwww\.)\S*").expect("valid URL regex"))
}

pub fn preprocess(text: &str, rules: PreprocessRules) -> String {
    let text = if rules.lowercase { text.to_lowercase() } else { text.to_string() };
    if !rules.strip_urls {
        return text;
    }
    let pattern = url_pattern();
    if !pattern.is_match(&text) {
        return text;
    }
    let mut out = String::with_capacity(text.len());
    let mut last = 0;
    for m in pattern.find_iter(&text) {
        out.push_str(&text[last..m.start()]);
        let kept = out.trim_end().len();
        out.truncate(kept);
        out.push(' ');
        last = m.end();
        let rest = &text[last..];
        last += rest.len() - rest.trim_start().len();
    }
    out.push_str(&text[last..]);
    out.trim().to_string()
}

/// Deterministic Fisher–Yates permutation driven by ChaCha8 seeded with `seed`.
pub fn shuffle(mut docs: Vec<Document>, seed: u64) -> Vec<Document> {
    rng::fisher_yates(&mut docs, &mut rng::seeded(seed));
    docs
}
