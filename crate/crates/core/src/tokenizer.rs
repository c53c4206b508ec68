//! Word splitting, greedy WordPiece segmentation and encoder-sized chunking.

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Continuation marker for non-initial pieces.
pub const CONTINUATION_PREFIX: &str = "##";

/// Encoder input limit minus the [CLS]/[SEP] slots added by the extractor.
pub const DEFAULT_CONTENT_LIMIT: usize = 254;

#[derive(Debug, Error)]
pub enum TokenizerError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("vocab line {line}: {message}")]
    Vocab { line: usize, message: String },
    #[error("vocab is missing special token {0}")]
    MissingSpecial(&'static str),
    #[error("word {word:?} has {pieces} subword pieces, more than the chunk limit {limit}")]
    OversizedWord { word: String, pieces: usize, limit: usize },
    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },
}

#[derive(Debug, Clone)]
pub struct Vocab {
    ids: HashMap<String, u32>,
    tokens: Vec<String>,
    pub cls_id: u32,
    pub sep_id: u32,
    pub unk_id: u32,
    pub pad_id: u32,
}

impl Vocab {
    /// Builds a vocab where each token's id is its position.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self, TokenizerError> {
        let mut ids = HashMap::with_capacity(tokens.len());
        for (i, tok) in tokens.iter().enumerate() {
            if tok.is_empty() {
                return Err(TokenizerError::Vocab { line: i + 1, message: "empty token".into() });
            }
            if ids.insert(tok.clone(), i as u32).is_some() {
                return Err(TokenizerError::Vocab {
                    line: i + 1,
                    message: format!("duplicate token {tok:?}"),
                });
            }
        }
        let special = |name: &'static str| {
            ids.get(name).copied().ok_or(TokenizerError::MissingSpecial(name))
        };
        Ok(Self {
            cls_id: special("[CLS]")?,
            sep_id: special("[SEP]")?,
            unk_id: special("[UNK]")?,
            pad_id: special("[PAD]")?,
            ids,
            tokens,
        })
    }

    /// Parses the one-token-per-line layout; a trailing newline is allowed.
    pub fn from_reader<R: BufRead>(reader: R) -> Result<Self, TokenizerError> {
        let tokens = reader.lines().collect::<Result<Vec<_>, _>>()?;
        Self::from_tokens(tokens)
    }

    pub fn load(path: &Path) -> Result<Self, TokenizerError> {
        Self::from_reader(std::io::BufReader::new(std::fs::File::open(path)?))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.ids.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }
}

fn punctuation() -> &'static Regex {
    static PUNCT: OnceLock<Regex> = OnceLock::new();
    // Unicode punctuation plus every non-alphanumeric printable ASCII symbol
    PUNCT.get_or_init(|| Regex::new(r"[\p{P}!-/:-@\[-`{-~]").expect("valid punctuation regex"))
}

/// Splits on Unicode whitespace, then makes every punctuation character a word.
pub fn pre_tokenize(text: &str, lowercase: bool) -> Vec<String> {
    let lowered;
    let text = if lowercase {
        lowered = text.to_lowercase();
        lowered.as_str()
    } else {
        text
    };
    let punct = punctuation();
    let mut words = Vec::new();
    for chunk in text.split_whitespace() {
        let mut last = 0;
        for m in punct.find_iter(chunk) {
            if m.start() > last {
                words.push(chunk[last..m.start()].to_string());
            }
            words.push(m.as_str().to_string());
            last = m.end();
        }
        if last < chunk.len() {
            words.push(chunk[last..].to_string());
        }
    }
    words
}

/// Greedy longest-match-first segmentation. Falls back to a lone [UNK] when
/// any remainder has no matching piece.
pub fn wordpiece_tokenize(word: &str, vocab: &Vocab) -> Vec<u32> {
    let mut pieces = Vec::new();
    let mut candidate = String::with_capacity(word.len() + CONTINUATION_PREFIX.len());
    let mut start = 0;
    while start < word.len() {
        let rest = &word[start..];
        let mut ends: Vec<usize> = rest.char_indices().map(|(i, _)| i).skip(1).collect();
        ends.push(rest.len());
        let found = ends.iter().rev().find_map(|&end| {
            candidate.clear();
            if start > 0 {
                candidate.push_str(CONTINUATION_PREFIX);
            }
            candidate.push_str(&rest[..end]);
            vocab.id(&candidate).map(|id| (id, end))
        });
        match found {
            Some((id, end)) => {
                pieces.push(id);
                start += end;
            }
            None => return vec![vocab.unk_id],
        }
    }
    pieces
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SubwordToken {
    pub token_id: u32,
    /// Ordinal of the word within its document.
    pub word_instance: u32,
    /// Index into the owning sequence's `surfaces`.
    pub word_ref: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizedSequence {
    pub doc_id: String,
    pub period_label: String,
    pub surfaces: Vec<String>,
    pub tokens: Vec<SubwordToken>,
}

impl TokenizedSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn surface(&self, token: &SubwordToken) -> &str {
        &self.surfaces[token.word_ref as usize]
    }

    /// Tokenizes a whole document without chunking.
    pub fn from_text(
        doc_id: &str,
        period_label: &str,
        text: &str,
        lowercase: bool,
        vocab: &Vocab,
    ) -> Self {
        let mut seq = Self {
            doc_id: doc_id.to_string(),
            period_label: period_label.to_string(),
            surfaces: Vec::new(),
            tokens: Vec::new(),
        };
        let mut interner = Interner::default();
        for (instance, word) in pre_tokenize(text, lowercase).into_iter().enumerate() {
            let word_ref = interner.intern(&word, &mut seq.surfaces);
            for token_id in wordpiece_tokenize(&word, vocab) {
                seq.tokens.push(SubwordToken { token_id, word_instance: instance as u32, word_ref });
            }
        }
        seq
    }

    /// Contiguous runs of tokens sharing a `word_instance`.
    pub fn words(&self) -> impl Iterator<Item = &[SubwordToken]> {
        self.tokens.chunk_by(|a, b| a.word_instance == b.word_instance)
    }
}

#[derive(Default)]
struct Interner {
    index: HashMap<String, u32>,
}

impl Interner {
    fn intern(&mut self, s: &str, table: &mut Vec<String>) -> u32 {
        if let Some(&i) = self.index.get(s) {
            return i;
        }
        let i = table.len() as u32;
        table.push(s.to_string());
        self.index.insert(s.to_string(), i);
        i
    }
}

/// Packs whole words greedily into chunks of at most `limit` tokens.
pub fn chunk(doc: &TokenizedSequence, limit: usize) -> Result<Vec<TokenizedSequence>, TokenizerError> {
    let mut chunks = Vec::new();
    let mut current: Vec<SubwordToken> = Vec::new();
    let emit = |tokens: &mut Vec<SubwordToken>, chunks: &mut Vec<TokenizedSequence>| {
        if tokens.is_empty() {
            return;
        }
        let mut out = TokenizedSequence {
            doc_id: doc.doc_id.clone(),
            period_label: doc.period_label.clone(),
            surfaces: Vec::new(),
            tokens: Vec::with_capacity(tokens.len()),
        };
        let mut interner = Interner::default();
        for tok in tokens.drain(..) {
            let word_ref = interner.intern(doc.surface(&tok), &mut out.surfaces);
            out.tokens.push(SubwordToken { word_ref, ..tok });
        }
        chunks.push(out);
    };
    for word in doc.words() {
        if word.len() > limit {
            return Err(TokenizerError::OversizedWord {
                word: doc.surface(&word[0]).to_string(),
                pieces: word.len(),
                limit,
            });
        }
        if current.len() + word.len() > limit {
            emit(&mut current, &mut chunks);
        }
        current.extend_from_slice(word);
    }
    emit(&mut current, &mut chunks);
    Ok(chunks)
}

#[derive(Serialize, Deserialize)]
struct ManifestLine {
    doc_id: String,
    period_label: String,
    token_ids: Vec<u32>,
    word_instances: Vec<u32>,
    word_surfaces: Vec<String>,
}

/// Writes one sequence as a manifest JSON line (per-token parallel arrays).
pub fn write_manifest_line<W: Write + ?Sized>(out: &mut W, seq: &TokenizedSequence) -> std::io::Result<()> {
    let line = ManifestLine {
        doc_id: seq.doc_id.clone(),
        period_label: seq.period_label.clone(),
        token_ids: seq.tokens.iter().map(|t| t.token_id).collect(),
        word_instances: seq.tokens.iter().map(|t| t.word_instance).collect(),
        word_surfaces: seq.tokens.iter().map(|t| seq.surface(t).to_string()).collect(),
    };
    serde_json::to_writer(&mut *out, &line)?;
    out.write_all(b"\n")
}

pub fn read_manifest<R: BufRead>(reader: R) -> Result<Vec<TokenizedSequence>, TokenizerError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| TokenizerError::Manifest { line: i + 1, message };
        let m: ManifestLine = serde_json::from_str(&line).map_err(|e| err(e.to_string()))?;
        if m.token_ids.len() != m.word_instances.len() || m.token_ids.len() != m.word_surfaces.len() {
            return Err(err("token_ids, word_instances and word_surfaces differ in length".into()));
        }
        let mut seq = TokenizedSequence {
            doc_id: m.doc_id,
            period_label: m.period_label,
            surfaces: Vec::new(),
            tokens: Vec::with_capacity(m.token_ids.len()),
        };
        let mut interner = Interner::default();
        for ((token_id, word_instance), surface) in
            m.token_ids.into_iter().zip(m.word_instances).zip(&m.word_surfaces)
        {
            let word_ref = interner.intern(surface, &mut seq.surfaces);
            seq.tokens.push(SubwordToken { token_id, word_instance, word_ref });
        }
        out.push(seq);
    }
    Ok(out)
}
