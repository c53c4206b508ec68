//! The CTE1 contextual-embedding stream exchanged with the encoder.
//!
//! Layout (little-endian throughout):
//!
//! ```text
//! header  := "CTE1" version:u16 dim:u16 layer_count:u8 dtype:u8 table
//! table   := count:u32 { len:u16 utf8[len] }*
//! block   := body crc:u32
//! body    := doc_ref:u32 period_ref:u32 token_count:u32 token*
//! token   := word_ref:u32 word_instance:u32 token_id:u32 f32[layer_count * dim]
//! ```
//!
//! Blocks follow the header until end of file. The CRC-32 covers the body
//! only, so corruption is reported with the ordinal of the damaged block.

mod binary;
mod jsonl;

use thiserror::Error;

pub use binary::{read_stream, write_stream, StreamReader, StreamWriter};
pub(crate) use binary::{decode_string_table, encode_string_table};
pub use jsonl::{read_stream_jsonl, write_stream_jsonl, JsonlStreamReader};

pub const MAGIC: [u8; 4] = *b"CTE1";
pub const VERSION: u16 = 1;
pub const DTYPE_F32: u8 = 0;

#[derive(Debug, Error)]
pub enum StreamError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic {0:?}, expected CTE1")]
    BadMagic([u8; 4]),
    #[error("unsupported stream version {0}")]
    UnsupportedVersion(u16),
    #[error("unsupported dtype {0}")]
    UnsupportedDtype(u8),
    #[error("invalid header: {0}")]
    InvalidHeader(String),
    #[error("stream truncated in {}", .block.map_or("header".to_string(), |b| format!("block {b}")))]
    Truncated { block: Option<usize> },
    #[error("block {block}: CRC mismatch (stored {stored:#010x}, computed {computed:#010x})")]
    Crc { block: usize, stored: u32, computed: u32 },
    #[error("block {block}: string ref {index} out of range (table has {size} entries)")]
    BadRef { block: usize, index: u32, size: usize },
    #[error("block {block}, token {token}: expected {expected} floats, found {found}")]
    VectorLength { block: usize, token: usize, expected: usize, found: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error("line {line}: {message}")]
    Json { line: usize, message: String },
    #[error("ragged layers: {0}")]
    Ragged(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StreamHeader {
    pub dim: u16,
    pub layer_count: u8,
    /// Doc ids, period labels and word surfaces referenced by blocks.
    pub strings: Vec<String>,
}

impl StreamHeader {
    pub fn validate(&self) -> Result<(), StreamError> {
        if self.dim == 0 {
            return Err(StreamError::InvalidHeader("dim must be at least 1".into()));
        }
        if self.layer_count == 0 {
            return Err(StreamError::InvalidHeader("layer_count must be at least 1".into()));
        }
        if self.strings.len() > u32::MAX as usize {
            return Err(StreamError::InvalidHeader("string table too large".into()));
        }
        if let Some(s) = self.strings.iter().find(|s| s.len() > u16::MAX as usize) {
            return Err(StreamError::InvalidHeader(format!(
                "string of {} bytes exceeds the u16 length prefix",
                s.len()
            )));
        }
        Ok(())
    }

    /// Floats per token record.
    pub fn floats_per_token(&self) -> usize {
        self.dim as usize * self.layer_count as usize
    }

    pub fn string(&self, index: u32) -> Option<&str> {
        self.strings.get(index as usize).map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TokenRecord {
    pub word_ref: u32,
    pub word_instance: u32,
    pub token_id: u32,
    /// `layer_count` consecutive runs of `dim` floats.
    pub vectors: Vec<f32>,
}

impl TokenRecord {
    pub fn layers(&self, dim: usize) -> std::slice::ChunksExact<'_, f32> {
        self.vectors.chunks_exact(dim)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceBlock {
    pub doc_ref: u32,
    pub period_ref: u32,
    pub tokens: Vec<TokenRecord>,
}

impl SequenceBlock {
    pub(crate) fn check(&self, header: &StreamHeader, block: usize) -> Result<(), StreamError> {
        let size = header.strings.len();
        let refs = [self.doc_ref, self.period_ref]
            .into_iter()
            .chain(self.tokens.iter().map(|t| t.word_ref));
        for index in refs {
            if index as usize >= size {
                return Err(StreamError::BadRef { block, index, size });
            }
        }
        let expected = header.floats_per_token();
        for (token, record) in self.tokens.iter().enumerate() {
            if record.vectors.len() != expected {
                return Err(StreamError::VectorLength {
                    block,
                    token,
                    expected,
                    found: record.vectors.len(),
                });
            }
        }
        Ok(())
    }
}

/// Elementwise sum of the layers, accumulated left to right in `f32`.
pub fn combine_layers(layers: &[&[f32]]) -> Result<Vec<f32>, StreamError> {
    let (first, rest) = layers
        .split_first()
        .ok_or_else(|| StreamError::Ragged("no layers given".into()))?;
    let mut out = first.to_vec();
    for (i, layer) in rest.iter().enumerate() {
        if layer.len() != out.len() {
            return Err(StreamError::Ragged(format!(
                "layer {} has {} components, layer 0 has {}",
                i + 1,
                layer.len(),
                out.len()
            )));
        }
        for (acc, x) in out.iter_mut().zip(layer.iter()) {
            *acc += x;
        }
    }
    Ok(out)
}

/// Either stream encoding, chosen by sniffing the first bytes.
pub enum AnyStreamReader<R: std::io::BufRead> {
    Binary(StreamReader<R>),
    Jsonl(JsonlStreamReader<R>),
}

impl<R: std::io::BufRead> AnyStreamReader<R> {
    pub fn header(&self) -> &StreamHeader {
        match self {
            Self::Binary(r) => r.header(),
            Self::Jsonl(r) => r.header(),
        }
    }
}

impl<R: std::io::BufRead> Iterator for AnyStreamReader<R> {
    type Item = Result<SequenceBlock, StreamError>;

    fn next(&mut self) -> Option<Self::Item> {
        match self {
            Self::Binary(r) => r.next(),
            Self::Jsonl(r) => r.next(),
        }
    }
}

/// Opens a stream file, accepting CTE1 or the JSON-lines debug codec.
pub fn open_stream(
    path: &std::path::Path,
    force_jsonl: bool,
) -> Result<AnyStreamReader<std::io::BufReader<std::fs::File>>, StreamError> {
    use std::io::{BufRead, BufReader};
    let mut file = BufReader::new(std::fs::File::open(path)?);
    let is_binary = !force_jsonl && file.fill_buf()?.starts_with(&MAGIC);
    if is_binary {
        Ok(AnyStreamReader::Binary(read_stream(file)?))
    } else {
        Ok(AnyStreamReader::Jsonl(read_stream_jsonl(file)?))
    }
}
