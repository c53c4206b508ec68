//! JSON-lines debug encoding of a CTE1 stream: one header object, then one
//! object per block with vectors as float arrays.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{SequenceBlock, StreamError, StreamHeader, TokenRecord, DTYPE_F32, VERSION};

#[derive(Serialize, Deserialize)]
struct HeaderLine {
    magic: String,
    version: u16,
    dim: u16,
    layer_count: u8,
    dtype: u8,
    strings: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct TokenLine {
    word_ref: u32,
    word_instance: u32,
    token_id: u32,
    vectors: Vec<Vec<f32>>,
}

#[derive(Serialize, Deserialize)]
struct BlockLine {
    doc_ref: u32,
    period_ref: u32,
    tokens: Vec<TokenLine>,
}

fn json_err(line: usize, e: impl std::fmt::Display) -> StreamError {
    StreamError::Json { line, message: e.to_string() }
}

pub fn write_stream_jsonl<'a, W, I>(
    header: &StreamHeader,
    blocks: I,
    mut sink: W,
) -> Result<(), StreamError>
where
    W: Write,
    I: IntoIterator<Item = &'a SequenceBlock>,
{
    header.validate()?;
    let head = HeaderLine {
        magic: "CTE1".into(),
        version: VERSION,
        dim: header.dim,
        layer_count: header.layer_count,
        dtype: DTYPE_F32,
        strings: header.strings.clone(),
    };
    serde_json::to_writer(&mut sink, &head).map_err(|e| json_err(1, e))?;
    sink.write_all(b"\n")?;
    let dim = header.dim as usize;
    for (i, block) in blocks.into_iter().enumerate() {
        block.check(header, i)?;
        let line = BlockLine {
            doc_ref: block.doc_ref,
            period_ref: block.period_ref,
            tokens: block
                .tokens
                .iter()
                .map(|t| TokenLine {
                    word_ref: t.word_ref,
                    word_instance: t.word_instance,
                    token_id: t.token_id,
                    vectors: t.layers(dim).map(<[f32]>::to_vec).collect(),
                })
                .collect(),
        };
        serde_json::to_writer(&mut sink, &line).map_err(|e| json_err(i + 2, e))?;
        sink.write_all(b"\n")?;
    }
    sink.flush()?;
    Ok(())
}

pub struct JsonlStreamReader<R> {
    lines: std::io::Lines<R>,
    header: StreamHeader,
    line_no: usize,
    next_block: usize,
    done: bool,
}

pub fn read_stream_jsonl<R: BufRead>(source: R) -> Result<JsonlStreamReader<R>, StreamError> {
    let mut lines = source.lines();
    let first = lines.next().ok_or(StreamError::Truncated { block: None })??;
    let head: HeaderLine = serde_json::from_str(&first).map_err(|e| json_err(1, e))?;
    if head.magic != "CTE1" {
        let mut magic = [0u8; 4];
        for (dst, src) in magic.iter_mut().zip(head.magic.bytes()) {
            *dst = src;
        }
        return Err(StreamError::BadMagic(magic));
    }
    if head.version != VERSION {
        return Err(StreamError::UnsupportedVersion(head.version));
    }
    if head.dtype != DTYPE_F32 {
        return Err(StreamError::UnsupportedDtype(head.dtype));
    }
    let header = StreamHeader { dim: head.dim, layer_count: head.layer_count, strings: head.strings };
    header.validate()?;
    Ok(JsonlStreamReader { lines, header, line_no: 1, next_block: 0, done: false })
}

impl<R: BufRead> JsonlStreamReader<R> {
    pub fn header(&self) -> &StreamHeader {
        &self.header
    }

    fn parse(&self, line: &str) -> Result<SequenceBlock, StreamError> {
        let raw: BlockLine = serde_json::from_str(line).map_err(|e| json_err(self.line_no, e))?;
        let dim = self.header.dim as usize;
        let mut tokens = Vec::with_capacity(raw.tokens.len());
        for (token, t) in raw.tokens.into_iter().enumerate() {
            let found: usize = t.vectors.iter().map(Vec::len).sum();
            if t.vectors.len() != self.header.layer_count as usize
                || t.vectors.iter().any(|v| v.len() != dim)
            {
                return Err(StreamError::VectorLength {
                    block: self.next_block,
                    token,
                    expected: self.header.floats_per_token(),
                    found,
                });
            }
            tokens.push(TokenRecord {
                word_ref: t.word_ref,
                word_instance: t.word_instance,
                token_id: t.token_id,
                vectors: t.vectors.concat(),
            });
        }
        let block = SequenceBlock { doc_ref: raw.doc_ref, period_ref: raw.period_ref, tokens };
        block.check(&self.header, self.next_block)?;
        Ok(block)
    }
}

impl<R: BufRead> Iterator for JsonlStreamReader<R> {
    type Item = Result<SequenceBlock, StreamError>;

    fn next(&mut self) -> Option<Self::Item> {
        while !self.done {
            let line = match self.lines.next()? {
                Ok(line) => line,
                Err(e) => {
                    self.done = true;
                    return Some(Err(e.into()));
                }
            };
            self.line_no += 1;
            if line.trim().is_empty() {
                continue;
            }
            let result = self.parse(&line);
            match result {
                Ok(_) => self.next_block += 1,
                Err(_) => self.done = true,
            }
            return Some(result);
        }
        None
    }
}
