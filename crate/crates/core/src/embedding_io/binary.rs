use std::io::{ErrorKind, Read, Write};

use super::{SequenceBlock, StreamError, StreamHeader, TokenRecord, DTYPE_F32, MAGIC, VERSION};

pub(crate) fn encode_string_table(out: &mut Vec<u8>, strings: &[String]) {
    out.extend_from_slice(&(strings.len() as u32).to_le_bytes());
    for s in strings {
        out.extend_from_slice(&(s.len() as u16).to_le_bytes());
        out.extend_from_slice(s.as_bytes());
    }
}

/// Maps an unexpected EOF to a truncation error at `block`.
fn read_exact_or_truncated<R: Read>(
    r: &mut R,
    buf: &mut [u8],
    block: Option<usize>,
) -> Result<(), StreamError> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        ErrorKind::UnexpectedEof => StreamError::Truncated { block },
        _ => StreamError::Io(e),
    })
}

fn read_u16<R: Read>(r: &mut R) -> Result<u16, StreamError> {
    let mut b = [0u8; 2];
    read_exact_or_truncated(r, &mut b, None)?;
    Ok(u16::from_le_bytes(b))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, StreamError> {
    let mut b = [0u8; 4];
    read_exact_or_truncated(r, &mut b, None)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn decode_string_table<R: Read>(r: &mut R) -> Result<Vec<String>, StreamError> {
    let count = read_u32(r)?;
    let mut strings = Vec::with_capacity(count.min(1 << 16) as usize);
    for _ in 0..count {
        let len = read_u16(r)? as usize;
        let mut bytes = vec![0u8; len];
        read_exact_or_truncated(r, &mut bytes, None)?;
        let s = String::from_utf8(bytes)
            .map_err(|e| StreamError::InvalidHeader(format!("string table entry: {e}")))?;
        strings.push(s);
    }
    Ok(strings)
}

/// Incremental CTE1 writer; the header is written on construction.
pub struct StreamWriter<W: Write> {
    sink: W,
    header: StreamHeader,
    blocks: usize,
    bytes: u64,
    buf: Vec<u8>,
}

impl<W: Write> StreamWriter<W> {
    pub fn new(header: StreamHeader, mut sink: W) -> Result<Self, StreamError> {
        header.validate()?;
        let mut buf = Vec::new();
        buf.extend_from_slice(&MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        buf.extend_from_slice(&header.dim.to_le_bytes());
        buf.push(header.layer_count);
        buf.push(DTYPE_F32);
        encode_string_table(&mut buf, &header.strings);
        sink.write_all(&buf)?;
        let bytes = buf.len() as u64;
        buf.clear();
        Ok(Self { sink, header, blocks: 0, bytes, buf })
    }

    pub fn write_block(&mut self, block: &SequenceBlock) -> Result<(), StreamError> {
        block.check(&self.header, self.blocks)?;
        let buf = &mut self.buf;
        buf.clear();
        buf.extend_from_slice(&block.doc_ref.to_le_bytes());
        buf.extend_from_slice(&block.period_ref.to_le_bytes());
        buf.extend_from_slice(&(block.tokens.len() as u32).to_le_bytes());
        for t in &block.tokens {
            buf.extend_from_slice(&t.word_ref.to_le_bytes());
            buf.extend_from_slice(&t.word_instance.to_le_bytes());
            buf.extend_from_slice(&t.token_id.to_le_bytes());
            for x in &t.vectors {
                buf.extend_from_slice(&x.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(buf);
        buf.extend_from_slice(&crc.to_le_bytes());
        self.sink.write_all(buf)?;
        self.bytes += buf.len() as u64;
        self.blocks += 1;
        Ok(())
    }

    /// Flushes and returns the total number of bytes written.
    pub fn finish(mut self) -> Result<u64, StreamError> {
        self.sink.flush()?;
        Ok(self.bytes)
    }
}

pub fn write_stream<'a, W, I>(header: &StreamHeader, blocks: I, sink: W) -> Result<u64, StreamError>
where
    W: Write,
    I: IntoIterator<Item = &'a SequenceBlock>,
{
    let mut writer = StreamWriter::new(header.clone(), sink)?;
    for block in blocks {
        writer.write_block(block)?;
    }
    writer.finish()
}

/// Lazy block reader. Each block is read with exact-length reads, so nothing
/// past the current block is consumed from the source.
pub struct StreamReader<R> {
    source: R,
    header: StreamHeader,
    next_block: usize,
    done: bool,
}

pub fn read_stream<R: Read>(mut source: R) -> Result<StreamReader<R>, StreamError> {
    let mut magic = [0u8; 4];
    read_exact_or_truncated(&mut source, &mut magic, None)?;
    if magic != MAGIC {
        return Err(StreamError::BadMagic(magic));
    }
    let version = read_u16(&mut source)?;
    if version != VERSION {
        return Err(StreamError::UnsupportedVersion(version));
    }
    let dim = read_u16(&mut source)?;
    let mut small = [0u8; 2];
    read_exact_or_truncated(&mut source, &mut small, None)?;
    let [layer_count, dtype] = small;
    if dtype != DTYPE_F32 {
        return Err(StreamError::UnsupportedDtype(dtype));
    }
    let strings = decode_string_table(&mut source)?;
    let header = StreamHeader { dim, layer_count, strings };
    header.validate()?;
    Ok(StreamReader { source, header, next_block: 0, done: false })
}

impl<R: Read> StreamReader<R> {
    pub fn header(&self) -> &StreamHeader {
        &self.header
    }

    pub fn into_inner(self) -> R {
        self.source
    }

    /// `Ok(None)` on a clean end of stream at a block boundary.
    fn read_block(&mut self) -> Result<Option<SequenceBlock>, StreamError> {
        let block = self.next_block;
        let mut head = [0u8; 12];
        let mut filled = 0;
        while filled < head.len() {
            match self.source.read(&mut head[filled..]) {
                Ok(0) if filled == 0 => return Ok(None),
                Ok(0) => return Err(StreamError::Truncated { block: Some(block) }),
                Ok(n) => filled += n,
                Err(e) if e.kind() == ErrorKind::Interrupted => {}
                Err(e) => return Err(e.into()),
            }
        }
        let word = |i: usize| u32::from_le_bytes(head[i..i + 4].try_into().unwrap());
        let token_count = word(8) as u64;
        let per_token = 12 + 4 * self.header.floats_per_token() as u64;

        // grow incrementally so a corrupted count cannot force a huge allocation
        let mut body = head.to_vec();
        let want = token_count * per_token;
        let got = (&mut self.source).take(want).read_to_end(&mut body)? as u64;
        if got < want {
            return Err(StreamError::Truncated { block: Some(block) });
        }
        let mut crc = [0u8; 4];
        read_exact_or_truncated(&mut self.source, &mut crc, Some(block))?;
        let stored = u32::from_le_bytes(crc);
        let computed = crc32fast::hash(&body);
        if stored != computed {
            return Err(StreamError::Crc { block, stored, computed });
        }

        let floats = self.header.floats_per_token();
        let tokens = body[12..]
            .chunks_exact(per_token as usize)
            .map(|rec| {
                let u = |i: usize| u32::from_le_bytes(rec[i..i + 4].try_into().unwrap());
                TokenRecord {
                    word_ref: u(0),
                    word_instance: u(4),
                    token_id: u(8),
                    vectors: rec[12..]
                        .chunks_exact(4)
                        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
                        .collect(),
                }
            })
            .collect::<Vec<_>>();
        debug_assert!(tokens.iter().all(|t| t.vectors.len() == floats));
        let block_value = SequenceBlock { doc_ref: word(0), period_ref: word(4), tokens };
        block_value.check(&self.header, block)?;
        self.next_block += 1;
        Ok(Some(block_value))
    }
}

impl<R: Read> Iterator for StreamReader<R> {
    type Item = Result<SequenceBlock, StreamError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let result = self.read_block().transpose();
        if !matches!(result, Some(Ok(_))) {
            self.done = true;
        }
        result
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header() -> StreamHeader {
        StreamHeader { dim: 2, layer_count: 1, strings: vec!["doc".into(), "p".into(), "w".into()] }
    }

    fn block(v: Vec<f32>) -> SequenceBlock {
        SequenceBlock {
            doc_ref: 0,
            period_ref: 1,
            tokens: vec![TokenRecord { word_ref: 2, word_instance: 0, token_id: 7, vectors: v }],
        }
    }

    #[test]
    fn single_block_round_trip() {
        let mut buf = Vec::new();
        let n = write_stream(&header(), &[block(vec![1.5, -2.0])], &mut buf).unwrap();
        assert_eq!(n as usize, buf.len());
        let reader = read_stream(buf.as_slice()).unwrap();
        assert_eq!(reader.header(), &header());
        let blocks: Vec<_> = reader.collect::<Result<_, _>>().unwrap();
        assert_eq!(blocks, vec![block(vec![1.5, -2.0])]);
    }

    #[test]
    fn header_only_stream() {
        let mut buf = Vec::new();
        write_stream(&header(), &[], &mut buf).unwrap();
        // magic, version, dim, layers, dtype, count, 3 x (len + bytes)
        assert_eq!(buf.len(), 4 + 2 + 2 + 1 + 1 + 4 + (2 + 3) + (2 + 1) + (2 + 1));
        assert_eq!(read_stream(buf.as_slice()).unwrap().count(), 0);
    }

    #[test]
    fn exact_header_bytes() {
        let h = StreamHeader { dim: 768, layer_count: 4, strings: vec!["ab".into()] };
        let mut buf = Vec::new();
        write_stream(&h, &[], &mut buf).unwrap();
        assert_eq!(buf, b"CTE1\x01\x00\x00\x03\x04\x00\x01\x00\x00\x00\x02\x00ab");
    }

    #[test]
    fn wrong_vector_length_is_rejected() {
        let err = write_stream(&header(), &[block(vec![1.0, 2.0, 3.0])], Vec::new()).unwrap_err();
        assert!(matches!(
            err,
            StreamError::VectorLength { block: 0, token: 0, expected: 2, found: 3 }
        ));
    }

    #[test]
    fn bad_magic_and_version() {
        assert!(matches!(read_stream(&b"CTE2\x01\x00"[..]), Err(StreamError::BadMagic(_))));
        assert!(matches!(
            read_stream(&b"CTE1\x02\x00\x02\x00\x01\x00\x00\x00\x00\x00"[..]),
            Err(StreamError::UnsupportedVersion(2))
        ));
        assert!(matches!(read_stream(&b"CTE1\x01"[..]), Err(StreamError::Truncated { block: None })));
    }

    #[test]
    fn corruption_and_truncation() {
        let mut buf = Vec::new();
        let blocks = [block(vec![1.0, 2.0]), block(vec![3.0, 4.0])];
        write_stream(&header(), &blocks, &mut buf).unwrap();
        let mut bad = buf.clone();
        let last_float = bad.len() - 5;
        bad[last_float] ^= 0x40;
        let results: Vec<_> = read_stream(bad.as_slice()).unwrap().collect();
        assert!(results[0].is_ok());
        assert!(matches!(results[1], Err(StreamError::Crc { block: 1, .. })));

        let short = &buf[..buf.len() - 2];
        let results: Vec<_> = read_stream(short).unwrap().collect();
        assert!(matches!(results[1], Err(StreamError::Truncated { block: Some(1) })));
    }

    struct CountingReader<'a> {
        data: &'a [u8],
        consumed: usize,
    }

    impl Read for CountingReader<'_> {
        fn read(&mut self, buf: &mut [u8]) -> std::io::Result<usize> {
            let n = self.data.read(buf)?;
            self.consumed += n;
            Ok(n)
        }
    }

    #[test]
    fn reading_stops_at_block_boundary() {
        let mut buf = Vec::new();
        let mut writer = StreamWriter::new(header(), &mut buf).unwrap();
        writer.write_block(&block(vec![1.0, 2.0])).unwrap();
        let header_len = {
            let mut h = Vec::new();
            write_stream(&header(), &[], &mut h).unwrap();
            h.len()
        };
        writer.write_block(&block(vec![3.0, 4.0])).unwrap();
        writer.write_block(&block(vec![5.0, 6.0])).unwrap();
        writer.finish().unwrap();
        let block_len = (buf.len() - header_len) / 3;

        let mut reader = read_stream(CountingReader { data: &buf, consumed: 0 }).unwrap();
        reader.next().unwrap().unwrap();
        assert_eq!(reader.into_inner().consumed, header_len + block_len);
    }
}
