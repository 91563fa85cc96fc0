//! Binary encoder file.
//!
//! Layout, little endian:
//!
//! ```text
//! magic "ACEM" | version u32 | dim u64 | vocab_size u64 | min_count u64
//! vocab_size × { token_len u32 | token utf-8 bytes | count u64 }
//! input matrix  vocab_size × dim f64, row-major
//! output matrix vocab_size × dim f64, row-major
//! ```

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::{EmbeddingMatrix, TextEncError, TextEncoder, Vocabulary};

pub const ENCODER_MAGIC: [u8; 4] = *b"ACEM";
pub const ENCODER_VERSION: u32 = 1;

const MAX_TOKEN_BYTES: u32 = 1 << 16;

pub fn write_encoder<W: Write>(mut w: W, enc: &TextEncoder) -> Result<(), TextEncError> {
    let vocab = &enc.vocab;
    let emb = &enc.embeddings;
    w.write_all(&ENCODER_MAGIC)?;
    w.write_u32::<LittleEndian>(ENCODER_VERSION)?;
    w.write_u64::<LittleEndian>(emb.dim() as u64)?;
    w.write_u64::<LittleEndian>(vocab.len() as u64)?;
    w.write_u64::<LittleEndian>(vocab.min_count())?;
    for (tok, count) in vocab.tokens().iter().zip(vocab.counts()) {
        w.write_u32::<LittleEndian>(tok.len() as u32)?;
        w.write_all(tok.as_bytes())?;
        w.write_u64::<LittleEndian>(*count)?;
    }
    for x in emb.input().iter().chain(emb.output()) {
        w.write_f64::<LittleEndian>(*x)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_encoder<R: Read>(mut r: R) -> Result<TextEncoder, TextEncError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != ENCODER_MAGIC {
        return Err(TextEncError::Format("bad magic".into()));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != ENCODER_VERSION {
        return Err(TextEncError::Format(format!("unsupported version {version}")));
    }
    let dim = r.read_u64::<LittleEndian>()? as usize;
    let size = r.read_u64::<LittleEndian>()? as usize;
    let min_count = r.read_u64::<LittleEndian>()?;
    let mut entries = Vec::with_capacity(size.min(1 << 20));
    for _ in 0..size {
        let len = r.read_u32::<LittleEndian>()?;
        if len > MAX_TOKEN_BYTES {
            return Err(TextEncError::Format(format!("token length {len}")));
        }
        let mut buf = vec![0u8; len as usize];
        r.read_exact(&mut buf)?;
        let tok = String::from_utf8(buf)
            .map_err(|_| TextEncError::Format("token is not utf-8".into()))?;
        let count = r.read_u64::<LittleEndian>()?;
        entries.push((tok, count));
    }
    let cells = dim
        .checked_mul(size)
        .ok_or_else(|| TextEncError::Format("matrix too large".into()))?;
    let mut read_matrix = || -> Result<Vec<f64>, TextEncError> {
        let mut m = vec![0.0; cells];
        r.read_f64_into::<LittleEndian>(&mut m)?;
        Ok(m)
    };
    let input = read_matrix()?;
    let output = read_matrix()?;
    let embeddings = EmbeddingMatrix::from_parts(dim, size, input, output)?;
    Ok(TextEncoder::new(
        Vocabulary::from_ordered(entries, min_count),
        embeddings,
    ))
}
