//! Binary file formats.
//!
//! GDE1 (embeddings), little-endian, no padding:
//!
//! ```text
//! "GDE1" | u32 version = 1 | u32 dim | u64 count | count x (u32 class_id, dim x f32)
//! ```
//!
//! GDM1 (dense f64 matrices), little-endian, row-major:
//!
//! ```text
//! "GDM1" | u32 version = 1 | u64 rows | u64 cols | rows*cols x f64
//! ```

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::dataset::EmbeddingRecord;
use crate::error::{Error, FormatError, Result};

pub const EMBEDDING_MAGIC: [u8; 4] = *b"GDE1";
pub const MATRIX_MAGIC: [u8; 4] = *b"GDM1";
pub const FORMAT_VERSION: u32 = 1;

const EMBEDDING_HEADER: usize = 4 + 4 + 4 + 8;
const MATRIX_HEADER: usize = 4 + 4 + 8 + 8;

pub fn write_embedding_file(path: &Path, dim: usize, records: &[EmbeddingRecord]) -> Result<()> {
    let bytes = encode_embeddings(dim, records).map_err(|e| Error::format(path, e))?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn encode_embeddings(dim: usize, records: &[EmbeddingRecord]) -> Result<Vec<u8>, FormatError> {
    let dim32 = u32::try_from(dim).map_err(|_| FormatError::DimensionMismatch {
        index: 0,
        expected: u32::MAX as usize,
        got: dim,
    })?;
    let mut out = Vec::with_capacity(EMBEDDING_HEADER + records.len() * (4 + 4 * dim));
    out.extend_from_slice(&EMBEDDING_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&dim32.to_le_bytes());
    out.extend_from_slice(&(records.len() as u64).to_le_bytes());
    for (index, rec) in records.iter().enumerate() {
        if rec.vector.len() != dim {
            return Err(FormatError::DimensionMismatch { index, expected: dim, got: rec.vector.len() });
        }
        out.extend_from_slice(&rec.class_id.to_le_bytes());
        for (j, v) in rec.vector.iter().enumerate() {
            if !v.is_finite() {
                return Err(FormatError::NonFinite((index * dim + j) as u64));
            }
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn read_embedding_file(path: &Path) -> Result<(usize, Vec<EmbeddingRecord>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_embeddings(&bytes).map_err(|e| Error::format(path, e))
}

pub fn decode_embeddings(bytes: &[u8]) -> Result<(usize, Vec<EmbeddingRecord>), FormatError> {
    check_header(bytes, EMBEDDING_MAGIC, EMBEDDING_HEADER)?;
    let dim = u32_at(bytes, 8) as usize;
    let count = u64_at(bytes, 12);
    let record_len = 4 + 4 * dim as u64;
    let declared =
        count.checked_mul(record_len).and_then(|n| n.checked_add(EMBEDDING_HEADER as u64)).unwrap_or(u64::MAX);
    check_payload(declared, bytes.len() as u64)?;

    let mut records = Vec::with_capacity(count as usize);
    let mut off = EMBEDDING_HEADER;
    for index in 0..count as usize {
        let class_id = u32_at(bytes, off);
        off += 4;
        let mut vector = Vec::with_capacity(dim);
        for j in 0..dim {
            let v = f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
            if !v.is_finite() {
                return Err(FormatError::NonFinite((index * dim + j) as u64));
            }
            vector.push(v);
            off += 4;
        }
        records.push(EmbeddingRecord { class_id, vector });
    }
    Ok((dim, records))
}

pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&encode_matrix(m)).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn encode_matrix(m: &DMatrix<f64>) -> Vec<u8> {
    let (rows, cols) = m.shape();
    let mut out = Vec::with_capacity(MATRIX_HEADER + rows * cols * 8);
    out.extend_from_slice(&MATRIX_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(rows as u64).to_le_bytes());
    out.extend_from_slice(&(cols as u64).to_le_bytes());
    for i in 0..rows {
        for j in 0..cols {
            out.extend_from_slice(&m[(i, j)].to_le_bytes());
        }
    }
    out
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_matrix(&bytes).map_err(|e| Error::format(path, e))
}

pub fn decode_matrix(bytes: &[u8]) -> Result<DMatrix<f64>, FormatError> {
    check_header(bytes, MATRIX_MAGIC, MATRIX_HEADER)?;
    let rows = u64_at(bytes, 8);
    let cols = u64_at(bytes, 16);
    let declared = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .and_then(|n| n.checked_add(MATRIX_HEADER as u64))
        .unwrap_or(u64::MAX);
    check_payload(declared, bytes.len() as u64)?;

    let (rows, cols) = (rows as usize, cols as usize);
    let mut data = Vec::with_capacity(rows * cols);
    for (k, chunk) in bytes[MATRIX_HEADER..].chunks_exact(8).enumerate() {
        let v = f64::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(FormatError::NonFinite(k as u64));
        }
        data.push(v);
    }
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

fn check_header(bytes: &[u8], magic: [u8; 4], header_len: usize) -> Result<(), FormatError> {
    if bytes.len() < 4 {
        return Err(FormatError::Truncated { declared: header_len as u64, available: bytes.len() as u64 });
    }
    let found: [u8; 4] = bytes[..4].try_into().unwrap();
    if found != magic {
        return Err(FormatError::BadMagic { expected: magic, found });
    }
    if bytes.len() < header_len {
        return Err(FormatError::Truncated { declared: header_len as u64, available: bytes.len() as u64 });
    }
    let version = u32_at(bytes, 4);
    if version != FORMAT_VERSION {
        return Err(FormatError::UnsupportedVersion(version));
    }
    Ok(())
}

fn check_payload(declared: u64, available: u64) -> Result<(), FormatError> {
    if available < declared {
        Err(FormatError::Truncated { declared, available })
    } else if available > declared {
        Err(FormatError::TrailingBytes(available - declared))
    } else {
        Ok(())
    }
}

fn u32_at(bytes: &[u8], off: usize) -> u32 {
    u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap())
}

fn u64_at(bytes: &[u8], off: usize) -> u64 {
    u64::from_le_bytes(bytes[off..off + 8].try_into().unwrap())
}
