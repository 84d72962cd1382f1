//! EMB1 binary embedding files.
//!
//! Layout (little-endian, no padding, no footer):
//!
//! ```text
//! offset  size  field
//!      0     4  magic "EMB1"
//!      4     1  format version (1)
//!      5     1  prompt type (0..=5)
//!      6     2  reserved, must be 0
//!      8     4  n_rows (u32)
//!     12     4  n_cols (u32)
//!     16   4·n  payload, f32 row-major
//! ```

use std::fs;
use std::path::Path;

use super::{EmbeddingMatrix, PromptType};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub const MAGIC: &[u8; 4] = b"EMB1";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 16;

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingMatrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut emb = decode(&bytes).map_err(|(offset, reason)| Error::Format {
        path: path.to_path_buf(),
        offset,
        reason,
    })?;
    emb.source_tag = path.display().to_string();
    Ok(emb)
}

pub fn save_embeddings(x: &EmbeddingMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode(x)?;
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Serializes to EMB1 bytes. Values are narrowed to f32; a value whose
/// magnitude overflows f32 is rejected.
pub fn encode(x: &EmbeddingMatrix) -> Result<Vec<u8>> {
    let m = &x.matrix;
    let rows = u32::try_from(m.rows())
        .map_err(|_| Error::Contract(format!("{} rows exceed the u32 header field", m.rows())))?;
    let cols = u32::try_from(m.cols())
        .map_err(|_| Error::Contract(format!("{} cols exceed the u32 header field", m.cols())))?;
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * m.as_slice().len());
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(x.prompt_type.code());
    out.extend_from_slice(&0u16.to_le_bytes());
    out.extend_from_slice(&rows.to_le_bytes());
    out.extend_from_slice(&cols.to_le_bytes());
    for (i, &v) in m.as_slice().iter().enumerate() {
        let f = v as f32;
        if !f.is_finite() {
            return Err(Error::Degenerate(format!(
                "value {v} at row {}, col {} does not fit in f32",
                i / m.cols(),
                i % m.cols()
            )));
        }
        out.extend_from_slice(&f.to_le_bytes());
    }
    Ok(out)
}

/// Parses EMB1 bytes; errors carry the offending byte offset.
pub fn decode(bytes: &[u8]) -> std::result::Result<EmbeddingMatrix, (u64, String)> {
    if bytes.len() < HEADER_LEN {
        return Err((
            bytes.len() as u64,
            format!("truncated header: {} of {HEADER_LEN} bytes", bytes.len()),
        ));
    }
    if &bytes[0..4] != MAGIC {
        return Err((0, format!("bad magic {:?}", &bytes[0..4])));
    }
    if bytes[4] != VERSION {
        return Err((4, format!("unsupported format version {}", bytes[4])));
    }
    let prompt_type = PromptType::from_code(bytes[5])
        .ok_or_else(|| (5, format!("unknown prompt type code {}", bytes[5])))?;
    let reserved = u16::from_le_bytes([bytes[6], bytes[7]]);
    if reserved != 0 {
        return Err((6, format!("reserved field is {reserved}, expected 0")));
    }
    let rows = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    if rows == 0 {
        return Err((8, "zero rows".into()));
    }
    if cols == 0 {
        return Err((12, "zero columns".into()));
    }
    let expected = (rows as u64) * (cols as u64) * 4 + HEADER_LEN as u64;
    let actual = bytes.len() as u64;
    if actual < expected {
        return Err((
            actual,
            format!(
                "truncated payload: header declares {rows}x{cols} ({} floats), found {}",
                rows * cols,
                (actual - HEADER_LEN as u64) / 4
            ),
        ));
    }
    if actual > expected {
        return Err((expected, format!("{} trailing bytes after payload", actual - expected)));
    }
    let mut data = Vec::with_capacity(rows * cols);
    for (i, chunk) in bytes[HEADER_LEN..].chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err((
                (HEADER_LEN + 4 * i) as u64,
                format!("non-finite value {v} at row {}, col {}", i / cols, i % cols),
            ));
        }
        data.push(v as f64);
    }
    let matrix = Matrix::new(rows, cols, data).map_err(|e| (HEADER_LEN as u64, e.to_string()))?;
    Ok(EmbeddingMatrix::new(matrix, prompt_type))
}
