//! AEMB v1 container.
//!
//! Little-endian layout:
//!
//! ```text
//! 0..4    magic "AEMB"
//! 4..8    u32 version (1)
//! 8..12   u32 rows
//! 12..16  u32 cols
//! ...     rows * cols f32, row-major
//! ...     u32 byte length, then UTF-8 backend id
//! ```

use std::io::{Read, Write};
use std::path::Path;

use super::EmbeddingMatrix;
use crate::error::{Error, Result};

pub const AEMB_MAGIC: &[u8; 4] = b"AEMB";
pub const AEMB_VERSION: u32 = 1;

const HEADER_LEN: usize = 16;

pub fn write_embeddings_to<W: Write>(matrix: &EmbeddingMatrix, mut w: W) -> Result<()> {
    let rows = u32::try_from(matrix.rows()).map_err(|_| overflow(matrix))?;
    let cols = u32::try_from(matrix.cols()).map_err(|_| overflow(matrix))?;
    let id = matrix.backend_id().as_bytes();
    let id_len = u32::try_from(id.len()).map_err(|_| Error::BadBackendId("too long".into()))?;

    let mut buf = Vec::with_capacity(HEADER_LEN + matrix.data().len() * 4 + 4 + id.len());
    buf.extend_from_slice(AEMB_MAGIC);
    buf.extend_from_slice(&AEMB_VERSION.to_le_bytes());
    buf.extend_from_slice(&rows.to_le_bytes());
    buf.extend_from_slice(&cols.to_le_bytes());
    for v in matrix.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf.extend_from_slice(&id_len.to_le_bytes());
    buf.extend_from_slice(id);
    w.write_all(&buf).map_err(|e| Error::io("writing AEMB", e))
}

fn overflow(m: &EmbeddingMatrix) -> Error {
    Error::DimensionOverflow {
        rows: m.rows() as u64,
        cols: m.cols() as u64,
    }
}

pub fn write_embeddings(matrix: &EmbeddingMatrix, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)
        .map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
    write_embeddings_to(matrix, std::io::BufWriter::new(file))
}

pub fn read_embeddings(path: &Path) -> Result<EmbeddingMatrix> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    read_embeddings_from(std::io::BufReader::new(file))
}

pub fn read_embeddings_from<R: Read>(mut r: R) -> Result<EmbeddingMatrix> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)
        .map_err(|e| Error::io("reading AEMB", e))?;
    decode(&bytes)
}

fn u32_at(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4-byte slice"))
}

fn decode(bytes: &[u8]) -> Result<EmbeddingMatrix> {
    if bytes.len() < 4 || &bytes[..4] != AEMB_MAGIC {
        return Err(Error::BadMagic);
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::Truncated(format!("header needs {HEADER_LEN} bytes, file has {}", bytes.len())));
    }
    let version = u32_at(bytes, 4);
    if version != AEMB_VERSION {
        return Err(Error::VersionMismatch(version));
    }
    let rows = u32_at(bytes, 8) as u64;
    let cols = u32_at(bytes, 12) as u64;
    let payload = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(4))
        .filter(|&n| n <= isize::MAX as u64)
        .ok_or(Error::DimensionOverflow { rows, cols })? as usize;

    let data_end = HEADER_LEN
        .checked_add(payload)
        .ok_or(Error::DimensionOverflow { rows, cols })?;
    if bytes.len() < data_end + 4 {
        return Err(Error::Truncated(format!(
            "{rows} x {cols} payload needs {} bytes, file has {}",
            data_end + 4,
            bytes.len()
        )));
    }
    let data: Vec<f32> = bytes[HEADER_LEN..data_end]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4-byte chunk")))
        .collect();
    let id_len = u32_at(bytes, data_end) as usize;
    let id_start = data_end + 4;
    if bytes.len() < id_start + id_len {
        return Err(Error::Truncated(format!(
            "backend id needs {id_len} bytes, {} remain",
            bytes.len() - id_start
        )));
    }
    if bytes.len() > id_start + id_len {
        return Err(Error::InvalidArgument(format!(
            "{} trailing bytes after AEMB payload",
            bytes.len() - id_start - id_len
        )));
    }
    let id = std::str::from_utf8(&bytes[id_start..])
        .map_err(|_| Error::BadBackendId("not valid UTF-8".into()))?;
    EmbeddingMatrix::new(rows as usize, cols as usize, data, id)
}
