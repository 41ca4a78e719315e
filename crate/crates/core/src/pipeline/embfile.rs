//! `MERAEMB1` embedding matrices and the raw label sidecar.

use std::path::Path;

use crate::codec::{ByteReader, ByteWriter};
use crate::error::{MeraError, Result};
use crate::numcore::Matrix;

pub const EMBEDDING_MAGIC: &[u8; 8] = b"MERAEMB1";
const VERSION: u8 = 1;

pub fn encode_embedding(m: &Matrix) -> Result<Vec<u8>> {
    let mut w = ByteWriter::new();
    w.bytes(EMBEDDING_MAGIC);
    w.u8(VERSION);
    w.len_u32(m.rows())?;
    w.len_u32(m.cols())?;
    w.f32_values(m);
    Ok(w.into_bytes())
}

pub fn decode_embedding(bytes: &[u8]) -> Result<Matrix> {
    let mut r = ByteReader::new(bytes);
    r.expect_magic(EMBEDDING_MAGIC)?;
    let at = r.offset();
    let version = r.u8("version")?;
    if version != VERSION {
        return Err(MeraError::format(
            at,
            format!("unsupported embedding version {version}"),
        ));
    }
    let rows = r.u32("rows")? as usize;
    let cols = r.u32("cols")? as usize;
    let m = r.f32_matrix(rows, cols, "embedding payload")?;
    if !r.is_at_end() {
        return Err(MeraError::format(
            r.offset(),
            format!(
                "{} bytes beyond the declared {rows}x{cols} payload",
                r.remaining()
            ),
        ));
    }
    Ok(m)
}

pub fn save_embedding(m: &Matrix, path: &Path) -> Result<()> {
    std::fs::write(path, encode_embedding(m)?).map_err(|e| MeraError::io(path, e))
}

pub fn load_embedding(path: &Path) -> Result<Matrix> {
    let bytes = std::fs::read(path).map_err(|e| MeraError::io(path, e))?;
    decode_embedding(&bytes).map_err(|e| match e {
        MeraError::Format { offset, message } => MeraError::Format {
            offset,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    })
}

/// One byte per residue, `0` or `1`.
pub fn save_labels(labels: &[u8], path: &Path) -> Result<()> {
    std::fs::write(path, labels).map_err(|e| MeraError::io(path, e))
}
