use std::path::Path;

use super::config::Config;
use crate::codec::{ByteReader, ByteWriter};
use crate::error::{MeraError, Result};
use crate::numcore::ParameterStore;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"MERACKPT";
const VERSION: u8 = 1;

/// A trained model: its configuration and `f32`-rounded parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: Config,
    pub params: ParameterStore,
}

pub fn encode_checkpoint(ckpt: &Checkpoint) -> Result<Vec<u8>> {
    let mut w = ByteWriter::new();
    w.bytes(CHECKPOINT_MAGIC);
    w.u8(VERSION);
    w.string(&ckpt.config.to_toml()?)?;
    w.len_u32(ckpt.params.len())?;
    for (name, p) in ckpt.params.iter() {
        w.string(name)?;
        w.len_u32(p.value.rows())?;
        w.len_u32(p.value.cols())?;
        w.f32_values(&p.value);
    }
    Ok(w.into_bytes())
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = ByteReader::new(bytes);
    r.expect_magic(CHECKPOINT_MAGIC)?;
    let at = r.offset();
    let version = r.u8("version")?;
    if version != VERSION {
        return Err(MeraError::format(
            at,
            format!("unsupported checkpoint version {version}"),
        ));
    }
    let at = r.offset();
    let text = r.string("config")?;
    let config = Config::from_toml(&text).map_err(|e| MeraError::format(at, e.to_string()))?;
    let count = r.u32("parameter count")?;
    let mut params = ParameterStore::new();
    for _ in 0..count {
        let at = r.offset();
        let name = r.string("parameter name")?;
        let rows = r.u32("rows")? as usize;
        let cols = r.u32("cols")? as usize;
        let value = r.f32_matrix(rows, cols, "parameter values")?;
        params
            .insert(name, value)
            .map_err(|e| MeraError::format(at, e.to_string()))?;
    }
    if !r.is_at_end() {
        return Err(MeraError::format(
            r.offset(),
            "trailing bytes after checkpoint",
        ));
    }
    Ok(Checkpoint { config, params })
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    std::fs::write(path, encode_checkpoint(ckpt)?).map_err(|e| MeraError::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    decode_checkpoint(&std::fs::read(path).map_err(|e| MeraError::io(path, e))?)
}
