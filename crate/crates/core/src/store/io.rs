use std::path::Path;

use super::{build_store, ProteinRecord, Store};
use crate::codec::{ByteReader, ByteWriter};
use crate::error::{MeraError, Result};

pub const STORE_MAGIC: &[u8; 8] = b"MERASTO1";
/// Base layout.
const VERSION_BASE: u8 = 1;
/// Base layout followed, per record, by named extra residue blocks.
const VERSION_EXTRAS: u8 = 2;

pub fn encode_store(store: &Store) -> Result<Vec<u8>> {
    let with_extras = store.records().iter().any(|r| !r.extras().is_empty());
    let mut w = ByteWriter::new();
    w.bytes(STORE_MAGIC);
    w.u8(if with_extras {
        VERSION_EXTRAS
    } else {
        VERSION_BASE
    });
    w.len_u32(store.len())?;
    for rec in store.records() {
        w.string(rec.id())?;
        w.len_u32(rec.dim())?;
        w.len_u32(rec.len())?;
        w.f32_values(rec.seq_emb());
        w.len_u32(rec.active_indices().len())?;
        for &i in rec.active_indices() {
            w.len_u32(i)?;
        }
        w.string(rec.cluster_id().unwrap_or(""))?;
        if with_extras {
            w.len_u32(rec.extras().len())?;
            for (name, block) in rec.extras() {
                w.string(name)?;
                w.len_u32(block.rows())?;
                w.f32_values(block);
            }
        }
    }
    Ok(w.into_bytes())
}

pub fn decode_store(bytes: &[u8]) -> Result<Store> {
    let mut r = ByteReader::new(bytes);
    r.expect_magic(STORE_MAGIC)?;
    let at = r.offset();
    let version = r.u8("version")?;
    if version != VERSION_BASE && version != VERSION_EXTRAS {
        return Err(MeraError::format(
            at,
            format!("unsupported store version {version}"),
        ));
    }
    let count = r.u32("record count")? as usize;
    let mut records = Vec::new();
    for _ in 0..count {
        let at = r.offset();
        let id = r.string("record id")?;
        let dim = r.u32("dimension")? as usize;
        let n_seq = r.u32("residue count")? as usize;
        let seq = r.f32_matrix(n_seq, dim, "residue embeddings")?;
        let n_act = r.u32("active count")? as usize;
        if n_act > r.remaining() / 4 {
            return Err(MeraError::format(r.offset(), "truncated active indices"));
        }
        let mut active = Vec::with_capacity(n_act);
        for _ in 0..n_act {
            active.push(r.u32("active index")? as usize);
        }
        let cluster = r.string("cluster id")?;
        let cluster = (!cluster.is_empty()).then_some(cluster);
        let mut rec = ProteinRecord::new(id, seq, active, cluster)
            .map_err(|e| MeraError::format(at, e.to_string()))?;
        if version == VERSION_EXTRAS {
            let n_extra = r.u32("extra block count")?;
            for _ in 0..n_extra {
                let name = r.string("extra block name")?;
                let rows = r.u32("extra block rows")? as usize;
                let block = r.f32_matrix(rows, dim, "extra block")?;
                rec = rec
                    .with_extra(name, block)
                    .map_err(|e| MeraError::format(at, e.to_string()))?;
            }
        }
        records.push(rec);
    }
    if !r.is_at_end() {
        return Err(MeraError::format(
            r.offset(),
            format!("{} trailing bytes after last record", r.remaining()),
        ));
    }
    build_store(records)
}

pub fn save_store(store: &Store, path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode_store(store)?;
    std::fs::write(path.as_ref(), bytes).map_err(|e| MeraError::io(path, e))
}

pub fn load_store(path: impl AsRef<Path>) -> Result<Store> {
    let bytes = std::fs::read(path.as_ref()).map_err(|e| MeraError::io(&path, e))?;
    decode_store(&bytes)
}
