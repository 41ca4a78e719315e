//! The protein vector database: exact top-K cosine retrieval over chain keys.

mod io;
mod record;

use std::cmp::Ordering;
use std::collections::HashSet;

pub use io::{decode_store, encode_store, load_store, save_store, STORE_MAGIC};
pub use record::{chain_key, ProteinRecord};

use crate::error::{MeraError, Result};
use crate::numcore::{dot, Matrix};

/// One retrieved record.
#[derive(Debug, Clone, PartialEq)]
pub struct Neighbor {
    /// Position of the record in its [`Store`].
    pub index: usize,
    pub id: String,
    pub similarity: f64,
}

/// Top-K neighbors of one query, sorted by similarity descending, ties by
/// ascending record id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NeighborSet {
    pub query_id: String,
    pub entries: Vec<Neighbor>,
}

impl NeighborSet {
    pub fn empty(query_id: impl Into<String>) -> Self {
        NeighborSet {
            query_id: query_id.into(),
            entries: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.id.as_str()).collect()
    }
}

/// Immutable, exact-scan vector database.
#[derive(Debug, Clone, Default)]
pub struct Store {
    records: Vec<ProteinRecord>,
    /// Unit-normalized chain keys, parallel to `records`.
    unit_keys: Vec<Vec<f64>>,
    has_clusters: bool,
}

/// Builds a store, rejecting duplicate ids, records without active sites,
/// and zero-norm keys.
pub fn build_store(records: Vec<ProteinRecord>) -> Result<Store> {
    let mut seen = HashSet::new();
    let mut dim = None;
    let mut unit_keys = Vec::with_capacity(records.len());
    for rec in &records {
        if !seen.insert(rec.id().to_string()) {
            return Err(MeraError::Build(format!(
                "duplicate record id `{}`",
                rec.id()
            )));
        }
        if rec.active_indices().is_empty() {
            return Err(MeraError::Ingestion(format!(
                "record `{}` has no active sites",
                rec.id()
            )));
        }
        match dim {
            None => dim = Some(rec.dim()),
            Some(d) if d != rec.dim() => {
                return Err(MeraError::Dimension(format!(
                    "record `{}` has dimension {}, store has {d}",
                    rec.id(),
                    rec.dim()
                )))
            }
            _ => {}
        }
        unit_keys.push(unit(rec.chain_key().data()).ok_or_else(|| {
            MeraError::Norm(format!("record `{}` has a zero-norm chain key", rec.id()))
        })?);
    }
    let has_clusters = records.iter().any(|r| r.cluster_id().is_some());
    Ok(Store {
        records,
        unit_keys,
        has_clusters,
    })
}

fn unit(v: &[f64]) -> Option<Vec<f64>> {
    let norm = dot(v, v).sqrt();
    (norm > 0.0 && norm.is_finite()).then(|| v.iter().map(|x| x / norm).collect())
}

/// Cosine similarity of two equal-length vectors, clamped to [-1, 1].
pub fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    let (ua, ub) = (unit(a)?, unit(b)?);
    Some(dot(&ua, &ub).clamp(-1.0, 1.0))
}

impl Store {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.records.first().map(|r| r.dim())
    }

    pub fn records(&self) -> &[ProteinRecord] {
        &self.records
    }

    pub fn record(&self, index: usize) -> &ProteinRecord {
        &self.records[index]
    }

    pub fn get(&self, id: &str) -> Option<&ProteinRecord> {
        self.records.iter().find(|r| r.id() == id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.get(id).is_some()
    }

    /// Top-`k` records by cosine similarity of chain keys.
    ///
    /// `exclude_id` removes the query's own record. `cluster_id` restricts the
    /// scan to records of that cluster, but only when the store's records carry
    /// cluster ids at all.
    pub fn retrieve(
        &self,
        query_key: &Matrix,
        k: usize,
        exclude_id: Option<&str>,
        cluster_id: Option<&str>,
    ) -> Result<NeighborSet> {
        if k == 0 {
            return Err(MeraError::Parameter("K must be at least 1".into()));
        }
        if self.records.is_empty() {
            return Err(MeraError::Retrieval("store is empty".into()));
        }
        let dim = self.records[0].dim();
        if query_key.rows() != 1 || query_key.cols() != dim {
            return Err(MeraError::Dimension(format!(
                "query key is {}x{}, store keys are 1x{dim}",
                query_key.rows(),
                query_key.cols()
            )));
        }
        let q = unit(query_key.data())
            .ok_or_else(|| MeraError::Norm("query key has zero norm".into()))?;
        let restrict = cluster_id.filter(|_| self.has_clusters);

        let mut scored: Vec<(usize, f64)> = self
            .records
            .iter()
            .enumerate()
            .filter(|(_, r)| exclude_id != Some(r.id()))
            .filter(|(_, r)| restrict.is_none_or(|c| r.cluster_id() == Some(c)))
            .map(|(i, _)| (i, dot(&q, &self.unit_keys[i]).clamp(-1.0, 1.0)))
            .collect();
        if scored.is_empty() {
            return Err(MeraError::Retrieval(format!(
                "no eligible records for query `{}`",
                exclude_id.unwrap_or("")
            )));
        }
        scored.sort_by(|a, b| {
            neighbor_order((self.records[a.0].id(), a.1), (self.records[b.0].id(), b.1))
        });
        scored.truncate(k);
        Ok(NeighborSet {
            query_id: exclude_id.unwrap_or_default().to_string(),
            entries: scored
                .into_iter()
                .map(|(index, similarity)| Neighbor {
                    index,
                    id: self.records[index].id().to_string(),
                    similarity,
                })
                .collect(),
        })
    }
}

/// Ordering used by retrieval: similarity descending, then id ascending.
pub fn neighbor_order(a: (&str, f64), b: (&str, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0))
}
