use std::collections::BTreeMap;

use crate::error::{MeraError, Result};
use crate::numcore::Matrix;

/// Column-wise mean of a protein's residue embeddings: its searchable key.
pub fn chain_key(seq_emb: &Matrix) -> Result<Matrix> {
    if seq_emb.rows() == 0 {
        return Err(MeraError::EmptyInput(
            "chain key of a protein with zero residues".into(),
        ));
    }
    seq_emb.column_mean()
}

/// One database entry.
#[derive(Debug, Clone, PartialEq)]
pub struct ProteinRecord {
    id: String,
    seq_emb: Matrix,
    chain_key: Matrix,
    active_indices: Vec<usize>,
    cluster_id: Option<String>,
    labels: Option<Vec<u8>>,
    extras: BTreeMap<String, Matrix>,
}

impl ProteinRecord {
    /// `active_indices` must be strictly increasing and in range. An empty
    /// list is accepted here and rejected when the store is built.
    pub fn new(
        id: impl Into<String>,
        seq_emb: Matrix,
        active_indices: Vec<usize>,
        cluster_id: Option<String>,
    ) -> Result<Self> {
        let id = id.into();
        let key = chain_key(&seq_emb)
            .map_err(|_| MeraError::Ingestion(format!("record `{id}` has no residues")))?;
        let n = seq_emb.rows();
        for w in active_indices.windows(2) {
            if w[0] >= w[1] {
                return Err(MeraError::Ingestion(format!(
                    "record `{id}`: active indices not strictly increasing ({} then {})",
                    w[0], w[1]
                )));
            }
        }
        if let Some(&last) = active_indices.last() {
            if last >= n {
                return Err(MeraError::Ingestion(format!(
                    "record `{id}`: active index {last} out of range for {n} residues"
                )));
            }
        }
        Ok(ProteinRecord {
            id,
            seq_emb,
            chain_key: key,
            active_indices,
            cluster_id,
            labels: None,
            extras: BTreeMap::new(),
        })
    }

    /// Derives the active indices from a binary label vector.
    pub fn from_labels(
        id: impl Into<String>,
        seq_emb: Matrix,
        labels: Vec<u8>,
        cluster_id: Option<String>,
    ) -> Result<Self> {
        let id = id.into();
        if labels.len() != seq_emb.rows() {
            return Err(MeraError::Ingestion(format!(
                "record `{id}`: {} labels for {} residues",
                labels.len(),
                seq_emb.rows()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l > 1) {
            return Err(MeraError::Ingestion(format!(
                "record `{id}`: label {bad} is not binary"
            )));
        }
        let active = labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == 1)
            .map(|(i, _)| i)
            .collect();
        let mut rec = ProteinRecord::new(id, seq_emb, active, cluster_id)?;
        rec.labels = Some(labels);
        Ok(rec)
    }

    /// Attaches a named extra residue block (e.g. for a peptide expert).
    pub fn with_extra(mut self, name: impl Into<String>, block: Matrix) -> Result<Self> {
        let name = name.into();
        if block.cols() != self.dim() {
            return Err(MeraError::Dimension(format!(
                "record `{}`: extra block `{name}` has {} columns, embeddings have {}",
                self.id,
                block.cols(),
                self.dim()
            )));
        }
        if block.rows() == 0 {
            return Err(MeraError::Ingestion(format!(
                "record `{}`: extra block `{name}` is empty",
                self.id
            )));
        }
        self.extras.insert(name, block);
        Ok(self)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn seq_emb(&self) -> &Matrix {
        &self.seq_emb
    }

    pub fn chain_key(&self) -> &Matrix {
        &self.chain_key
    }

    pub fn active_indices(&self) -> &[usize] {
        &self.active_indices
    }

    pub fn cluster_id(&self) -> Option<&str> {
        self.cluster_id.as_deref()
    }

    pub fn labels(&self) -> Option<&[u8]> {
        self.labels.as_deref()
    }

    pub fn extra(&self, name: &str) -> Option<&Matrix> {
        self.extras.get(name)
    }

    pub fn extras(&self) -> &BTreeMap<String, Matrix> {
        &self.extras
    }

    pub fn dim(&self) -> usize {
        self.seq_emb.cols()
    }

    pub fn len(&self) -> usize {
        self.seq_emb.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.seq_emb.rows() == 0
    }

    /// Residue embeddings at the active sites.
    pub fn active_block(&self) -> Result<Matrix> {
        self.seq_emb.select_rows(&self.active_indices)
    }
}
