//! Multi-expert retrieval augmentation.
//!
//! Each expert reads one block of every retrieved neighbor (all residues, the
//! chain key, the active-site residues, or a named extra block), collapses it
//! to one vector per query residue, fuses those summaries with the query
//! residue itself, and a residue-wise gate mixes the experts into `h_rag`.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{MeraError, Result};
use crate::numcore::{dot, init_mlp2, mlp2_on_tape, softmax, Matrix, ParameterStore, Tape, Var};
use crate::store::{NeighborSet, ProteinRecord, Store};

pub const GATE_PREFIX: &str = "gate";

/// Which block of a neighbor record an expert reads.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ExpertKind {
    Seq,
    Chain,
    Act,
    /// A named extra residue block carried by each record.
    Extra(String),
}

impl ExpertKind {
    pub fn default_set() -> Vec<ExpertKind> {
        vec![ExpertKind::Seq, ExpertKind::Chain, ExpertKind::Act]
    }

    pub fn name(&self) -> &str {
        match self {
            ExpertKind::Seq => "seq",
            ExpertKind::Chain => "chain",
            ExpertKind::Act => "act",
            ExpertKind::Extra(n) => n,
        }
    }

    /// The block of `record` this expert attends over.
    pub fn block(&self, record: &ProteinRecord) -> Result<Matrix> {
        match self {
            ExpertKind::Seq => Ok(record.seq_emb().clone()),
            ExpertKind::Chain => Ok(record.chain_key().clone()),
            ExpertKind::Act => {
                let block = record.active_block()?;
                if block.rows() == 0 {
                    return Err(MeraError::Internal(format!(
                        "neighbor `{}` selects zero active residues",
                        record.id()
                    )));
                }
                Ok(block)
            }
            ExpertKind::Extra(name) => record.extra(name).cloned().ok_or_else(|| {
                MeraError::Ingestion(format!(
                    "neighbor `{}` has no `{name}` block for its expert",
                    record.id()
                ))
            }),
        }
    }
}

impl fmt::Display for ExpertKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExpertKind {
    type Err = MeraError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "seq" => ExpertKind::Seq,
            "chain" => ExpertKind::Chain,
            "act" => ExpertKind::Act,
            "" => return Err(MeraError::Config("empty expert name".into())),
            other
                if other
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') =>
            {
                ExpertKind::Extra(other.to_string())
            }
            other => return Err(MeraError::Config(format!("invalid expert name `{other}`"))),
        })
    }
}

impl TryFrom<String> for ExpertKind {
    type Error = MeraError;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ExpertKind> for String {
    fn from(k: ExpertKind) -> String {
        k.name().to_string()
    }
}

/// Softmax granularity of the expert gate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GateMode {
    /// One weight per (residue, expert, dimension), normalized across experts.
    #[default]
    PerDimension,
    /// One weight per (residue, expert).
    Scalar,
}

/// Expert output for one query protein.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpertOutput {
    pub kind: ExpertKind,
    pub matrix: Matrix,
}

/// Gate weights laid out as `n x (E * D)`: expert `e` owns columns `e*D..(e+1)*D`.
#[derive(Debug, Clone, PartialEq)]
pub struct GateWeights {
    pub experts: usize,
    pub dim: usize,
    pub values: Matrix,
}

impl GateWeights {
    pub fn get(&self, residue: usize, expert: usize, d: usize) -> f64 {
        self.values.get(residue, expert * self.dim + d)
    }

    pub fn residues(&self) -> usize {
        self.values.rows()
    }
}

/// Collapses one neighbor block into a single vector for one query residue.
///
/// Weights are a temperature softmax over raw dot products with the query.
pub fn intra_aggregate(query: &[f64], block: &Matrix, temperature: f64) -> Result<Vec<f64>> {
    if block.rows() == 0 {
        return Err(MeraError::EmptyInput("neighbor block has no rows".into()));
    }
    if block.cols() != query.len() {
        return Err(MeraError::Dimension(format!(
            "query residue has {} dims, neighbor block has {}",
            query.len(),
            block.cols()
        )));
    }
    let scores: Vec<f64> = block.iter_rows().map(|r| dot(query, r)).collect();
    let beta = softmax(&scores, temperature)?;
    Ok(weighted_rows(block.iter_rows(), &beta, query.len()))
}

/// Fuses neighbor summaries with the query residue, which sits at position 0.
pub fn inter_fuse(query: &[f64], summaries: &[Vec<f64>]) -> Result<Vec<f64>> {
    if let Some(bad) = summaries.iter().find(|s| s.len() != query.len()) {
        return Err(MeraError::Dimension(format!(
            "summary has {} dims, query has {}",
            bad.len(),
            query.len()
        )));
    }
    let candidates = || std::iter::once(query).chain(summaries.iter().map(Vec::as_slice));
    let scores: Vec<f64> = candidates().map(|c| dot(query, c)).collect();
    let gamma = softmax(&scores, 1.0)?;
    Ok(weighted_rows(candidates(), &gamma, query.len()))
}

fn weighted_rows<'a>(rows: impl Iterator<Item = &'a [f64]>, w: &[f64], dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; dim];
    for (row, &wk) in rows.zip(w) {
        for (o, v) in out.iter_mut().zip(row) {
            *o += wk * v;
        }
    }
    out
}

/// Runs one expert over every residue of the query.
pub fn expert_forward(
    kind: &ExpertKind,
    h_seq: &Matrix,
    neighbors: &[&ProteinRecord],
    temperature: f64,
) -> Result<ExpertOutput> {
    let blocks = neighbors
        .iter()
        .map(|r| kind.block(r))
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::with_capacity(h_seq.len());
    for q in h_seq.iter_rows() {
        let summaries = blocks
            .iter()
            .map(|b| intra_aggregate(q, b, temperature))
            .collect::<Result<Vec<_>>>()?;
        out.extend(inter_fuse(q, &summaries)?);
    }
    Ok(ExpertOutput {
        kind: kind.clone(),
        matrix: Matrix::new(h_seq.rows(), h_seq.cols(), out)?,
    })
}

/// Runs every configured expert against the records named in `neighbors`.
pub fn run_experts(
    experts: &[ExpertKind],
    h_seq: &Matrix,
    store: &Store,
    neighbors: &NeighborSet,
    temperature: f64,
) -> Result<Vec<ExpertOutput>> {
    let records: Vec<&ProteinRecord> = neighbors
        .entries
        .iter()
        .map(|n| store.record(n.index))
        .collect();
    experts
        .iter()
        .map(|k| expert_forward(k, h_seq, &records, temperature))
        .collect()
}

/// Width of the gate MLP output for `experts` experts of dimension `dim`.
pub fn gate_output_width(mode: GateMode, experts: usize, dim: usize) -> usize {
    match mode {
        GateMode::PerDimension => experts * dim,
        GateMode::Scalar => experts,
    }
}

pub fn init_gate<R: Rng>(
    params: &mut ParameterStore,
    mode: GateMode,
    experts: usize,
    dim: usize,
    hidden: usize,
    rng: &mut R,
) -> Result<()> {
    if experts == 0 {
        return Err(MeraError::Config("expert list is empty".into()));
    }
    init_mlp2(
        params,
        GATE_PREFIX,
        experts * dim,
        hidden,
        gate_output_width(mode, experts, dim),
        rng,
    )
}

fn check_expert_shapes(outputs: &[ExpertOutput]) -> Result<(usize, usize)> {
    let first = outputs
        .first()
        .ok_or_else(|| MeraError::Config("expert list is empty".into()))?;
    let shape = first.matrix.shape();
    if let Some(bad) = outputs.iter().find(|o| o.matrix.shape() != shape) {
        return Err(MeraError::Dimension(format!(
            "expert `{}` output is {:?}, expert `{}` output is {:?}",
            bad.kind,
            bad.matrix.shape(),
            first.kind,
            shape
        )));
    }
    Ok(shape)
}

/// Records the gate on `tape`; returns `(gate weights, h_rag)`.
pub fn moe_gate_on_tape(
    tape: &mut Tape,
    outputs: &[ExpertOutput],
    params: &ParameterStore,
    mode: GateMode,
) -> Result<(Var, Var)> {
    let (_, dim) = check_expert_shapes(outputs)?;
    let experts: Vec<Var> = outputs
        .iter()
        .map(|o| tape.constant(o.matrix.clone()))
        .collect();
    let stacked = tape.concat_cols(&experts)?;
    let logits = mlp2_on_tape(tape, stacked, params, GATE_PREFIX)?;
    let width = tape.value(logits).cols();
    let expected = gate_output_width(mode, experts.len(), dim);
    if width != expected {
        return Err(MeraError::Dimension(format!(
            "gate emits {width} columns, {} experts of width {dim} need {expected}",
            experts.len()
        )));
    }
    match mode {
        GateMode::PerDimension => {
            let gates = tape.group_softmax(logits, experts.len())?;
            let mut acc = None;
            for (e, &h) in experts.iter().enumerate() {
                let g = tape.slice_cols(gates, e * dim, dim)?;
                let term = tape.mul(g, h)?;
                acc = Some(match acc {
                    None => term,
                    Some(a) => tape.add(a, term)?,
                });
            }
            Ok((gates, acc.expect("non-empty expert list")))
        }
        GateMode::Scalar => {
            let gates = tape.softmax_rows(logits, 1.0)?;
            let mut acc = None;
            for (e, &h) in experts.iter().enumerate() {
                let g = tape.slice_cols(gates, e, 1)?;
                let term = tape.mul_col(h, g)?;
                acc = Some(match acc {
                    None => term,
                    Some(a) => tape.add(a, term)?,
                });
            }
            Ok((gates, acc.expect("non-empty expert list")))
        }
    }
}

/// Residue-wise mixture of expert outputs.
pub fn moe_gate(
    outputs: &[ExpertOutput],
    params: &ParameterStore,
    mode: GateMode,
) -> Result<(GateWeights, Matrix)> {
    let mut tape = Tape::new();
    let (gates, h_rag) = moe_gate_on_tape(&mut tape, outputs, params, mode)?;
    let (n, dim) = outputs[0].matrix.shape();
    let e = outputs.len();
    let raw = tape.value(gates);
    let values = match mode {
        GateMode::PerDimension => raw.clone(),
        GateMode::Scalar => {
            let mut data = Vec::with_capacity(n * e * dim);
            for r in 0..n {
                for k in 0..e {
                    data.extend(std::iter::repeat_n(raw.get(r, k), dim));
                }
            }
            Matrix::new(n, e * dim, data)?
        }
    };
    Ok((
        GateWeights {
            experts: e,
            dim,
            values,
        },
        tape.value(h_rag).clone(),
    ))
}

/// Drops expert `index` from a trained gate: its input rows from `W1` and its
/// output columns from `W2`/`b2`.
pub fn prune_gate_expert(
    params: &mut ParameterStore,
    mode: GateMode,
    experts: usize,
    dim: usize,
    index: usize,
) -> Result<()> {
    if experts < 2 || index >= experts {
        return Err(MeraError::Config(format!(
            "cannot remove expert {index} of {experts}"
        )));
    }
    let w1 = params.value(&format!("{GATE_PREFIX}.W1"))?;
    if w1.rows() != experts * dim {
        return Err(MeraError::Dimension(format!(
            "gate W1 has {} rows, expected {}",
            w1.rows(),
            experts * dim
        )));
    }
    let keep_rows: Vec<usize> = (0..experts * dim).filter(|r| r / dim != index).collect();
    let new_w1 = w1.select_rows(&keep_rows)?;

    let out_width = gate_output_width(mode, experts, dim);
    let keep_cols: Vec<usize> = (0..out_width)
        .filter(|&c| match mode {
            GateMode::PerDimension => c / dim != index,
            GateMode::Scalar => c != index,
        })
        .collect();
    let w2 = params.value(&format!("{GATE_PREFIX}.W2"))?;
    let b2 = params.value(&format!("{GATE_PREFIX}.b2"))?;
    let new_w2 = w2.transpose().select_rows(&keep_cols)?.transpose();
    let new_b2 = b2.transpose().select_rows(&keep_cols)?.transpose();

    params.replace(&format!("{GATE_PREFIX}.W1"), new_w1)?;
    params.replace(&format!("{GATE_PREFIX}.W2"), new_w2)?;
    params.replace(&format!("{GATE_PREFIX}.b2"), new_b2)?;
    Ok(())
}
