//! Reliability-aware multimodal fusion.
//!
//! Every modality gets its own prediction head. Per residue, the bounded head
//! scores become evidence masses, masses become credibility coefficients, the
//! normalized binary entropy of each credibility is its reliability indicator
//! `u` (lower is more reliable), and `softmax(-u)` weights the raw head scores
//! inside the final sigmoid.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{MeraError, Result};
use crate::numcore::{
    init_mlp2, mlp2_forward, mlp2_on_tape, sigmoid, softmax, Matrix, ParameterStore, Tape, Var,
};

/// Credibility is clamped into `[CLAMP, 1 - CLAMP]` before taking logarithms.
pub const CREDIBILITY_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Seq,
    Rag,
    Text,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::Seq, Modality::Rag, Modality::Text];

    pub fn name(self) -> &'static str {
        match self {
            Modality::Seq => "seq",
            Modality::Rag => "rag",
            Modality::Text => "text",
        }
    }

    pub fn head_prefix(self) -> String {
        format!("head.{}", self.name())
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Modality {
    type Err = MeraError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "seq" => Ok(Modality::Seq),
            "rag" => Ok(Modality::Rag),
            "text" => Ok(Modality::Text),
            other => Err(MeraError::Config(format!(
                "unknown modality `{other}` (expected seq, rag or text)"
            ))),
        }
    }
}

pub fn init_head<R: Rng>(
    params: &mut ParameterStore,
    modality: Modality,
    dim: usize,
    hidden: usize,
    rng: &mut R,
) -> Result<()> {
    init_mlp2(params, &modality.head_prefix(), dim, hidden, 1, rng)
}

/// Raw scores `z` and bounded scores `sigmoid(z)` of one modality head.
pub fn head_forward(
    modality: Modality,
    h: &Matrix,
    params: &ParameterStore,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let z = mlp2_forward(h, params, &modality.head_prefix())?;
    if z.cols() != 1 {
        return Err(MeraError::Dimension(format!(
            "head `{modality}` emits {} columns, expected 1",
            z.cols()
        )));
    }
    let raw = z.into_data();
    let bounded = raw.iter().map(|&v| sigmoid(v)).collect();
    Ok((raw, bounded))
}

/// Softmax of bounded scores across modalities.
pub fn evidence_mass(bounded: &[f64]) -> Result<Vec<f64>> {
    softmax(bounded, 1.0)
}

/// `c_s = (m_s + 1 - max_{s' != s} m_s') / 2`.
/// A lone modality has credibility 1.
pub fn credibility(masses: &[f64]) -> Vec<f64> {
    if masses.len() == 1 {
        return vec![1.0];
    }
    (0..masses.len())
        .map(|s| {
            let others = masses
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != s)
                .map(|(_, &m)| m)
                .fold(f64::NEG_INFINITY, f64::max);
            0.5 * (masses[s] + 1.0 - others)
        })
        .collect()
}

/// Normalized binary entropy of a credibility, with `0 ln 0 = 0`.
pub fn reliability(c: f64) -> f64 {
    let xlnx = |x: f64| if x <= 0.0 { 0.0 } else { x * x.ln() };
    -(xlnx(c) + xlnx(1.0 - c)) / std::f64::consts::LN_2
}

/// `softmax(-u)` across modalities.
pub fn fusion_weights(u: &[f64]) -> Result<Vec<f64>> {
    let neg: Vec<f64> = u.iter().map(|v| -v).collect();
    softmax(&neg, 1.0)
}

/// Sigmoid of the weighted sum of raw scores.
pub fn fuse(raw: &[f64], weights: &[f64]) -> f64 {
    sigmoid(raw.iter().zip(weights).map(|(z, e)| z * e).sum())
}

/// Every per-residue fusion quantity, `n x S` with columns in `modalities` order.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalityBundle {
    pub modalities: Vec<Modality>,
    pub raw: Matrix,
    pub bounded: Matrix,
    pub mass: Matrix,
    pub credibility: Matrix,
    pub reliability: Matrix,
    pub weight: Matrix,
}

impl ModalityBundle {
    pub fn column(&self, modality: Modality) -> Option<usize> {
        self.modalities.iter().position(|&m| m == modality)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionBundle {
    /// Final probabilities, strictly inside (0, 1).
    pub probabilities: Vec<f64>,
    pub modalities: ModalityBundle,
}

/// Tape handles of one fusion pass.
#[derive(Debug, Clone)]
pub struct RmfVars {
    pub modalities: Vec<Modality>,
    pub raw: Var,
    pub bounded: Var,
    pub mass: Var,
    pub credibility: Var,
    pub reliability: Var,
    pub weight: Var,
    /// Pre-sigmoid fused score, `n x 1`.
    pub logit: Var,
    pub probability: Var,
    /// Per-modality bounded scores, `n x 1` each.
    pub bounded_columns: Vec<Var>,
}

/// Records heads and fusion on `tape`. `inputs` pairs each active modality
/// with its representation; order is canonicalized.
pub fn rmf_on_tape(
    tape: &mut Tape,
    inputs: &[(Modality, Var)],
    params: &ParameterStore,
) -> Result<RmfVars> {
    if inputs.is_empty() {
        return Err(MeraError::Config(
            "at least one modality must be active".into(),
        ));
    }
    let mut inputs = inputs.to_vec();
    inputs.sort_by_key(|(m, _)| *m);
    if inputs.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(MeraError::Config("modality listed twice".into()));
    }
    let n = tape.value(inputs[0].1).rows();
    if let Some((m, v)) = inputs.iter().find(|(_, v)| tape.value(*v).rows() != n) {
        return Err(MeraError::Dimension(format!(
            "modality `{m}` has {} residues, `{}` has {n}",
            tape.value(*v).rows(),
            inputs[0].0
        )));
    }

    let mut raw_cols = Vec::with_capacity(inputs.len());
    let mut bounded_cols = Vec::with_capacity(inputs.len());
    for &(m, h) in &inputs {
        let z = mlp2_on_tape(tape, h, params, &m.head_prefix())?;
        if tape.value(z).cols() != 1 {
            return Err(MeraError::Dimension(format!(
                "head `{m}` emits {} columns, expected 1",
                tape.value(z).cols()
            )));
        }
        raw_cols.push(z);
        bounded_cols.push(tape.sigmoid(z)?);
    }
    let modalities: Vec<Modality> = inputs.iter().map(|(m, _)| *m).collect();
    let raw = tape.concat_cols(&raw_cols)?;
    let bounded = tape.concat_cols(&bounded_cols)?;

    if modalities.len() == 1 {
        let ones = tape.constant(Matrix::filled(n, 1, 1.0));
        let zeros = tape.constant(Matrix::zeros(n, 1));
        let probability = tape.sigmoid(raw)?;
        return Ok(RmfVars {
            modalities,
            raw,
            bounded,
            mass: ones,
            credibility: ones,
            reliability: zeros,
            weight: ones,
            logit: raw,
            probability,
            bounded_columns: bounded_cols,
        });
    }

    let mass = tape.softmax_rows(bounded, 1.0)?;
    let others = tape.max_others(mass)?;
    let c = tape.sub(mass, others)?;
    let c = tape.add_scalar(c, 1.0)?;
    let credibility = tape.scale(c, 0.5)?;

    let c = tape.clamp(credibility, CREDIBILITY_CLAMP, 1.0 - CREDIBILITY_CLAMP)?;
    let ln_c = tape.ln(c)?;
    let a = tape.mul(c, ln_c)?;
    let neg_c = tape.scale(c, -1.0)?;
    let one_minus = tape.add_scalar(neg_c, 1.0)?;
    let ln_one_minus = tape.ln(one_minus)?;
    let b = tape.mul(one_minus, ln_one_minus)?;
    let ent = tape.add(a, b)?;
    let reliability = tape.scale(ent, -1.0 / std::f64::consts::LN_2)?;

    let neg_u = tape.scale(reliability, -1.0)?;
    let weight = tape.softmax_rows(neg_u, 1.0)?;
    let weighted = tape.mul(weight, raw)?;
    let logit = tape.row_sum(weighted)?;
    let probability = tape.sigmoid(logit)?;
    Ok(RmfVars {
        modalities,
        raw,
        bounded,
        mass,
        credibility,
        reliability,
        weight,
        logit,
        probability,
        bounded_columns: bounded_cols,
    })
}

/// Keeps probabilities strictly inside (0, 1) once a logit saturates `f64`.
pub fn clamp_probability(p: f64) -> f64 {
    p.clamp(CREDIBILITY_CLAMP, 1.0 - CREDIBILITY_CLAMP)
}

/// Extracts the bundle recorded by [`rmf_on_tape`].
pub fn read_bundle(tape: &Tape, vars: &RmfVars) -> PredictionBundle {
    PredictionBundle {
        probabilities: tape
            .value(vars.probability)
            .data()
            .iter()
            .map(|&p| clamp_probability(p))
            .collect(),
        modalities: ModalityBundle {
            modalities: vars.modalities.clone(),
            raw: tape.value(vars.raw).clone(),
            bounded: tape.value(vars.bounded).clone(),
            mass: tape.value(vars.mass).clone(),
            credibility: tape.value(vars.credibility).clone(),
            reliability: tape.value(vars.reliability).clone(),
            weight: tape.value(vars.weight).clone(),
        },
    }
}

/// Heads plus fusion for every residue. `representations` holds the active
/// modalities only.
pub fn rmf_forward(
    representations: &[(Modality, &Matrix)],
    params: &ParameterStore,
) -> Result<PredictionBundle> {
    let mut tape = Tape::new();
    let inputs: Vec<(Modality, Var)> = representations
        .iter()
        .map(|(m, h)| (*m, tape.constant((*h).clone())))
        .collect();
    let vars = rmf_on_tape(&mut tape, &inputs, params)?;
    Ok(read_bundle(&tape, &vars))
}
