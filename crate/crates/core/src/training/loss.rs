use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::config::Reduction;
use crate::error::{MeraError, Result};
use crate::numcore::{Matrix, Tape, Var};
use crate::rmf::{Modality, CREDIBILITY_CLAMP};

/// Epoch or step loss components; `total = bce + weight * reliability`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub bce: f64,
    pub reliability: f64,
    pub per_modality: BTreeMap<Modality, f64>,
}

impl LossBreakdown {
    pub(crate) fn accumulate(&mut self, other: &LossBreakdown) {
        self.total += other.total;
        self.bce += other.bce;
        self.reliability += other.reliability;
        for (m, v) in &other.per_modality {
            *self.per_modality.entry(*m).or_insert(0.0) += v;
        }
    }

    pub(crate) fn scaled(mut self, k: f64) -> LossBreakdown {
        self.total *= k;
        self.bce *= k;
        self.reliability *= k;
        self.per_modality.values_mut().for_each(|v| *v *= k);
        self
    }
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(MeraError::Dimension(format!(
            "{a} predictions for {b} labels"
        )));
    }
    if a == 0 {
        return Err(MeraError::EmptyInput("no residues".into()));
    }
    Ok(())
}

/// Mean binary cross-entropy, with probabilities clamped to `[1e-12, 1 - 1e-12]`.
pub fn bce_loss(y_hat: &[f64], y: &[u8]) -> Result<f64> {
    check_lengths(y_hat.len(), y.len())?;
    let sum: f64 = y_hat
        .iter()
        .zip(y)
        .map(|(&p, &l)| {
            let p = p.clamp(CREDIBILITY_CLAMP, 1.0 - CREDIBILITY_CLAMP);
            if l == 1 {
                p.ln()
            } else {
                (1.0 - p).ln()
            }
        })
        .sum();
    Ok(-sum / y_hat.len() as f64)
}

/// Squared error of one modality's bounded scores.
pub fn reliability_term(bounded: &[f64], y: &[u8], reduction: Reduction) -> Result<f64> {
    check_lengths(bounded.len(), y.len())?;
    let sum: f64 = bounded
        .iter()
        .zip(y)
        .map(|(&p, &l)| (p - f64::from(l)).powi(2))
        .sum();
    Ok(match reduction {
        Reduction::Mean => sum / bounded.len() as f64,
        Reduction::Sum => sum,
    })
}

/// Sum over modalities of [`reliability_term`].
pub fn reliability_loss(bounded: &[&[f64]], y: &[u8], reduction: Reduction) -> Result<f64> {
    bounded
        .iter()
        .map(|p| reliability_term(p, y, reduction))
        .sum()
}

/// Loss nodes recorded on a tape.
#[derive(Debug, Clone)]
pub struct LossVars {
    pub total: Var,
    pub bce: Var,
    pub reliability: Var,
    pub per_modality: Vec<(Modality, Var)>,
}

impl LossVars {
    pub fn read(&self, tape: &Tape) -> LossBreakdown {
        let s = |v: Var| tape.value(v).as_scalar().expect("scalar loss");
        LossBreakdown {
            total: s(self.total),
            bce: s(self.bce),
            reliability: s(self.reliability),
            per_modality: self.per_modality.iter().map(|&(m, v)| (m, s(v))).collect(),
        }
    }
}

/// Records `bce(probability, y) + weight * Σ_s reduce((p_s - y)^2)`.
pub fn loss_on_tape(
    tape: &mut Tape,
    probability: Var,
    bounded: &[(Modality, Var)],
    y: &[u8],
    weight: f64,
    reduction: Reduction,
) -> Result<LossVars> {
    let n = tape.value(probability).rows();
    check_lengths(n, y.len())?;
    let labels: Vec<f64> = y.iter().map(|&l| f64::from(l)).collect();
    let yv = tape.constant(Matrix::new(n, 1, labels.clone())?);
    let one_minus_y = tape.constant(Matrix::new(n, 1, labels.iter().map(|l| 1.0 - l).collect())?);

    let p = tape.clamp(probability, CREDIBILITY_CLAMP, 1.0 - CREDIBILITY_CLAMP)?;
    let ln_p = tape.ln(p)?;
    let neg_p = tape.scale(p, -1.0)?;
    let q = tape.add_scalar(neg_p, 1.0)?;
    let ln_q = tape.ln(q)?;
    let a = tape.mul(yv, ln_p)?;
    let b = tape.mul(one_minus_y, ln_q)?;
    let ll = tape.add(a, b)?;
    let mean_ll = tape.mean(ll)?;
    let bce = tape.scale(mean_ll, -1.0)?;

    let mut per_modality = Vec::with_capacity(bounded.len());
    let mut reliability = None;
    for &(m, ps) in bounded {
        let d = tape.sub(ps, yv)?;
        let sq = tape.mul(d, d)?;
        let term = match reduction {
            Reduction::Mean => tape.mean(sq)?,
            Reduction::Sum => tape.sum(sq)?,
        };
        per_modality.push((m, term));
        reliability = Some(match reliability {
            None => term,
            Some(acc) => tape.add(acc, term)?,
        });
    }
    let reliability = match reliability {
        Some(r) => r,
        None => tape.constant(Matrix::scalar(0.0)),
    };
    let weighted = tape.scale(reliability, weight)?;
    let total = tape.add(bce, weighted)?;
    Ok(LossVars {
        total,
        bce,
        reliability,
        per_modality,
    })
}
