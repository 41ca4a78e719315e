//! Residue-level evaluation metrics.

mod calibration;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

pub use calibration::{
    calibration_report, spearman, CalibrationBin, CalibrationPoint, CalibrationReport,
    ModalityCalibration,
};

use crate::error::{MeraError, Result};

/// Scores and labels of one protein.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub id: String,
    pub scores: Vec<f64>,
    pub labels: Vec<u8>,
}

impl EvalRecord {
    pub fn new(id: impl Into<String>, scores: Vec<f64>, labels: Vec<u8>) -> Result<Self> {
        let id = id.into();
        if scores.is_empty() || scores.len() != labels.len() {
            return Err(MeraError::Dimension(format!(
                "record `{id}`: {} scores and {} labels",
                scores.len(),
                labels.len()
            )));
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(MeraError::Evaluation(format!(
                "record `{id}` has a non-finite score"
            )));
        }
        Ok(EvalRecord { id, scores, labels })
    }

    fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }
}

/// How Hits@k scores a protein.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum HitsMode {
    /// 1 when any true site is among the top k.
    #[default]
    Any,
    /// Fraction of the protein's true sites among the top k.
    Recall,
}

/// How F1 counts are aggregated across proteins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum FmaxMode {
    /// Pooled confusion counts.
    #[default]
    Micro,
    /// Mean of per-protein F1 at each threshold.
    Macro,
}

fn pooled(records: &[EvalRecord]) -> (Vec<f64>, Vec<u8>) {
    let scores = records
        .iter()
        .flat_map(|r| r.scores.iter().copied())
        .collect();
    let labels = records
        .iter()
        .flat_map(|r| r.labels.iter().copied())
        .collect();
    (scores, labels)
}

/// Indices sorted by score, descending; equal scores keep input order.
fn order_desc(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    idx
}

/// F1 from confusion counts; 0 when undefined.
pub fn f1_from_counts(tp: usize, fp: usize, fn_: usize) -> f64 {
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        0.0
    } else {
        (2 * tp) as f64 / denom as f64
    }
}

/// Maximum F1 over thresholds taken from the distinct scores; residues with
/// `score >= threshold` are predicted positive. Returns the smallest
/// threshold reaching the maximum.
pub fn fmax(records: &[EvalRecord], mode: FmaxMode) -> Result<(f64, f64)> {
    let (scores, labels) = pooled(records);
    let total_pos = labels.iter().filter(|&&l| l == 1).count();
    if total_pos == 0 {
        return Err(MeraError::UndefinedMetric(
            "F_max needs at least one positive".into(),
        ));
    }
    match mode {
        FmaxMode::Micro => {
            let order = order_desc(&scores);
            let (mut tp, mut fp) = (0usize, 0usize);
            let mut best = (f64::NEG_INFINITY, f64::NAN);
            let mut i = 0;
            while i < order.len() {
                let t = scores[order[i]];
                while i < order.len() && scores[order[i]] == t {
                    if labels[order[i]] == 1 {
                        tp += 1;
                    } else {
                        fp += 1;
                    }
                    i += 1;
                }
                let f = f1_from_counts(tp, fp, total_pos - tp);
                if f >= best.0 {
                    best = (f, t);
                }
            }
            Ok(best)
        }
        FmaxMode::Macro => {
            let mut thresholds = scores.clone();
            thresholds.sort_by(|a, b| b.total_cmp(a));
            thresholds.dedup();
            let per_protein: Vec<(Vec<(f64, u8)>, usize)> = records
                .iter()
                .map(|r| {
                    let mut v: Vec<(f64, u8)> = r
                        .scores
                        .iter()
                        .copied()
                        .zip(r.labels.iter().copied())
                        .collect();
                    v.sort_by(|a, b| b.0.total_cmp(&a.0));
                    (v, r.positives())
                })
                .collect();
            let mut best = (f64::NEG_INFINITY, f64::NAN);
            for &t in &thresholds {
                let mut sum = 0.0;
                for (v, pos) in &per_protein {
                    let above = v.partition_point(|(s, _)| *s >= t);
                    let tp = v[..above].iter().filter(|(_, l)| *l == 1).count();
                    sum += f1_from_counts(tp, above - tp, pos - tp);
                }
                let f = sum / per_protein.len() as f64;
                if f >= best.0 {
                    best = (f, t);
                }
            }
            Ok(best)
        }
    }
}

/// Average precision with pessimistic ties: every positive in a group of
/// equal scores gets the precision at the end of its group.
pub fn auprc(records: &[EvalRecord]) -> Result<f64> {
    let (scores, labels) = pooled(records);
    let total_pos = labels.iter().filter(|&&l| l == 1).count();
    if total_pos == 0 {
        return Err(MeraError::UndefinedMetric(
            "AUPRC needs at least one positive".into(),
        ));
    }
    let order = order_desc(&scores);
    let mut precision_at = vec![0.0; scores.len()];
    let (mut tp, mut seen) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let start = i;
        let t = scores[order[i]];
        while i < order.len() && scores[order[i]] == t {
            tp += usize::from(labels[order[i]] == 1);
            seen += 1;
            i += 1;
        }
        let p = tp as f64 / seen as f64;
        for &j in &order[start..i] {
            precision_at[j] = p;
        }
    }
    // Summed in input order.
    let sum: f64 = (0..scores.len())
        .filter(|&j| labels[j] == 1)
        .map(|j| precision_at[j])
        .sum();
    Ok(sum / total_pos as f64)
}

/// `P(score_pos > score_neg) + P(equal) / 2`, from exact pair counts.
pub fn auroc(records: &[EvalRecord]) -> Result<f64> {
    let (scores, labels) = pooled(records);
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(MeraError::UndefinedMetric(
            "AUROC needs both positive and negative residues".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Twice the Mann-Whitney U, kept integral.
    let mut twice_u: u128 = 0;
    let mut neg_below: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let t = scores[order[i]];
        let (mut p_g, mut n_g) = (0u128, 0u128);
        while i < order.len() && scores[order[i]] == t {
            if labels[order[i]] == 1 {
                p_g += 1;
            } else {
                n_g += 1;
            }
            i += 1;
        }
        twice_u += p_g * (2 * neg_below + n_g);
        neg_below += n_g;
    }
    Ok(twice_u as f64 / (2 * pos as u128 * neg as u128) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl Confusion {
    pub fn at(records: &[EvalRecord], threshold: f64) -> Self {
        let mut c = Confusion::default();
        for r in records {
            for (&s, &l) in r.scores.iter().zip(&r.labels) {
                match (s >= threshold, l == 1) {
                    (true, true) => c.tp += 1,
                    (true, false) => c.fp += 1,
                    (false, false) => c.tn += 1,
                    (false, true) => c.fn_ += 1,
                }
            }
        }
        c
    }

    /// Matthews correlation; 0 when any marginal is empty.
    pub fn mcc(&self) -> f64 {
        let (tp, fp, tn, fn_) = (
            self.tp as f64,
            self.fp as f64,
            self.tn as f64,
            self.fn_ as f64,
        );
        let denom = (tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_);
        if denom == 0.0 {
            0.0
        } else {
            (tp * tn - fp * fn_) / denom.sqrt()
        }
    }
}

/// MCC with `score >= threshold` predicted positive.
pub fn mcc(records: &[EvalRecord], threshold: f64) -> f64 {
    Confusion::at(records, threshold).mcc()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HitsResult {
    pub value: f64,
    pub proteins: usize,
    /// Proteins without any positive residue.
    pub skipped: usize,
}

/// Per-protein top-k hit rate, ties broken by ascending residue index.
pub fn hits_at_k(records: &[EvalRecord], k: usize, mode: HitsMode) -> Result<HitsResult> {
    if k < 1 {
        return Err(MeraError::Parameter("k must be at least 1".into()));
    }
    let mut total = 0.0;
    let (mut proteins, mut skipped) = (0, 0);
    for r in records {
        let pos = r.positives();
        if pos == 0 {
            skipped += 1;
            continue;
        }
        let order = order_desc(&r.scores);
        let hits = order.iter().take(k).filter(|&&i| r.labels[i] == 1).count();
        total += match mode {
            HitsMode::Any => f64::from(u8::from(hits > 0)),
            HitsMode::Recall => hits as f64 / pos as f64,
        };
        proteins += 1;
    }
    if proteins == 0 {
        return Err(MeraError::UndefinedMetric(
            "Hits@k needs at least one protein with a positive residue".into(),
        ));
    }
    Ok(HitsResult {
        value: total / proteins as f64,
        proteins,
        skipped,
    })
}

pub const HITS_KS: [usize; 3] = [1, 5, 10];

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalOptions {
    pub hits_mode: HitsMode,
    pub fmax_mode: FmaxMode,
    /// MCC threshold; the F_max threshold when absent.
    pub mcc_threshold: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub fmax: f64,
    pub threshold_at_fmax: f64,
    pub auprc: f64,
    pub auroc: f64,
    pub mcc: f64,
    pub mcc_threshold: f64,
    pub hits: BTreeMap<String, f64>,
    pub hits_mode: HitsMode,
    pub fmax_mode: FmaxMode,
    pub proteins: usize,
    pub residues: usize,
    pub positives: usize,
    pub proteins_without_positives: usize,
}

impl MetricReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "fmax = {:.6}", self.fmax);
        let _ = writeln!(s, "threshold_at_fmax = {:.6}", self.threshold_at_fmax);
        let _ = writeln!(s, "auprc = {:.6}", self.auprc);
        let _ = writeln!(s, "auroc = {:.6}", self.auroc);
        let _ = writeln!(s, "mcc = {:.6}", self.mcc);
        let _ = writeln!(s, "mcc_threshold = {:.6}", self.mcc_threshold);
        for k in HITS_KS {
            let key = format!("hits@{k}");
            let _ = writeln!(s, "{key} = {:.6}", self.hits[&key]);
        }
        let _ = writeln!(
            s,
            "hits_mode = {}",
            match self.hits_mode {
                HitsMode::Any => "any",
                HitsMode::Recall => "recall",
            }
        );
        let _ = writeln!(
            s,
            "fmax_mode = {}",
            match self.fmax_mode {
                FmaxMode::Micro => "micro",
                FmaxMode::Macro => "macro",
            }
        );
        let _ = writeln!(s, "proteins = {}", self.proteins);
        let _ = writeln!(s, "residues = {}", self.residues);
        let _ = writeln!(s, "positives = {}", self.positives);
        let _ = writeln!(
            s,
            "proteins_without_positives = {}",
            self.proteins_without_positives
        );
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Computes every metric over `records`.
pub fn evaluate(records: &[EvalRecord], options: &EvalOptions) -> Result<MetricReport> {
    let (fmax_value, threshold) = fmax(records, options.fmax_mode)?;
    let mcc_threshold = options.mcc_threshold.unwrap_or(threshold);
    let mut hits = BTreeMap::new();
    let mut skipped = 0;
    for k in HITS_KS {
        let h = hits_at_k(records, k, options.hits_mode)?;
        skipped = h.skipped;
        hits.insert(format!("hits@{k}"), h.value);
    }
    Ok(MetricReport {
        fmax: fmax_value,
        threshold_at_fmax: threshold,
        auprc: auprc(records)?,
        auroc: auroc(records)?,
        mcc: mcc(records, mcc_threshold),
        mcc_threshold,
        hits,
        hits_mode: options.hits_mode,
        fmax_mode: options.fmax_mode,
        proteins: records.len(),
        residues: records.iter().map(|r| r.scores.len()).sum(),
        positives: records.iter().map(|r| r.positives()).sum(),
        proteins_without_positives: skipped,
    })
}
