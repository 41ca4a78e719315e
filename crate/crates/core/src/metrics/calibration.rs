//! Error rate as a function of per-modality reliability, for confident residues.

use serde::{Deserialize, Serialize};

use crate::error::{MeraError, Result};
use crate::rmf::Modality;

/// One residue: fused probability, label, and the reliability of each
/// modality that took part in its prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationPoint {
    pub probability: f64,
    pub label: u8,
    pub reliability: Vec<(Modality, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub errors: usize,
    pub error_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalityCalibration {
    pub modality: Modality,
    pub residues: usize,
    pub bins: Vec<CalibrationBin>,
    pub nonempty_bins: usize,
    /// Rank correlation of bin index and error rate over non-empty bins;
    /// `None` with fewer than two.
    pub spearman: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub band: f64,
    pub bins: usize,
    pub confident_residues: usize,
    pub tables: Vec<ModalityCalibration>,
}

impl CalibrationReport {
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "# band={} bins={} confident_residues={}\n",
            self.band, self.bins, self.confident_residues
        );
        for t in &self.tables {
            s.push_str(&format!(
                "# modality={} residues={} nonempty_bins={} spearman={}\n",
                t.modality.name(),
                t.residues,
                t.nonempty_bins,
                t.spearman.map_or("NA".to_string(), |v| format!("{v:.6}"))
            ));
            s.push_str("modality\tbin\tlo\thi\tcount\terrors\terror_rate\n");
            for (i, b) in t.bins.iter().enumerate() {
                s.push_str(&format!(
                    "{}\t{i}\t{:.6}\t{:.6}\t{}\t{}\t{}\n",
                    t.modality.name(),
                    b.lo,
                    b.hi,
                    b.count,
                    b.errors,
                    b.error_rate.map_or("NA".to_string(), |v| format!("{v:.6}"))
                ));
            }
        }
        s
    }
}

/// Bins confident residues (`p >= band` or `p <= 1 - band`) by each
/// modality's reliability over the observed range and reports the error rate
/// of the 0.5-thresholded prediction per bin.
pub fn calibration_report(
    points: &[CalibrationPoint],
    band: f64,
    bins: usize,
) -> Result<CalibrationReport> {
    if !(0.5..=1.0).contains(&band) {
        return Err(MeraError::Parameter(format!(
            "band must lie in [0.5, 1], got {band}"
        )));
    }
    if bins == 0 {
        return Err(MeraError::Parameter("bin count must be at least 1".into()));
    }
    let confident: Vec<&CalibrationPoint> = points
        .iter()
        .filter(|p| p.probability >= band || p.probability <= 1.0 - band)
        .collect();
    let mut tables = Vec::new();
    for m in Modality::ALL {
        let rows: Vec<(f64, bool)> = confident
            .iter()
            .filter_map(|p| {
                p.reliability
                    .iter()
                    .find(|(mm, _)| *mm == m)
                    .map(|&(_, u)| (u, (p.probability >= 0.5) != (p.label == 1)))
            })
            .collect();
        if rows.is_empty() {
            continue;
        }
        let lo = rows.iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
        let hi = rows.iter().map(|r| r.0).fold(f64::NEG_INFINITY, f64::max);
        let width = (hi - lo) / bins as f64;
        let mut table: Vec<CalibrationBin> = (0..bins)
            .map(|i| CalibrationBin {
                lo: lo + width * i as f64,
                hi: if i + 1 == bins {
                    hi
                } else {
                    lo + width * (i + 1) as f64
                },
                count: 0,
                errors: 0,
                error_rate: None,
            })
            .collect();
        for &(u, wrong) in &rows {
            let i = if width > 0.0 {
                (((u - lo) / width) as usize).min(bins - 1)
            } else {
                0
            };
            table[i].count += 1;
            table[i].errors += usize::from(wrong);
        }
        for b in &mut table {
            if b.count > 0 {
                b.error_rate = Some(b.errors as f64 / b.count as f64);
            }
        }
        let (xs, ys): (Vec<f64>, Vec<f64>) = table
            .iter()
            .enumerate()
            .filter_map(|(i, b)| b.error_rate.map(|e| (i as f64, e)))
            .unzip();
        tables.push(ModalityCalibration {
            modality: m,
            residues: rows.len(),
            nonempty_bins: xs.len(),
            spearman: (xs.len() >= 2).then(|| spearman(&xs, &ys)),
            bins: table,
        });
    }
    Ok(CalibrationReport {
        band,
        bins,
        confident_residues: confident.len(),
        tables,
    })
}

fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties; 0 when either
/// side has no variance.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        cov += (a - mx) * (b - my);
        vx += (a - mx) * (a - mx);
        vy += (b - my) * (b - my);
    }
    if vx == 0.0 || vy == 0.0 {
        0.0
    } else {
        cov / (vx * vy).sqrt()
    }
}
