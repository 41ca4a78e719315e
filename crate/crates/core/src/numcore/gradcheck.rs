use super::params::ParameterStore;
use super::tape::{Tape, Var};
use crate::error::{MeraError, Result};

/// Pre-activations closer to zero than this count as sitting on a ReLU kink.
const KINK_BAND: f64 = 1e-7;
/// Floor of the relative-error denominator.
const DENOM_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Worst `|fd - analytic| / max(|analytic|, 1e-8)` over compared coordinates.
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
    /// Coordinates whose probes straddled a ReLU kink.
    pub skipped_kinks: usize,
}

/// Compares reverse-mode gradients against central differences, one
/// coordinate at a time.
///
/// `f` must rebuild the scalar loss on the supplied tape from the supplied
/// parameters.
pub fn finite_diff_check<F>(params: &ParameterStore, step: f64, f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &ParameterStore) -> Result<Var>,
{
    if !(step > 0.0) || !step.is_finite() {
        return Err(MeraError::Parameter(format!(
            "step must be positive, got {step}"
        )));
    }
    let mut tape = Tape::new();
    let loss = f(&mut tape, params)?;
    let analytic = tape.gradients(loss)?;

    let probe = |p: &ParameterStore| -> Result<(f64, Vec<f64>)> {
        let mut t = Tape::new();
        let l = f(&mut t, p)?;
        let v = t
            .scalar(l)
            .ok_or_else(|| MeraError::Contract("loss is not a scalar".into()))?;
        if !v.is_finite() {
            return Err(MeraError::Evaluation(format!(
                "non-finite loss {v} while probing"
            )));
        }
        Ok((v, t.relu_preactivations()))
    };

    let mut work = params.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
        skipped_kinks: 0,
    };
    let names: Vec<String> = params.names().map(str::to_string).collect();
    for name in names {
        let zeros;
        let grad = match analytic.param(&name) {
            Some(g) => g,
            None => {
                let (r, c) = params.value(&name)?.shape();
                zeros = super::Matrix::zeros(r, c);
                &zeros
            }
        };
        for idx in 0..grad.len() {
            let original = params.value(&name)?.data()[idx];
            work.get_mut(&name)?.value.data_mut()[idx] = original + step;
            let (plus, relu_plus) = probe(&work)?;
            work.get_mut(&name)?.value.data_mut()[idx] = original - step;
            let (minus, relu_minus) = probe(&work)?;
            work.get_mut(&name)?.value.data_mut()[idx] = original;

            if crosses_kink(&relu_plus, &relu_minus) {
                report.skipped_kinks += 1;
                continue;
            }
            let fd = (plus - minus) / (2.0 * step);
            let an = grad.data()[idx];
            let rel = (fd - an).abs() / an.abs().max(DENOM_FLOOR);
            report.checked += 1;
            if report.worst.is_none() || rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = Some((name.clone(), idx));
            }
        }
    }
    Ok(report)
}

fn crosses_kink(plus: &[f64], minus: &[f64]) -> bool {
    if plus.len() != minus.len() {
        return true;
    }
    plus.iter().zip(minus).any(|(&p, &m)| {
        p != m && ((p > 0.0) != (m > 0.0) || p.abs() < KINK_BAND || m.abs() < KINK_BAND)
    })
}
