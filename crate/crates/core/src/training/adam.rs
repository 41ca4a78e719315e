use crate::error::{MeraError, Result};
use crate::numcore::ParameterStore;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamSettings {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamSettings {
    fn default() -> Self {
        AdamSettings {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// One bias-corrected Adam update over every parameter, then zeroes the
/// gradients. Nothing is modified when a gradient is non-finite.
pub fn adam_step(params: &mut ParameterStore, s: &AdamSettings) -> Result<()> {
    if let Some((name, _)) = params
        .iter()
        .find(|(_, p)| p.grad.data().iter().any(|g| !g.is_finite()))
    {
        return Err(MeraError::Training(format!(
            "non-finite gradient in `{name}`"
        )));
    }
    let t = params.advance_step() as i32;
    let c1 = 1.0 - s.beta1.powi(t);
    let c2 = 1.0 - s.beta2.powi(t);
    for (_, p) in params.iter_mut() {
        let grads = p.grad.data().to_vec();
        let m = p.first_moment.data_mut();
        for (mi, g) in m.iter_mut().zip(&grads) {
            *mi = s.beta1 * *mi + (1.0 - s.beta1) * g;
        }
        let v = p.second_moment.data_mut();
        for (vi, g) in v.iter_mut().zip(&grads) {
            *vi = s.beta2 * *vi + (1.0 - s.beta2) * g * g;
        }
        let m = p.first_moment.data().to_vec();
        let v = p.second_moment.data().to_vec();
        for ((w, mi), vi) in p.value.data_mut().iter_mut().zip(&m).zip(&v) {
            let m_hat = mi / c1;
            let v_hat = vi / c2;
            *w -= s.learning_rate * m_hat / (v_hat.sqrt() + s.epsilon);
        }
    }
    params.zero_grads();
    Ok(())
}
