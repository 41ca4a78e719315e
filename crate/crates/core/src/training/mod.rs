//! Objective, optimizer, checkpoints and the epoch loop.

mod adam;
mod checkpoint;
mod config;
mod loss;

pub use adam::{adam_step, AdamSettings};
pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint,
    CHECKPOINT_MAGIC,
};
pub use config::{Config, Reduction};
pub use loss::{
    bce_loss, loss_on_tape, reliability_loss, reliability_term, LossBreakdown, LossVars,
};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{MeraError, Result};
use crate::metrics::auprc;
use crate::model::{Model, Prepared};
use crate::numcore::Tape;

impl Config {
    pub fn adam(&self) -> AdamSettings {
        AdamSettings {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            epsilon: self.adam_epsilon,
        }
    }
}

/// One update per protein, visiting proteins in an order drawn from `rng`.
/// Returns the mean breakdown over the epoch.
pub fn train_epoch(
    model: &mut Model,
    data: &[Prepared],
    rng: &mut ChaCha8Rng,
) -> Result<LossBreakdown> {
    if data.is_empty() {
        return Err(MeraError::Config("training set is empty".into()));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(rng);
    let adam = model.config.adam();
    let mut sum = LossBreakdown::default();
    for i in order {
        let mut tape = Tape::new();
        let (_, loss) = model.loss_on_tape(&mut tape, &data[i])?;
        tape.backward(loss.total, &mut model.params)?;
        adam_step(&mut model.params, &adam).map_err(|e| match e {
            MeraError::Training(m) => {
                MeraError::Training(format!("protein `{}`: {m}", data[i].sample.id))
            }
            other => other,
        })?;
        sum.accumulate(&loss.read(&tape));
    }
    Ok(sum.scaled(1.0 / data.len() as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: LossBreakdown,
    pub valid_auprc: f64,
    pub best: bool,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters of the best validation epoch, rounded to `f32`.
    pub best: Model,
    pub best_epoch: usize,
    pub best_auprc: f64,
    pub history: Vec<EpochLog>,
}

/// Validation AUPRC of `model`.
pub fn validation_auprc(model: &Model, valid: &[Prepared]) -> Result<f64> {
    auprc(&model.eval_records(valid)?)
}

/// Runs `config.epochs` epochs and keeps the epoch with the highest
/// validation AUPRC (earliest on ties).
pub fn train(
    mut model: Model,
    train_set: &[Prepared],
    valid: &[Prepared],
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    if valid.is_empty() {
        return Err(MeraError::Config("validation split is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(model.config.seed ^ 0x5e_ed0f_0de7);
    let mut best: Option<(Model, usize, f64)> = None;
    let mut history = Vec::with_capacity(model.config.epochs);
    for epoch in 1..=model.config.epochs {
        let loss = train_epoch(&mut model, train_set, &mut rng)?;
        let rounded = Model {
            config: model.config.clone(),
            params: model.params.round_to_f32(),
        };
        let score = validation_auprc(&rounded, valid)?;
        let improved = best.as_ref().is_none_or(|b| score > b.2);
        if improved {
            best = Some((rounded, epoch, score));
        }
        let log = EpochLog {
            epoch,
            loss,
            valid_auprc: score,
            best: improved,
        };
        on_epoch(&log);
        history.push(log);
    }
    let (best, best_epoch, best_auprc) = best.expect("at least one epoch");
    Ok(TrainOutcome {
        best,
        best_epoch,
        best_auprc,
        history,
    })
}
