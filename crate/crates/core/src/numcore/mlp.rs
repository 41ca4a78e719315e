use rand::Rng;

use super::matrix::Matrix;
use super::params::ParameterStore;
use super::tape::{Tape, Var};
use crate::error::Result;

/// Parameter names of a two-layer perceptron registered under `prefix`.
pub struct Mlp2Names {
    pub w1: String,
    pub b1: String,
    pub w2: String,
    pub b2: String,
}

impl Mlp2Names {
    pub fn new(prefix: &str) -> Self {
        Mlp2Names {
            w1: format!("{prefix}.W1"),
            b1: format!("{prefix}.b1"),
            w2: format!("{prefix}.W2"),
            b2: format!("{prefix}.b2"),
        }
    }
}

/// Registers `prefix.{W1,b1,W2,b2}` with Xavier weights and zero biases.
pub fn init_mlp2<R: Rng>(
    store: &mut ParameterStore,
    prefix: &str,
    input: usize,
    hidden: usize,
    output: usize,
    rng: &mut R,
) -> Result<()> {
    let n = Mlp2Names::new(prefix);
    store.insert_xavier(n.w1, input, hidden, rng)?;
    store.insert_zeros(n.b1, 1, hidden)?;
    store.insert_xavier(n.w2, hidden, output, rng)?;
    store.insert_zeros(n.b2, 1, output)?;
    Ok(())
}

/// `relu(x·W1 + b1)·W2 + b2`
pub fn mlp2_forward(x: &Matrix, params: &ParameterStore, prefix: &str) -> Result<Matrix> {
    let n = Mlp2Names::new(prefix);
    let hidden = x
        .matmul(params.value(&n.w1)?)?
        .add_row_broadcast(params.value(&n.b1)?)?
        .map(|v| if v > 0.0 { v } else { 0.0 });
    hidden
        .matmul(params.value(&n.w2)?)?
        .add_row_broadcast(params.value(&n.b2)?)
}

/// Same as [`mlp2_forward`], recorded on `tape`.
pub fn mlp2_on_tape(tape: &mut Tape, x: Var, params: &ParameterStore, prefix: &str) -> Result<Var> {
    let n = Mlp2Names::new(prefix);
    let w1 = tape.param(params, &n.w1)?;
    let b1 = tape.param(params, &n.b1)?;
    let w2 = tape.param(params, &n.w2)?;
    let b2 = tape.param(params, &n.b2)?;
    let h = tape.matmul(x, w1)?;
    let h = tape.add_bias(h, b1)?;
    let h = tape.relu(h)?;
    let o = tape.matmul(h, w2)?;
    tape.add_bias(o, b2)
}
