//! Single-head cross-attention from residues to text tokens.
//!
//! Produces one text-guided row per residue, so the text modality lines up
//! with the sequence for per-residue fusion.

use rand::Rng;

use crate::error::{MeraError, Result};
use crate::numcore::{Matrix, ParameterStore, Tape, Var};

pub const W_Q: &str = "text.W_Q";
pub const W_K: &str = "text.W_K";
pub const W_V: &str = "text.W_V";

/// Registers `W_Q` (dim x attn), `W_K` (text_dim x attn) and `W_V` (text_dim x dim).
pub fn init_text_guide<R: Rng>(
    params: &mut ParameterStore,
    dim: usize,
    text_dim: usize,
    attn_dim: usize,
    rng: &mut R,
) -> Result<()> {
    if attn_dim == 0 {
        return Err(MeraError::Config(
            "attention width must be at least 1".into(),
        ));
    }
    params.insert_xavier(W_Q, dim, attn_dim, rng)?;
    params.insert_xavier(W_K, text_dim, attn_dim, rng)?;
    params.insert_xavier(W_V, text_dim, dim, rng)?;
    Ok(())
}

/// Records the attention on `tape`; returns `(attention, output)`.
pub fn cross_attend_on_tape(
    tape: &mut Tape,
    h_seq: Var,
    text: Var,
    params: &ParameterStore,
) -> Result<(Var, Var)> {
    if tape.value(text).rows() == 0 {
        return Err(MeraError::EmptyInput("text embedding has no tokens".into()));
    }
    let wq = tape.param(params, W_Q)?;
    let wk = tape.param(params, W_K)?;
    let wv = tape.param(params, W_V)?;
    let attn_dim = tape.value(wq).cols();
    if tape.value(wk).cols() != attn_dim {
        return Err(MeraError::Dimension(format!(
            "W_Q has width {attn_dim}, W_K has width {}",
            tape.value(wk).cols()
        )));
    }
    let q = tape.matmul(h_seq, wq)?;
    let k = tape.matmul(text, wk)?;
    let v = tape.matmul(text, wv)?;
    let scores = tape.matmul_transposed(q, k)?;
    let scores = tape.scale(scores, 1.0 / (attn_dim as f64).sqrt())?;
    let attn = tape.softmax_rows(scores, 1.0)?;
    let out = tape.matmul(attn, v)?;
    Ok((attn, out))
}

/// `softmax(QKᵀ/√d_a)·V` with `Q = h_seq·W_Q`, `K = text·W_K`, `V = text·W_V`.
pub fn cross_attend(h_seq: &Matrix, text: &Matrix, params: &ParameterStore) -> Result<Matrix> {
    let mut tape = Tape::new();
    let h = tape.constant(h_seq.clone());
    let t = tape.constant(text.clone());
    let (_, out) = cross_attend_on_tape(&mut tape, h, t, params)?;
    Ok(tape.value(out).clone())
}
