//! Dense matrices, activations, and a reverse-mode gradient tape.

mod gradcheck;
mod matrix;
mod mlp;
mod params;
mod tape;

pub use gradcheck::{finite_diff_check, GradCheckReport};
pub use matrix::{dot, sigmoid, softmax, EmbeddingMatrix, Matrix};
pub use mlp::{init_mlp2, mlp2_forward, mlp2_on_tape, Mlp2Names};
pub use params::{Parameter, ParameterStore};
pub use tape::{Gradients, Tape, Var};
