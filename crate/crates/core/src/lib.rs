//! Retrieval-augmented multi-expert residue representations with
//! reliability-aware evidential fusion, for residue-level active-site
//! labeling over precomputed embeddings.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod numcore;

pub use error::{MeraError, Result};
pub mod store;

pub(crate) mod codec;
pub mod merag;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod rmf;
pub mod textguide;
pub mod training;
