//! File formats, dataset manifests, synthetic data and the end-to-end commands.

pub mod commands;
pub mod embfile;
pub mod manifest;
pub mod synth;

pub use embfile::{
    decode_embedding, encode_embedding, load_embedding, save_embedding, EMBEDDING_MAGIC,
};
pub use manifest::{Manifest, ManifestEntry, Split};
pub use synth::{generate, write_dataset, SynthConfig, SynthProtein};
