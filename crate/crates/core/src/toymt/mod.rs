//! Character-level decoder-only translation model.

mod checkpoint;
mod decode;
mod model;
mod vocab;

use thiserror::Error;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use decode::{
    generate_candidates, greedy_decode, nucleus_distribution, sample_top_p, SamplingParams,
};
pub use model::{DecodeState, ModelConfig, ToyModel, Trace};
pub use vocab::{EncodedPair, Vocab, BOS, EOS, PAD, SEP};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("character {0:?} is not in the model vocabulary")]
    UnknownChar(char),
    #[error("encoded length {len} exceeds max_len {max_len}")]
    TooLong { len: usize, max_len: usize },
    #[error("non-finite {0}")]
    NonFinite(String),
    #[error("invalid sampling parameter: {0}")]
    Sampling(String),
    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: String, message: String },
    #[error("checkpoint {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Same as [`ToyModel::init`].
pub fn init_model(config: ModelConfig) -> Result<ToyModel, ModelError> {
    ToyModel::init(config)
}

/// Same as [`ToyModel::sequence_logprob`].
pub fn sequence_logprob(model: &ToyModel, source: &str, target: &str) -> Result<f64, ModelError> {
    model.sequence_logprob(source, target)
}
