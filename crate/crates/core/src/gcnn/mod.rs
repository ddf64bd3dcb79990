//! Bipartite graph convolution policy: one constraint-side and one variable-side
//! half-convolution between two-layer perceptron embeddings, a per-variable
//! logit head and a softmax restricted to the branching candidates.

mod io;
mod model;
mod tensor;
mod train;

pub use io::{checksum, from_bytes, load_model, save_model, to_bytes, MODEL_MAGIC, MODEL_VERSION};
pub use model::{
    forward, loss, loss_and_grad, masked_softmax, prenorm_output_stats, prenorm_pretrain,
    ChannelStats, ConvMode, GcnnParams, Mlp2, Prenorm, DEFAULT_HIDDEN, SIGMA_FLOOR,
};
pub use tensor::Dense2;
pub use train::{
    adam_step, adam_update, train, train_with_callback, uniform_loss, AdamState, EpochRecord,
    TrainConfig, TrainHistory,
};

#[derive(Debug, thiserror::Error)]
pub enum GcnnError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite value {value} at index {index} in {stage}")]
    NonFinite {
        stage: String,
        index: usize,
        value: f64,
    },
    #[error("empty sample stream")]
    EmptyStream,
    #[error("sample {sample}: expert action {action} is not a candidate")]
    ActionOutsideMask { sample: usize, action: usize },
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("model format: {0}")]
    Format(String),
    #[error("model format version {found}, expected {expected}")]
    Version { found: u32, expected: u32 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Shannon entropy (nats) of a probability vector.
pub fn entropy(probs: &[f64]) -> f64 {
    -probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|p| p * p.ln())
        .sum::<f64>()
}
