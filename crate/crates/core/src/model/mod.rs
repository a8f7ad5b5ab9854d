//! Factorized-embedding transformer encoder with cross-layer parameter
//! sharing, pretraining heads, and a token-classification head.

mod checkpoint;
mod config;
mod encoder;
mod heads;
mod params;
mod selfcheck;

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, OPTIM_PREFIX};
pub use config::{HeadSet, ModelConfig};
pub use encoder::LAYER_NORM_EPS;
pub use heads::{
    encode_forward, ner_loss, ner_loss_and_grads, pretrain_eval, pretrain_loss, pretrain_loss_and_grads,
    token_logits, PretrainEval, PretrainLoss,
};
pub use params::{
    add_ner_head, count_parameters, init_parameters, names, parameter_specs, BlockNames, InitKind, ParamSpec,
    ParameterSet, INIT_CLIP, INIT_STD,
};

pub use selfcheck::{check_pretraining_gradients, gradcheck_config, END_TO_END_TOLERANCE};

use thiserror::Error;

use crate::numerics::NumericsError;

/// Label value excluded from the token-classification loss.
pub const IGNORE_INDEX: usize = usize::MAX;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("missing tensor {0}")]
    MissingTensor(String),
    #[error("unexpected tensor {0}")]
    UnexpectedTensor(String),
    #[error("tensor {name}: expected shape {expected:?}, found {found:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("id {id} outside vocabulary of size {vocab_size}")]
    TokenOutOfRange { id: usize, vocab_size: usize },
    #[error("sequence length {len} exceeds max positions {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error("batch sequences differ in length")]
    RaggedBatch,
    #[error("empty batch")]
    EmptyBatch,
    #[error("batch has no masked positions")]
    NoMaskedPositions,
    #[error("model has no token-classification head")]
    MissingNerHead,
    #[error("invalid example: {0}")]
    InvalidExample(String),
    #[error("checkpoint config {key}: expected {expected}, found {found}")]
    ConfigMismatch {
        key: String,
        expected: String,
        found: String,
    },
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
