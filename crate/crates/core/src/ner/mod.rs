//! Token classification: CoNLL input, subword alignment, fine-tuning, BIO
//! span decoding and entity-level scoring.

mod align;
mod conll;
mod finetune;
mod metrics;
mod spans;
mod stats;

pub use align::{align_subwords, align_words, AlignedWords};
pub use conll::{parse_conll, read_conll, write_conll, LabelSet, NerExample};
pub use finetune::{finetune, FinetuneOptions, FinetuneOutcome, NerModel, LABELS_KEY, LOWERCASE_KEY, MAX_LEN_KEY};
pub use metrics::{evaluate_entities, Evaluation, SpanCounts};
pub use spans::{decode_spans, encode_spans, EntitySpan, Tag};
pub use stats::{dataset_stats, example_stats, DatasetStats};

use thiserror::Error;

use crate::model::ModelError;
use crate::training::TrainError;

#[derive(Debug, Error)]
pub enum NerError {
    #[error("{file}:{line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },
    #[error("empty sentence")]
    EmptySentence,
    #[error("word {word:?} needs {pieces} pieces but only {budget} fit")]
    WordTooLong { word: String, pieces: usize, budget: usize },
    #[error("label {0:?} not in the label set")]
    UnknownLabel(String),
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("vocabulary has {vocab} pieces but the model expects {model}")]
    VocabMismatch { vocab: usize, model: usize },
    #[error("labels {0} do not occur in the training data")]
    IncompatibleLabels(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
