//! Raw-text preprocessing and pretraining-example construction.

mod cache;
mod masking;
mod preprocess;
mod sop;

pub use cache::{read_examples, write_examples, CACHE_MAGIC};
pub use masking::{apply_mlm_mask, apply_mlm_mask_with, MaskBranch, MaskedInput};
pub use preprocess::{
    corpus_stats, preprocess_documents, preprocess_raw, split_documents, CorpusStats, Document, MIN_SENTENCE_CHARS,
};
pub use sop::{make_sop_pairs, make_sop_pairs_with, SopLabel, SopPair};

use thiserror::Error;

use crate::numerics::RngStream;
use crate::tokenizer::{build_input_pair, InputSequence, TokenizerError};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{file}: invalid UTF-8 at byte offset {offset}")]
    InvalidUtf8 { file: String, offset: usize },
    #[error("sequence has no maskable positions")]
    NoCandidates,
    #[error("mask rate {0} outside (0, 1)")]
    BadMaskRate(f64),
    #[error("example cache: {0}")]
    Cache(String),
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One SOP segment pair with masked-LM targets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PretrainExample {
    pub input: InputSequence,
    pub mlm_positions: Vec<u32>,
    pub mlm_labels: Vec<u32>,
    pub sop_label: SopLabel,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExampleOptions {
    pub max_seq_length: usize,
    pub mask_rate: f64,
    pub max_predictions: usize,
    pub dup_factor: usize,
}

impl Default for ExampleOptions {
    fn default() -> Self {
        Self {
            max_seq_length: 512,
            mask_rate: 0.15,
            max_predictions: 20,
            dup_factor: 5,
        }
    }
}

/// Turns tokenized documents (each a list of sentence id sequences) into
/// masked SOP examples. Pairs whose segments leave nothing to mask are skipped.
pub fn build_pretrain_examples(
    docs: &[Vec<Vec<u32>>],
    vocab_size: usize,
    opts: &ExampleOptions,
    rng: &mut RngStream,
) -> Result<Vec<PretrainExample>, CorpusError> {
    let pairs = make_sop_pairs(docs, rng, opts.dup_factor);
    let mut out = Vec::with_capacity(pairs.len());
    for pair in pairs {
        let input = build_input_pair(&pair.seg_a, &pair.seg_b, opts.max_seq_length)?;
        match apply_mlm_mask(&input, vocab_size, rng, opts.mask_rate, opts.max_predictions) {
            Ok(masked) => out.push(PretrainExample {
                input: masked.input,
                mlm_positions: masked.positions,
                mlm_labels: masked.labels,
                sop_label: pair.label,
            }),
            Err(CorpusError::NoCandidates) => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}
