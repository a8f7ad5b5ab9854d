use super::conll::{LabelSet, NerExample};
use super::NerError;
use crate::model::IGNORE_INDEX;
use crate::tokenizer::{InputSequence, Vocab, CLS_ID, PAD_ID, SEP_ID};

/// `[CLS] pieces… [SEP]` padded to `max_len`, plus where each kept word starts.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedWords {
    pub input: InputSequence,
    /// Position of the first piece of word `i`, for the kept words.
    pub word_positions: Vec<usize>,
}

impl AlignedWords {
    pub fn words_kept(&self) -> usize {
        self.word_positions.len()
    }
}

/// Encodes words as they appear in running text: every word after the
/// first carries a leading space. Trailing words that do not fit are dropped.
pub fn align_words<S: AsRef<str>>(words: &[S], vocab: &Vocab, max_len: usize) -> Result<AlignedWords, NerError> {
    if words.is_empty() {
        return Err(NerError::EmptySentence);
    }
    let budget = max_len.saturating_sub(2);
    let mut token_ids = vec![CLS_ID];
    let mut word_positions = Vec::with_capacity(words.len());
    for (i, w) in words.iter().enumerate() {
        let w = w.as_ref();
        let pieces = if i == 0 {
            vocab.encode(w)
        } else {
            vocab.encode(&format!(" {w}"))
        };
        if token_ids.len() - 1 + pieces.len() > budget {
            if i == 0 {
                return Err(NerError::WordTooLong {
                    word: w.to_string(),
                    pieces: pieces.len(),
                    budget,
                });
            }
            break;
        }
        word_positions.push(token_ids.len());
        token_ids.extend(pieces);
    }
    token_ids.push(SEP_ID);
    let active = token_ids.len();
    token_ids.resize(max_len, PAD_ID);
    let mut attention_mask = vec![1; active];
    attention_mask.resize(max_len, 0);
    Ok(AlignedWords {
        input: InputSequence {
            token_ids,
            type_ids: vec![0; max_len],
            attention_mask,
        },
        word_positions,
    })
}

/// Word-aligned input with per-position label ids: the first piece of each
/// kept word carries its label, every other position [`IGNORE_INDEX`].
pub fn align_subwords(
    example: &NerExample,
    vocab: &Vocab,
    max_len: usize,
    labels: &LabelSet,
) -> Result<(AlignedWords, Vec<usize>), NerError> {
    let aligned = align_words(&example.words, vocab, max_len)?;
    let mut ids = vec![IGNORE_INDEX; max_len];
    for (&pos, label) in aligned.word_positions.iter().zip(&example.labels) {
        ids[pos] = labels.id(label).ok_or_else(|| NerError::UnknownLabel(label.clone()))?;
    }
    Ok((aligned, ids))
}
