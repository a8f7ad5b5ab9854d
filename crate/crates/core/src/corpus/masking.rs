use super::CorpusError;
use crate::numerics::RngStream;
use crate::tokenizer::{InputSequence, Vocab, MASK_ID, NUM_SPECIALS};

/// What happens to a selected position.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskBranch {
    /// Replace with `[MASK]` (80%).
    Mask,
    /// Replace with a uniformly random non-special id (10%).
    Random,
    /// Leave the token unchanged (10%).
    Keep,
}

impl MaskBranch {
    pub fn draw(rng: &mut RngStream) -> Self {
        let u = rng.uniform();
        if u < 0.8 {
            MaskBranch::Mask
        } else if u < 0.9 {
            MaskBranch::Random
        } else {
            MaskBranch::Keep
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskedInput {
    pub input: InputSequence,
    /// Strictly increasing.
    pub positions: Vec<u32>,
    /// Original ids at `positions`.
    pub labels: Vec<u32>,
    pub branches: Vec<MaskBranch>,
}

pub fn apply_mlm_mask(
    input: &InputSequence,
    vocab_size: usize,
    rng: &mut RngStream,
    mask_rate: f64,
    max_predictions: usize,
) -> Result<MaskedInput, CorpusError> {
    apply_mlm_mask_with(input, vocab_size, rng, mask_rate, max_predictions, MaskBranch::draw)
}

/// Selects `min(max_predictions, max(1, ⌊rate·candidates⌋))` non-special,
/// non-pad positions uniformly without replacement and corrupts each
/// according to `branch`.
pub fn apply_mlm_mask_with(
    input: &InputSequence,
    vocab_size: usize,
    rng: &mut RngStream,
    mask_rate: f64,
    max_predictions: usize,
    mut branch: impl FnMut(&mut RngStream) -> MaskBranch,
) -> Result<MaskedInput, CorpusError> {
    if !(mask_rate > 0.0 && mask_rate < 1.0) {
        return Err(CorpusError::BadMaskRate(mask_rate));
    }
    let candidates: Vec<usize> = (0..input.len())
        .filter(|&i| input.attention_mask[i] == 1 && !Vocab::is_special(input.token_ids[i]))
        .collect();
    if candidates.is_empty() {
        return Err(CorpusError::NoCandidates);
    }
    let num_predict = ((mask_rate * candidates.len() as f64).floor() as usize)
        .max(1)
        .min(max_predictions);
    let mut chosen: Vec<usize> = rng
        .sample_without_replacement(candidates.len(), num_predict)
        .into_iter()
        .map(|c| candidates[c])
        .collect();
    chosen.sort_unstable();

    let mut out = input.clone();
    let mut labels = Vec::with_capacity(chosen.len());
    let mut branches = Vec::with_capacity(chosen.len());
    for &pos in &chosen {
        labels.push(input.token_ids[pos]);
        let b = branch(rng);
        match b {
            MaskBranch::Mask => out.token_ids[pos] = MASK_ID,
            MaskBranch::Random => {
                let span = vocab_size.saturating_sub(NUM_SPECIALS as usize).max(1);
                out.token_ids[pos] = NUM_SPECIALS + rng.below(span) as u32;
            }
            MaskBranch::Keep => {}
        }
        branches.push(b);
    }
    Ok(MaskedInput {
        input: out,
        positions: chosen.into_iter().map(|p| p as u32).collect(),
        labels,
        branches,
    })
}
