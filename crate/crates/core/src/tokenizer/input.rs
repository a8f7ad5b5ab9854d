use super::{TokenizerError, CLS_ID, PAD_ID, SEP_ID};

/// Padded model input for one sequence or sequence pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InputSequence {
    pub token_ids: Vec<u32>,
    pub type_ids: Vec<u32>,
    pub attention_mask: Vec<u32>,
}

impl InputSequence {
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    /// Number of non-pad positions.
    pub fn active_len(&self) -> usize {
        self.attention_mask.iter().filter(|&&m| m == 1).count()
    }
}

/// Lays out `[CLS] A [SEP] (B [SEP])` and pads to `max_len`.
///
/// Over-length inputs lose tokens from the tail of whichever segment is
/// strictly longer (B on ties) until the pair fits.
pub fn build_input_pair(seg_a: &[u32], seg_b: &[u32], max_len: usize) -> Result<InputSequence, TokenizerError> {
    let specials = if seg_b.is_empty() { 2 } else { 3 };
    if max_len < specials {
        return Err(TokenizerError::SequenceTooShort {
            max_len,
            needed: specials,
        });
    }
    let budget = max_len - specials;
    let (mut len_a, mut len_b) = (seg_a.len(), seg_b.len());
    while len_a + len_b > budget {
        if len_a > len_b {
            len_a -= 1;
        } else {
            len_b -= 1;
        }
    }

    let mut token_ids = Vec::with_capacity(max_len);
    let mut type_ids = Vec::with_capacity(max_len);
    token_ids.push(CLS_ID);
    token_ids.extend_from_slice(&seg_a[..len_a]);
    token_ids.push(SEP_ID);
    type_ids.resize(token_ids.len(), 0);
    if !seg_b.is_empty() {
        token_ids.extend_from_slice(&seg_b[..len_b]);
        token_ids.push(SEP_ID);
        type_ids.resize(token_ids.len(), 1);
    }
    let active = token_ids.len();
    token_ids.resize(max_len, PAD_ID);
    type_ids.resize(max_len, 0);
    let mut attention_mask = vec![1; active];
    attention_mask.resize(max_len, 0);
    Ok(InputSequence {
        token_ids,
        type_ids,
        attention_mask,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::PAD_ID as PAD;

    #[test]
    fn single_segment_layout() {
        let s = build_input_pair(&[7, 8], &[], 6).unwrap();
        assert_eq!(s.token_ids, vec![CLS_ID, 7, 8, SEP_ID, PAD, PAD]);
        assert_eq!(s.attention_mask, vec![1, 1, 1, 1, 0, 0]);
        assert_eq!(s.type_ids, vec![0; 6]);
    }

    #[test]
    fn exact_fit_pair() {
        let s = build_input_pair(&[5], &[6], 5).unwrap();
        assert_eq!(s.token_ids, vec![CLS_ID, 5, SEP_ID, 6, SEP_ID]);
        assert_eq!(s.type_ids, vec![0, 0, 0, 1, 1]);
        assert_eq!(s.attention_mask, vec![1; 5]);
    }

    #[test]
    fn truncates_longer_segment_first() {
        let a: Vec<u32> = (0..400).map(|i| 1000 + i).collect();
        let b: Vec<u32> = (0..300).map(|i| 5000 + i).collect();
        let s = build_input_pair(&a, &b, 512).unwrap();
        assert_eq!(s.len(), 512);
        let count = |ty| s.type_ids.iter().zip(&s.attention_mask).filter(|&(&t, &m)| t == ty && m == 1).count();
        let (len_a, len_b) = (count(0) - 2, count(1) - 1);
        assert_eq!((len_a, len_b), (255, 254));
        // head of each segment survives
        assert_eq!(s.token_ids[1], 1000);
        assert_eq!(s.token_ids[len_a + 2], 5000);
    }

    #[test]
    fn too_short_is_error() {
        assert!(build_input_pair(&[1], &[2], 2).is_err());
        assert!(build_input_pair(&[1], &[], 1).is_err());
        assert_eq!(build_input_pair(&[1, 2], &[], 2).unwrap().token_ids, vec![CLS_ID, SEP_ID]);
    }
}
