use crate::numerics::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SopLabel {
    InOrder,
    Swapped,
}

impl SopLabel {
    pub fn class(self) -> usize {
        match self {
            SopLabel::InOrder => 0,
            SopLabel::Swapped => 1,
        }
    }

    pub fn from_class(c: u32) -> Option<Self> {
        match c {
            0 => Some(SopLabel::InOrder),
            1 => Some(SopLabel::Swapped),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SopPair<T> {
    pub seg_a: T,
    pub seg_b: T,
    pub label: SopLabel,
}

/// Emits every adjacent sentence pair of every document `dup_factor` times,
/// swapping each with probability one half.
pub fn make_sop_pairs<T: Clone>(docs: &[Vec<T>], rng: &mut RngStream, dup_factor: usize) -> Vec<SopPair<T>> {
    make_sop_pairs_with(docs, dup_factor, || rng.coin())
}

/// [`make_sop_pairs`] with an explicit coin; `true` keeps corpus order.
pub fn make_sop_pairs_with<T: Clone>(
    docs: &[Vec<T>],
    dup_factor: usize,
    mut keep_order: impl FnMut() -> bool,
) -> Vec<SopPair<T>> {
    let mut out = Vec::new();
    for _ in 0..dup_factor.max(1) {
        for doc in docs.iter().filter(|d| d.len() >= 2) {
            for w in doc.windows(2) {
                let pair = if keep_order() {
                    SopPair {
                        seg_a: w[0].clone(),
                        seg_b: w[1].clone(),
                        label: SopLabel::InOrder,
                    }
                } else {
                    SopPair {
                        seg_a: w[1].clone(),
                        seg_b: w[0].clone(),
                        label: SopLabel::Swapped,
                    }
                };
                out.push(pair);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forced_coins() {
        let docs = vec![vec!["s1", "s2"]];
        let heads = make_sop_pairs_with(&docs, 1, || true);
        assert_eq!(
            heads,
            vec![SopPair {
                seg_a: "s1",
                seg_b: "s2",
                label: SopLabel::InOrder
            }]
        );
        let tails = make_sop_pairs_with(&docs, 1, || false);
        assert_eq!(
            tails,
            vec![SopPair {
                seg_a: "s2",
                seg_b: "s1",
                label: SopLabel::Swapped
            }]
        );
    }

    #[test]
    fn duplication_count() {
        let docs = vec![vec![1, 2, 3], vec![9]];
        let mut rng = RngStream::new(5);
        assert_eq!(make_sop_pairs(&docs, &mut rng, 5).len(), 10);
    }

    #[test]
    fn duplicates_draw_fresh_coins() {
        let docs = vec![(0..40).collect::<Vec<u32>>()];
        let mut rng = RngStream::new(11);
        let pairs = make_sop_pairs(&docs, &mut rng, 2);
        let (first, second) = pairs.split_at(39);
        assert!(first.iter().zip(second).any(|(a, b)| a.label != b.label));
    }
}
