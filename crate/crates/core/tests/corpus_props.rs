use albert_core::corpus::{
    apply_mlm_mask_with, make_sop_pairs, preprocess_documents, split_documents, MaskBranch, SopLabel,
};
use albert_core::numerics::RngStream;
use albert_core::tokenizer::{build_input_pair, Vocab, MASK_ID};
use proptest::prelude::*;

#[test]
fn sop_in_order_fraction() {
    let docs: Vec<Vec<u32>> = (0..1000).map(|d| (0..11).map(|s| d * 100 + s).collect()).collect();
    let pairs = make_sop_pairs(&docs, &mut RngStream::new(2024), 1);
    assert_eq!(pairs.len(), 10_000);
    let in_order = pairs.iter().filter(|p| p.label == SopLabel::InOrder).count();
    let frac = in_order as f64 / pairs.len() as f64;
    assert!((frac - 0.5).abs() <= 0.02, "in-order fraction {frac}");
    for p in &pairs {
        assert_eq!(p.label == SopLabel::InOrder, p.seg_a < p.seg_b);
    }
}

#[test]
fn mask_branch_frequencies() {
    let a: Vec<u32> = (0..60).map(|i| 10 + i).collect();
    let b: Vec<u32> = (0..60).map(|i| 90 + i).collect();
    let input = build_input_pair(&a, &b, 128).unwrap();
    let mut rng = RngStream::new(77);
    let mut counts = [0usize; 3];
    let mut total = 0;
    while total < 10_000 {
        let m = apply_mlm_mask_with(&input, 200, &mut rng, 0.15, 20, MaskBranch::draw).unwrap();
        assert!(m.positions.len() <= 20);
        for (i, br) in m.branches.iter().enumerate() {
            let pos = m.positions[i] as usize;
            match br {
                MaskBranch::Mask => {
                    assert_eq!(m.input.token_ids[pos], MASK_ID);
                    counts[0] += 1
                }
                MaskBranch::Random => {
                    assert!(!Vocab::is_special(m.input.token_ids[pos]));
                    counts[1] += 1
                }
                MaskBranch::Keep => {
                    assert_eq!(m.input.token_ids[pos], m.labels[i]);
                    counts[2] += 1
                }
            }
            total += 1;
        }
    }
    let f: Vec<f64> = counts.iter().map(|&c| c as f64 / total as f64).collect();
    assert!((f[0] - 0.8).abs() <= 0.02, "{f:?}");
    assert!((f[1] - 0.1).abs() <= 0.02, "{f:?}");
    assert!((f[2] - 0.1).abs() <= 0.02, "{f:?}");
}

fn raw_doc() -> impl Strategy<Value = String> {
    proptest::collection::vec(
        prop_oneof![
            Just(String::new()),
            "[a-z ]{0,18}",
            "[a-zA-Z .,é]{15,40}",
            "[a-z]{20,30}   ",
        ],
        0..8,
    )
    .prop_map(|lines| lines.join("\n"))
}

proptest! {
    #[test]
    fn preprocessing_is_idempotent(docs in proptest::collection::vec(raw_doc(), 0..5)) {
        let once = preprocess_documents(&docs);
        let reparsed: Vec<String> = split_documents(&once)
            .into_iter()
            .map(|d| d.sentences.join("\n"))
            .collect();
        let twice = preprocess_documents(&reparsed);
        prop_assert_eq!(&twice, &once);
        for doc in split_documents(&once) {
            for s in &doc.sentences {
                prop_assert!(s.chars().count() >= 20);
                prop_assert!(!s.contains('\n'));
            }
        }
    }
}
