//! End-to-end finite-difference check of the pretraining loss.

use super::{init_parameters, pretrain_loss_and_grads, HeadSet, ModelConfig, ParameterSet};
use crate::corpus::{build_pretrain_examples, ExampleOptions, PretrainExample};
use crate::numerics::{grad_check_report, GradCheckReport, RngStream, Tensor};

pub const END_TO_END_TOLERANCE: f64 = 1e-3;

/// A small model (V=20, E=4, H=8, two heads) sized so that every parameter
/// can be perturbed.
pub fn gradcheck_config(layers: usize, shared: bool, dropout_rate: f64) -> ModelConfig {
    ModelConfig {
        vocab_size: 20,
        embedding_size: 4,
        hidden_size: 8,
        num_layers: layers,
        num_heads: 2,
        intermediate_size: 12,
        max_positions: 16,
        type_vocab_size: 2,
        share_parameters: shared,
        dropout_rate,
        num_labels: 0,
    }
}

fn examples(vocab: usize, max_len: usize, seed: u64) -> Vec<PretrainExample> {
    let mut rng = RngStream::new(seed);
    let docs: Vec<Vec<Vec<u32>>> = (0..3)
        .map(|_| {
            (0..3)
                .map(|_| (0..3 + rng.below(3)).map(|_| 5 + rng.below(vocab - 5) as u32).collect())
                .collect()
        })
        .collect();
    let opts = ExampleOptions {
        max_seq_length: max_len,
        mask_rate: 0.3,
        max_predictions: 4,
        dup_factor: 1,
    };
    build_pretrain_examples(&docs, vocab, &opts, &mut rng).expect("maskable synthetic corpus")
}

/// Initial parameters widened 4x plus noise so that gradients sit well
/// above finite-difference noise.
fn spread_params(config: &ModelConfig, seed: u64) -> ParameterSet<f64> {
    let mut p: ParameterSet<f64> = init_parameters(config, HeadSet::PRETRAINING, &mut RngStream::new(seed));
    let mut rng = RngStream::new(seed ^ 0xABCD);
    for (_, t) in p.iter_mut() {
        for v in t.data_mut() {
            *v = *v * 4.0 + 0.05 * rng.normal();
        }
    }
    p
}

/// Checks every parameter of the MLM + SOP loss in double precision. With a
/// positive dropout rate the mask is held fixed across perturbations.
pub fn check_pretraining_gradients(config: &ModelConfig, seed: u64) -> GradCheckReport {
    let batch = examples(config.vocab_size, 10, seed);
    let params = spread_params(config, seed);
    let rng = RngStream::new(seed + 7);
    let dropout = config.dropout_rate > 0.0;
    let loss_at = |p: &ParameterSet<f64>| {
        let mut r = rng.clone();
        pretrain_loss_and_grads(p, config, &batch, dropout.then_some(&mut r)).expect("valid batch")
    };
    let (names, inputs): (Vec<String>, Vec<Tensor<f64>>) = params.iter().map(|(n, t)| (n.clone(), t.clone())).unzip();
    let join = |ts: &[Tensor<f64>]| {
        let mut p = ParameterSet::new();
        for (n, t) in names.iter().zip(ts) {
            p.insert(n.clone(), t.clone());
        }
        p
    };
    let (_, grads) = loss_at(&params);
    let analytic: Vec<Tensor<f64>> = names.iter().map(|n| grads.get(n).expect("all grads").clone()).collect();
    grad_check_report(|ts| loss_at(&join(ts)).0.total, &analytic, &inputs, END_TO_END_TOLERANCE)
}
