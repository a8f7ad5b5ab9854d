//! Deterministic training loops. The batch and dropout stream for step `s`
//! depend only on the seed and `s`, so a run resumed from a checkpoint
//! replays the same trajectory.

use std::fmt;

use thiserror::Error;

use crate::corpus::PretrainExample;
use crate::model::{
    init_parameters, pretrain_eval, pretrain_loss, pretrain_loss_and_grads, Checkpoint, HeadSet, ModelConfig,
    ModelError, ParameterSet,
};
use crate::numerics::RngStream;
use crate::optim::{Hyper, OptimError, OptimizerKind, OptimizerState, Schedule};
use crate::tokenizer::InputSequence;

const BATCH_STREAM: u64 = 0xBA7C;
const DROPOUT_STREAM: u64 = 0xD80F;
const INIT_STREAM: u64 = 0x1417;

pub const STEP_KEY: &str = "optim_step";

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error("non-finite parameters after step {0}")]
    NonFinite(u64),
    #[error("no training examples")]
    NoExamples,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

/// One `step<TAB>metric<TAB>value` log line.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRecord {
    pub step: u64,
    pub metric: String,
    pub value: f64,
}

impl LogRecord {
    pub fn new(step: u64, metric: &str, value: f64) -> Self {
        Self {
            step,
            metric: metric.to_string(),
            value,
        }
    }
}

impl fmt::Display for LogRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}\t{}\t{}", self.step, self.metric, self.value)
    }
}

/// Example indices for `step`, drawn without replacement.
pub fn batch_indices(seed: u64, step: u64, n: usize, batch_size: usize) -> Vec<usize> {
    RngStream::new(seed)
        .fork(BATCH_STREAM)
        .fork(step)
        .sample_without_replacement(n, batch_size.min(n))
}

pub fn dropout_stream(seed: u64, step: u64) -> RngStream {
    RngStream::new(seed).fork(DROPOUT_STREAM).fork(step)
}

pub fn init_stream(seed: u64) -> RngStream {
    RngStream::new(seed).fork(INIT_STREAM)
}

/// Cuts every sequence to the longest active length in the batch.
pub fn trim_to_active(inputs: &mut [InputSequence]) -> usize {
    let t = inputs.iter().map(InputSequence::active_len).max().unwrap_or(0);
    for s in inputs.iter_mut() {
        s.token_ids.truncate(t);
        s.type_ids.truncate(t);
        s.attention_mask.truncate(t);
    }
    t
}

/// Parameters plus optimizer moments; the unit saved in checkpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub config: ModelConfig,
    pub params: ParameterSet<f32>,
    pub optim: OptimizerState<f32>,
}

impl TrainState {
    pub fn init(config: &ModelConfig, heads: HeadSet, seed: u64, hyper: Hyper) -> Result<Self, TrainError> {
        config.validate()?;
        let params = init_parameters(config, heads, &mut init_stream(seed));
        Ok(Self::from_params(config.clone(), params, hyper))
    }

    pub fn from_params(config: ModelConfig, params: ParameterSet<f32>, hyper: Hyper) -> Self {
        let optim = OptimizerState::new(&params, hyper);
        Self { config, params, optim }
    }

    pub fn step(&self) -> u64 {
        self.optim.step
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new(self.config.clone(), self.params.clone());
        ck.optimizer = self.optim.to_tensors();
        ck.metadata.insert(STEP_KEY.into(), self.optim.step.to_string());
        ck
    }

    /// Restores parameters and, when present, optimizer state.
    pub fn from_checkpoint(ck: &Checkpoint, hyper: Hyper) -> Result<Self, TrainError> {
        let mut state = Self::from_params(ck.config.clone(), ck.params.clone(), hyper);
        if !ck.optimizer.is_empty() {
            let step = ck
                .metadata
                .get(STEP_KEY)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| TrainError::Checkpoint(format!("optimizer tensors without {STEP_KEY}")))?;
            state.optim = OptimizerState::from_tensors(&ck.optimizer, &ck.params, step, hyper)?;
        }
        Ok(state)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PretrainOptions {
    pub batch_size: usize,
    pub schedule: Schedule,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    pub log_every: u64,
}

fn gather_batch(examples: &[PretrainExample], idx: &[usize]) -> Vec<PretrainExample> {
    let mut batch: Vec<PretrainExample> = idx.iter().map(|&i| examples[i].clone()).collect();
    let mut inputs: Vec<InputSequence> = batch.iter().map(|e| e.input.clone()).collect();
    trim_to_active(&mut inputs);
    for (e, s) in batch.iter_mut().zip(inputs) {
        e.input = s;
    }
    batch
}

/// Runs optimizer steps until `state.step() == until`.
pub fn pretrain_steps(
    state: &mut TrainState,
    examples: &[PretrainExample],
    opts: &PretrainOptions,
    until: u64,
    log: &mut dyn FnMut(LogRecord),
) -> Result<(), TrainError> {
    if examples.is_empty() {
        return Err(TrainError::NoExamples);
    }
    while state.step() < until {
        let s = state.step() + 1;
        let batch = gather_batch(examples, &batch_indices(opts.seed, s, examples.len(), opts.batch_size));
        let mut drop = dropout_stream(opts.seed, s);
        let dropout = (state.config.dropout_rate > 0.0).then_some(&mut drop);
        let (loss, grads) = pretrain_loss_and_grads(&state.params, &state.config, &batch, dropout)?;
        let lr = opts.schedule.lr_at(s)?;
        state.optim.step_with(opts.optimizer, &mut state.params, &grads, lr)?;
        if !state.params.is_finite() {
            return Err(TrainError::NonFinite(s));
        }
        if s == 1 || s.is_multiple_of(opts.log_every.max(1)) {
            log(LogRecord::new(s, "mlm_loss", loss.mlm_loss as f64));
            log(LogRecord::new(s, "sop_loss", loss.sop_loss as f64));
            log(LogRecord::new(s, "lr", lr));
        }
    }
    Ok(())
}

/// Mean losses and accuracies over `examples`, without dropout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PretrainMetrics {
    pub mlm_loss: f64,
    pub sop_loss: f64,
    pub mlm_accuracy: f64,
    pub sop_accuracy: f64,
}

pub fn evaluate_pretrain(
    params: &ParameterSet<f32>,
    config: &ModelConfig,
    examples: &[PretrainExample],
    batch_size: usize,
) -> Result<PretrainMetrics, TrainError> {
    if examples.is_empty() {
        return Err(TrainError::NoExamples);
    }
    let (mut mlm, mut sop, mut weight) = (0.0, 0.0, 0.0);
    let (mut mlm_hit, mut mlm_total, mut sop_hit) = (0, 0, 0);
    let idx: Vec<usize> = (0..examples.len()).collect();
    for chunk in idx.chunks(batch_size.max(1)) {
        let batch = gather_batch(examples, chunk);
        let l = pretrain_loss(params, config, &batch)?;
        let n = chunk.len() as f64;
        mlm += l.mlm_loss as f64 * n;
        sop += l.sop_loss as f64 * n;
        weight += n;
        let e = pretrain_eval(params, config, &batch)?;
        mlm_hit += e.mlm_correct;
        mlm_total += e.mlm_total;
        sop_hit += e
            .sop_predictions
            .iter()
            .zip(&batch)
            .filter(|(p, ex)| **p == ex.sop_label)
            .count();
    }
    Ok(PretrainMetrics {
        mlm_loss: mlm / weight,
        sop_loss: sop / weight,
        mlm_accuracy: mlm_hit as f64 / mlm_total.max(1) as f64,
        sop_accuracy: sop_hit as f64 / examples.len() as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_pretrain_examples, ExampleOptions};

    fn setup() -> (ModelConfig, Vec<PretrainExample>) {
        let config = ModelConfig {
            vocab_size: 40,
            embedding_size: 8,
            hidden_size: 16,
            num_layers: 2,
            num_heads: 2,
            intermediate_size: 32,
            max_positions: 24,
            type_vocab_size: 2,
            share_parameters: true,
            dropout_rate: 0.1,
            num_labels: 0,
        };
        let docs: Vec<Vec<Vec<u32>>> = (0..6)
            .map(|d| (0..3).map(|s| (0..5).map(|i| 5 + ((d * 7 + s * 3 + i) % 35) as u32).collect()).collect())
            .collect();
        let opts = ExampleOptions {
            max_seq_length: 24,
            dup_factor: 2,
            ..Default::default()
        };
        let ex = build_pretrain_examples(&docs, 40, &opts, &mut RngStream::new(3)).unwrap();
        (config, ex)
    }

    fn opts() -> PretrainOptions {
        PretrainOptions {
            batch_size: 4,
            schedule: Schedule::new(0.01, 2, 20).unwrap(),
            optimizer: OptimizerKind::Lamb,
            seed: 5,
            log_every: 1,
        }
    }

    #[test]
    fn resume_matches_uninterrupted_run() {
        let (config, ex) = setup();
        let mut full = TrainState::init(&config, HeadSet::PRETRAINING, 1, Hyper::default()).unwrap();
        let mut log_full = Vec::new();
        pretrain_steps(&mut full, &ex, &opts(), 8, &mut |r| log_full.push(r.to_string())).unwrap();

        let mut part = TrainState::init(&config, HeadSet::PRETRAINING, 1, Hyper::default()).unwrap();
        let mut log_part = Vec::new();
        pretrain_steps(&mut part, &ex, &opts(), 3, &mut |r| log_part.push(r.to_string())).unwrap();
        let bytes = part.to_checkpoint().to_bytes();
        let ck = Checkpoint::from_bytes(&bytes).unwrap();
        let mut resumed = TrainState::from_checkpoint(&ck, Hyper::default()).unwrap();
        assert_eq!(resumed, part);
        pretrain_steps(&mut resumed, &ex, &opts(), 8, &mut |r| log_part.push(r.to_string())).unwrap();
        assert_eq!(resumed.to_checkpoint().to_bytes(), full.to_checkpoint().to_bytes());
        assert_eq!(log_part, log_full);
    }

    #[test]
    fn log_lines_are_tab_separated() {
        assert_eq!(LogRecord::new(3, "mlm_loss", 0.5).to_string(), "3\tmlm_loss\t0.5");
    }

    #[test]
    fn batches_are_distinct_indices() {
        let b = batch_indices(1, 7, 10, 4);
        assert_eq!(b, batch_indices(1, 7, 10, 4));
        let mut s = b.clone();
        s.sort();
        s.dedup();
        assert_eq!(s.len(), 4);
        assert_eq!(batch_indices(1, 7, 3, 8).len(), 3);
    }
}
