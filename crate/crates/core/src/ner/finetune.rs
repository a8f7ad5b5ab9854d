use super::align::{align_subwords, align_words};
use super::conll::{LabelSet, NerExample};
use super::metrics::{evaluate_entities, Evaluation};
use super::NerError;
use crate::model::{
    add_ner_head, names, ner_loss_and_grads, token_logits, Checkpoint, ModelConfig, ParameterSet, IGNORE_INDEX,
};
use crate::numerics::Scalar;
use crate::optim::{Hyper, OptimizerKind, OptimizerState, Schedule};
use crate::tokenizer::{InputSequence, Vocab};
use crate::training::{batch_indices, dropout_stream, init_stream, trim_to_active, LogRecord, TrainError};

pub const LABELS_KEY: &str = "ner_labels";
pub const MAX_LEN_KEY: &str = "max_seq_length";
pub const LOWERCASE_KEY: &str = "lower_case";

/// Encoder, pooler and token-classification head with its label set.
#[derive(Debug, Clone, PartialEq)]
pub struct NerModel {
    pub config: ModelConfig,
    pub params: ParameterSet<f32>,
    pub labels: LabelSet,
    pub max_seq_length: usize,
    pub lowercase: bool,
}

impl NerModel {
    /// Drops the pretraining heads and adds a fresh classifier for `labels`.
    pub fn from_pretrained(
        pretrained: &Checkpoint,
        labels: LabelSet,
        max_seq_length: usize,
        lowercase: bool,
        seed: u64,
    ) -> Result<Self, NerError> {
        let mut config = pretrained.config.clone();
        config.num_labels = labels.len();
        let mut params = ParameterSet::new();
        for (name, t) in pretrained.params.iter() {
            let head = ["mlm/", "sop/", "ner/"].iter().any(|p| name.starts_with(p));
            if !head {
                params.insert(name.clone(), t.clone());
            }
        }
        add_ner_head(&mut params, &config, &mut init_stream(seed).fork(1));
        Ok(Self {
            config,
            params,
            labels,
            max_seq_length: max_seq_length.min(pretrained.config.max_positions),
            lowercase,
        })
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new(self.config.clone(), self.params.clone());
        ck.metadata.insert(LABELS_KEY.into(), self.labels.to_list());
        ck.metadata.insert(MAX_LEN_KEY.into(), self.max_seq_length.to_string());
        ck.metadata.insert(LOWERCASE_KEY.into(), self.lowercase.to_string());
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, NerError> {
        let meta = |k: &str| {
            ck.metadata
                .get(k)
                .ok_or_else(|| NerError::Checkpoint(format!("missing {k} in checkpoint header")))
        };
        let labels = LabelSet::from_list(meta(LABELS_KEY)?).map_err(NerError::Checkpoint)?;
        if labels.len() != ck.config.num_labels || !ck.params.contains(names::NER_W) {
            return Err(NerError::Checkpoint("label set does not match the classifier".into()));
        }
        let max_seq_length = meta(MAX_LEN_KEY)?
            .parse()
            .map_err(|_| NerError::Checkpoint("bad max_seq_length".into()))?;
        let lowercase = meta(LOWERCASE_KEY)?
            .parse()
            .map_err(|_| NerError::Checkpoint("bad lower_case".into()))?;
        Ok(Self {
            config: ck.config.clone(),
            params: ck.params.clone(),
            labels,
            max_seq_length,
            lowercase,
        })
    }

    fn prepare_words(&self, words: &[String]) -> Vec<String> {
        if self.lowercase {
            words.iter().map(|w| w.to_lowercase()).collect()
        } else {
            words.to_vec()
        }
    }

    /// Word-level labels; words cut by truncation are labeled "O".
    pub fn predict(&self, vocab: &Vocab, sentences: &[Vec<String>], batch_size: usize) -> Result<Vec<Vec<String>>, NerError> {
        let mut out = Vec::with_capacity(sentences.len());
        for chunk in sentences.chunks(batch_size.max(1)) {
            let aligned = chunk
                .iter()
                .map(|w| align_words(&self.prepare_words(w), vocab, self.max_seq_length))
                .collect::<Result<Vec<_>, _>>()?;
            let mut inputs: Vec<InputSequence> = aligned.iter().map(|a| a.input.clone()).collect();
            let t = trim_to_active(&mut inputs);
            let logits = token_logits(&self.params, &self.config, &inputs)?;
            let k = self.config.num_labels;
            for (b, (a, words)) in aligned.iter().zip(chunk).enumerate() {
                let mut labels = vec!["O".to_string(); words.len()];
                for (w, &pos) in a.word_positions.iter().enumerate() {
                    let row = &logits.data()[(b * t + pos) * k..(b * t + pos + 1) * k];
                    labels[w] = self.labels.label(argmax(row)).to_string();
                }
                out.push(labels);
            }
        }
        Ok(out)
    }

    pub fn evaluate(&self, vocab: &Vocab, examples: &[NerExample], batch_size: usize) -> Result<Evaluation, NerError> {
        let words: Vec<Vec<String>> = examples.iter().map(|e| e.words.clone()).collect();
        let gold: Vec<Vec<String>> = examples.iter().map(|e| e.labels.clone()).collect();
        let pred = self.predict(vocab, &words, batch_size)?;
        evaluate_entities(&gold, &pred)
    }
}

fn argmax<F: Scalar>(row: &[F]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct FinetuneOptions {
    pub batch_size: usize,
    pub eval_batch_size: usize,
    pub schedule: Schedule,
    pub optimizer: OptimizerKind,
    pub hyper: Hyper,
    pub seed: u64,
    /// Dev evaluation interval; the last step is always evaluated.
    pub eval_every: u64,
    pub log_every: u64,
}

#[derive(Debug, Clone)]
pub struct FinetuneOutcome {
    /// Parameters with the best dev F1 (earliest on ties).
    pub best: NerModel,
    pub best_step: u64,
    pub best_dev: Evaluation,
    /// Test scores of `best`, when a test set was given.
    pub test: Option<Evaluation>,
    /// Parameters after the final step.
    pub last: NerModel,
}

struct Encoded {
    input: InputSequence,
    labels: Vec<usize>,
}

/// Fine-tuning (AdamW by default) with periodic dev evaluation and best-model selection.
pub fn finetune(
    model: NerModel,
    vocab: &Vocab,
    train: &[NerExample],
    dev: &[NerExample],
    test: Option<&[NerExample]>,
    opts: &FinetuneOptions,
    log: &mut dyn FnMut(LogRecord),
) -> Result<FinetuneOutcome, NerError> {
    if train.is_empty() || dev.is_empty() {
        return Err(NerError::Train(TrainError::NoExamples));
    }
    if vocab.size() != model.config.vocab_size {
        return Err(NerError::VocabMismatch {
            vocab: vocab.size(),
            model: model.config.vocab_size,
        });
    }
    let encoded = train
        .iter()
        .map(|ex| {
            let ex = NerExample {
                words: model.prepare_words(&ex.words),
                labels: ex.labels.clone(),
            };
            let (a, labels) = align_subwords(&ex, vocab, model.max_seq_length, &model.labels)?;
            Ok(Encoded { input: a.input, labels })
        })
        .collect::<Result<Vec<_>, NerError>>()?;

    let mut current = model;
    let mut optim = OptimizerState::new(&current.params, opts.hyper);
    let mut best: Option<(u64, Evaluation, ParameterSet<f32>)> = None;
    let total = opts.schedule.total_steps;
    for s in 1..=total {
        let idx = batch_indices(opts.seed, s, encoded.len(), opts.batch_size);
        let mut inputs: Vec<InputSequence> = idx.iter().map(|&i| encoded[i].input.clone()).collect();
        let t = trim_to_active(&mut inputs);
        let labels: Vec<Vec<usize>> = idx.iter().map(|&i| encoded[i].labels[..t].to_vec()).collect();
        if labels.iter().flatten().all(|&l| l == IGNORE_INDEX) {
            continue;
        }
        let refs: Vec<&InputSequence> = inputs.iter().collect();
        let lrefs: Vec<&[usize]> = labels.iter().map(Vec::as_slice).collect();
        let mut drop = dropout_stream(opts.seed, s);
        let dropout = (current.config.dropout_rate > 0.0).then_some(&mut drop);
        let (loss, grads) = ner_loss_and_grads(&current.params, &current.config, &refs, &lrefs, dropout)?;
        let lr = opts.schedule.lr_at(s).map_err(TrainError::from)?;
        optim
            .step_with(opts.optimizer, &mut current.params, &grads, lr)
            .map_err(TrainError::from)?;
        if !current.params.is_finite() {
            return Err(NerError::Train(TrainError::NonFinite(s)));
        }
        if s == 1 || s % opts.log_every.max(1) == 0 {
            log(LogRecord::new(s, "loss", loss as f64));
            log(LogRecord::new(s, "lr", lr));
        }
        if s % opts.eval_every.max(1) == 0 || s == total {
            let dev_eval = current.evaluate(vocab, dev, opts.eval_batch_size)?;
            log(LogRecord::new(s, "dev_f1", dev_eval.f1()));
            if best.as_ref().is_none_or(|(_, b, _)| dev_eval.f1() > b.f1()) {
                best = Some((s, dev_eval, current.params.clone()));
            }
        }
    }
    let (best_step, best_dev, best_params) = match best {
        Some(b) => b,
        None => (0, current.evaluate(vocab, dev, opts.eval_batch_size)?, current.params.clone()),
    };
    let best_model = NerModel {
        params: best_params,
        ..current.clone()
    };
    let test = test
        .map(|t| best_model.evaluate(vocab, t, opts.eval_batch_size))
        .transpose()?;
    Ok(FinetuneOutcome {
        best: best_model,
        best_step,
        best_dev,
        test,
        last: current,
    })
}
