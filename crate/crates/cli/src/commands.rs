//! One function per subcommand. Each reads its inputs from the config and
//! writes only under `out`.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};

use albert_core::corpus::{
    build_pretrain_examples, corpus_stats, preprocess_raw, read_examples, split_documents, write_examples,
    ExampleOptions, PretrainExample,
};
use albert_core::model::{Checkpoint, HeadSet, ModelConfig};
use albert_core::ner::{
    dataset_stats, finetune, read_conll, write_conll, Evaluation, FinetuneOptions, NerError, NerExample, NerModel,
};
use albert_core::numerics::RngStream;
use albert_core::optim::{Hyper, OptimizerKind, Schedule};
use albert_core::tokenizer::{train_vocab, Vocab};
use albert_core::training::{pretrain_steps, LogRecord, PretrainOptions, TrainState, STEP_KEY};

use crate::config::{Command, RunConfig};

pub const CORPUS_OUT: &str = "corpus.txt";
pub const VOCAB_OUT: &str = "vocab.txt";
pub const MERGES_OUT: &str = "merges.txt";
pub const EXAMPLES_OUT: &str = "examples.bin";
pub const CHECKPOINT_OUT: &str = "model.ckpt";
pub const LOG_OUT: &str = "train.log";
pub const STATS_OUT: &str = "stats.txt";
pub const PREDICTIONS_OUT: &str = "predictions.conll";

/// Key under which the example-building stream is forked from the seed.
const EXAMPLE_STREAM: u64 = 0xE8A4;

pub fn dispatch(command: Command, cfg: &RunConfig, out: &Path) -> Result<()> {
    match command {
        Command::PrepCorpus => prep_corpus(cfg, out),
        Command::BuildVocab => build_vocab(cfg, out),
        Command::Pretrain => pretrain(cfg, out),
        Command::Finetune => finetune_cmd(cfg, out),
        Command::Evaluate => evaluate(cfg, out),
        Command::Predict => predict(cfg, out),
        Command::Stats => stats(cfg, out),
    }
}

/// Refuses to run when an input is also one of this command's outputs.
fn guard_input(input: &Path, out: &Path, outputs: &[&str]) -> Result<()> {
    let Ok(input) = input.canonicalize() else {
        return Ok(());
    };
    for name in outputs {
        if out.join(name).canonicalize().is_ok_and(|o| o == input) {
            bail!("input {} would be overwritten by this run", input.display());
        }
    }
    Ok(())
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn load_vocab(cfg: &RunConfig) -> Result<Vocab> {
    let vocab = cfg.require_path("vocab_file")?;
    let merges = cfg
        .path("merges_file")
        .unwrap_or_else(|| vocab.with_file_name(MERGES_OUT));
    Vocab::load(&vocab, &merges).with_context(|| format!("cannot load vocabulary {}", vocab.display()))
}

fn hyper(cfg: &RunConfig) -> Hyper {
    Hyper {
        beta1: cfg.f64("adam_beta1"),
        beta2: cfg.f64("adam_beta2"),
        eps: cfg.f64("adam_epsilon"),
        weight_decay: cfg.f64("weight_decay"),
    }
}

fn optimizer(cfg: &RunConfig) -> OptimizerKind {
    match cfg.get("optimizer") {
        "lamb" => OptimizerKind::Lamb,
        _ => OptimizerKind::AdamW,
    }
}

fn schedule(cfg: &RunConfig) -> Result<Schedule> {
    Ok(Schedule::new(
        cfg.f64("learning_rate"),
        cfg.u64("warmup_steps"),
        cfg.u64("train_steps"),
    )?)
}

/// Architecture keys; the vocabulary size comes from the loaded vocabulary.
pub fn model_config(cfg: &RunConfig, vocab_size: usize) -> Result<ModelConfig> {
    let config = ModelConfig {
        vocab_size,
        embedding_size: cfg.usize("embedding_size"),
        hidden_size: cfg.usize("hidden_size"),
        num_layers: cfg.usize("num_hidden_layers"),
        num_heads: cfg.usize("num_attention_heads"),
        intermediate_size: cfg.usize("intermediate_size"),
        max_positions: cfg.usize("max_position_embeddings"),
        type_vocab_size: cfg.usize("type_vocab_size"),
        share_parameters: cfg.bool("share_parameters"),
        dropout_rate: cfg.f64("dropout_rate"),
        num_labels: 0,
    };
    config.validate()?;
    ensure!(
        cfg.usize("max_seq_length") <= config.max_positions,
        "max_seq_length {} exceeds max_position_embeddings {}",
        cfg.usize("max_seq_length"),
        config.max_positions
    );
    Ok(config)
}

fn raw_inputs(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for p in cfg.paths("raw_files") {
        if p.is_dir() {
            let mut entries = fs::read_dir(&p)
                .with_context(|| format!("cannot list {}", p.display()))?
                .map(|e| e.map(|e| e.path()))
                .collect::<Result<Vec<_>, _>>()?;
            entries.retain(|e| e.is_file());
            entries.sort();
            files.extend(entries);
        } else {
            files.push(p);
        }
    }
    ensure!(!files.is_empty(), "raw_files names no input files");
    Ok(files)
}

/// Each raw file is one document.
fn prep_corpus(cfg: &RunConfig, out: &Path) -> Result<()> {
    let files = raw_inputs(cfg)?;
    for f in &files {
        guard_input(f, out, &[CORPUS_OUT, STATS_OUT])?;
    }
    let raw = files
        .iter()
        .map(|f| Ok((f.display().to_string(), fs::read(f).with_context(|| format!("cannot read {}", f.display()))?)))
        .collect::<Result<Vec<_>>>()?;
    let corpus = preprocess_raw(&raw)?;
    fs::write(out.join(CORPUS_OUT), &corpus)?;
    let s = corpus_stats(&corpus);
    let report = format!("documents={}\nsentences={}\nwords={}\n", s.documents, s.sentences, s.words);
    fs::write(out.join(STATS_OUT), &report)?;
    print!("{report}");
    Ok(())
}

fn corpus_text(cfg: &RunConfig) -> Result<String> {
    let text = read_text(&cfg.require_path("corpus_file")?)?;
    Ok(if cfg.bool("lower_case") { text.to_lowercase() } else { text })
}

fn build_vocab(cfg: &RunConfig, out: &Path) -> Result<()> {
    let corpus = corpus_text(cfg)?;
    let vocab = train_vocab(&corpus, cfg.usize("vocab_size"))?;
    vocab.save(&out.join(VOCAB_OUT), &out.join(MERGES_OUT))?;
    println!("vocabulary size {}", vocab.size());
    Ok(())
}

fn tokenized_documents(cfg: &RunConfig, vocab: &Vocab) -> Result<Vec<Vec<Vec<u32>>>> {
    let corpus = corpus_text(cfg)?;
    Ok(split_documents(&corpus)
        .iter()
        .map(|d| {
            d.sentences
                .iter()
                .map(|s| vocab.encode(s))
                .filter(|ids| !ids.is_empty())
                .collect()
        })
        .collect())
}

fn example_options(cfg: &RunConfig) -> ExampleOptions {
    ExampleOptions {
        max_seq_length: cfg.usize("max_seq_length"),
        mask_rate: cfg.f64("masked_lm_prob"),
        max_predictions: cfg.usize("max_predictions_per_seq"),
        dup_factor: cfg.usize("dup_factor"),
    }
}

/// Builds the example cache on a fresh run; a resumed run reuses it.
fn pretraining_examples(cfg: &RunConfig, vocab: &Vocab, out: &Path, reuse: bool) -> Result<Vec<PretrainExample>> {
    let cache = out.join(EXAMPLES_OUT);
    if reuse && cache.exists() {
        return Ok(read_examples(&cache)?);
    }
    let docs = tokenized_documents(cfg, vocab)?;
    let mut rng = RngStream::new(cfg.u64("seed")).fork(EXAMPLE_STREAM);
    let examples = build_pretrain_examples(&docs, vocab.size(), &example_options(cfg), &mut rng)?;
    ensure!(!examples.is_empty(), "corpus yields no pretraining examples (need documents with two or more sentences)");
    write_examples(&cache, &examples)?;
    Ok(examples)
}

/// Keeps the log lines at or before `step`.
fn truncate_log(path: &Path, step: u64) -> Result<()> {
    let text = fs::read_to_string(path).unwrap_or_default();
    let kept: String = text
        .lines()
        .filter(|l| {
            l.split('\t')
                .next()
                .and_then(|s| s.parse::<u64>().ok())
                .is_some_and(|s| s <= step)
        })
        .map(|l| format!("{l}\n"))
        .collect();
    fs::write(path, kept)?;
    Ok(())
}

fn append_log(path: &Path, records: &[LogRecord]) -> Result<()> {
    let mut f = fs::OpenOptions::new().create(true).append(true).open(path)?;
    for r in records {
        writeln!(f, "{r}")?;
    }
    Ok(())
}

fn pretrain(cfg: &RunConfig, out: &Path) -> Result<()> {
    let corpus = cfg.require_path("corpus_file")?;
    guard_input(&corpus, out, &[CHECKPOINT_OUT, LOG_OUT, EXAMPLES_OUT])?;
    let vocab = load_vocab(cfg)?;
    let config = model_config(cfg, vocab.size())?;
    let ckpt_path = out.join(CHECKPOINT_OUT);
    let log_path = out.join(LOG_OUT);
    let resume = cfg.bool("resume") && ckpt_path.exists();

    let examples = pretraining_examples(cfg, &vocab, out, resume)?;
    let mut state = if resume {
        let ck = Checkpoint::load_expecting(&ckpt_path, &config)?;
        let state = TrainState::from_checkpoint(&ck, hyper(cfg))?;
        truncate_log(&log_path, state.step())?;
        println!("resuming at step {}", state.step());
        state
    } else {
        fs::write(&log_path, "")?;
        TrainState::init(&config, HeadSet::PRETRAINING, cfg.u64("seed"), hyper(cfg))?
    };

    let opts = PretrainOptions {
        batch_size: cfg.usize("train_batch_size"),
        schedule: schedule(cfg)?,
        optimizer: optimizer(cfg),
        seed: cfg.u64("seed"),
        log_every: cfg.u64("log_every"),
    };
    let total = match cfg.u64("stop_at_step") {
        0 => opts.schedule.total_steps,
        s => s.min(opts.schedule.total_steps),
    };
    let every = cfg.u64("save_checkpoint_steps").max(1);
    while state.step() < total {
        let until = ((state.step() / every + 1) * every).min(total);
        let mut records = Vec::new();
        pretrain_steps(&mut state, &examples, &opts, until, &mut |r| records.push(r))?;
        append_log(&log_path, &records)?;
        state.to_checkpoint().save(&ckpt_path)?;
    }
    if !ckpt_path.exists() {
        state.to_checkpoint().save(&ckpt_path)?;
    }
    println!("pretrained {} steps on {} examples", state.step(), examples.len());
    Ok(())
}

fn read_labeled(path: &Path) -> Result<(Vec<NerExample>, albert_core::ner::LabelSet)> {
    read_conll(path).with_context(|| format!("cannot read {}", path.display()))
}

fn write_metrics(out: &Path, stem: &str, eval: &Evaluation) -> Result<()> {
    fs::write(out.join(format!("{stem}.txt")), eval.to_report())?;
    fs::write(out.join(format!("{stem}.kv")), eval.to_key_values())?;
    Ok(())
}

fn finetune_cmd(cfg: &RunConfig, out: &Path) -> Result<()> {
    let ckpt = cfg.require_path("checkpoint")?;
    guard_input(&ckpt, out, &[CHECKPOINT_OUT])?;
    let vocab = load_vocab(cfg)?;
    let (train, labels) = read_labeled(&cfg.require_path("train_file")?)?;
    let (dev, dev_labels) = read_labeled(&cfg.require_path("dev_file")?)?;
    let test = cfg.path("test_file").map(|p| read_labeled(&p)).transpose()?;
    for (name, other) in [("dev_file", Some(&dev_labels)), ("test_file", test.as_ref().map(|t| &t.1))] {
        if let Some(other) = other {
            if !labels.contains_all(other) {
                return Err(NerError::IncompatibleLabels(format!(
                    "{name} uses labels [{}] not all present in train_file [{}]",
                    other.to_list(),
                    labels.to_list()
                ))
                .into());
            }
        }
    }

    let pretrained = Checkpoint::load(&ckpt)?;
    let seed = cfg.u64("seed");
    let model = NerModel::from_pretrained(&pretrained, labels, cfg.usize("max_seq_length"), cfg.bool("lower_case"), seed)?;
    let mut model = model;
    model.config.dropout_rate = cfg.f64("dropout_rate");
    let opts = FinetuneOptions {
        batch_size: cfg.usize("train_batch_size"),
        eval_batch_size: cfg.usize("eval_batch_size"),
        schedule: schedule(cfg)?,
        optimizer: optimizer(cfg),
        hyper: hyper(cfg),
        seed,
        eval_every: cfg.u64("save_checkpoint_steps"),
        log_every: cfg.u64("log_every"),
    };
    let mut records = Vec::new();
    let outcome = finetune(
        model,
        &vocab,
        &train,
        &dev,
        test.as_ref().map(|t| t.0.as_slice()),
        &opts,
        &mut |r| records.push(r),
    )?;
    let log_path = out.join(LOG_OUT);
    fs::write(&log_path, "")?;
    append_log(&log_path, &records)?;
    let mut ck = outcome.best.to_checkpoint();
    ck.metadata.insert("best_step".into(), outcome.best_step.to_string());
    ck.metadata.remove(STEP_KEY);
    ck.save(&out.join(CHECKPOINT_OUT))?;
    write_metrics(out, "dev_metrics", &outcome.best_dev)?;
    println!("best dev f1 {:.4} at step {}", outcome.best_dev.f1(), outcome.best_step);
    if let Some(t) = &outcome.test {
        write_metrics(out, "test_metrics", t)?;
        print!("{}", t.to_report());
    }
    Ok(())
}

fn load_ner_model(cfg: &RunConfig) -> Result<NerModel> {
    let path = cfg.require_path("checkpoint")?;
    let ck = Checkpoint::load(&path).with_context(|| format!("cannot load {}", path.display()))?;
    Ok(NerModel::from_checkpoint(&ck)?)
}

/// Scores `pred_file` against `gold_file`, or without `pred_file` tags the
/// gold (or test) file with `checkpoint` first.
fn evaluate(cfg: &RunConfig, out: &Path) -> Result<()> {
    let gold_path = cfg
        .path("gold_file")
        .or_else(|| cfg.path("test_file"))
        .ok_or_else(|| anyhow::anyhow!("missing required setting gold_file"))?;
    let (gold, _) = read_labeled(&gold_path)?;
    let eval = match cfg.path("pred_file") {
        Some(p) => {
            let (pred, _) = read_labeled(&p)?;
            ensure!(
                pred.len() == gold.len(),
                "{} has {} sentences but {} has {}",
                p.display(),
                pred.len(),
                gold_path.display(),
                gold.len()
            );
            for (i, (g, q)) in gold.iter().zip(&pred).enumerate() {
                ensure!(g.words == q.words, "sentence {} differs between gold and prediction files", i + 1);
            }
            let gl: Vec<Vec<String>> = gold.into_iter().map(|e| e.labels).collect();
            let pl: Vec<Vec<String>> = pred.into_iter().map(|e| e.labels).collect();
            albert_core::ner::evaluate_entities(&gl, &pl)?
        }
        None => {
            let model = load_ner_model(cfg)?;
            model.evaluate(&load_vocab(cfg)?, &gold, cfg.usize("eval_batch_size"))?
        }
    };
    write_metrics(out, "metrics", &eval)?;
    print!("{}", eval.to_report());
    Ok(())
}

/// Sentences from a one-word-per-line file; extra columns are ignored.
fn read_words(path: &Path) -> Result<Vec<Vec<String>>> {
    let text = read_text(path)?;
    let mut sentences = Vec::new();
    let mut current = Vec::new();
    for line in text.lines() {
        let Some(word) = line.split_whitespace().next() else {
            if !current.is_empty() {
                sentences.push(std::mem::take(&mut current));
            }
            continue;
        };
        if word.starts_with("-DOCSTART-") {
            continue;
        }
        current.push(word.to_string());
    }
    if !current.is_empty() {
        sentences.push(current);
    }
    Ok(sentences)
}

fn predict(cfg: &RunConfig, out: &Path) -> Result<()> {
    let input = cfg.require_path("input_file")?;
    guard_input(&input, out, &[PREDICTIONS_OUT])?;
    let model = load_ner_model(cfg)?;
    let vocab = load_vocab(cfg)?;
    let sentences = read_words(&input)?;
    let labels = model.predict(&vocab, &sentences, cfg.usize("eval_batch_size"))?;
    let examples: Vec<NerExample> = sentences
        .into_iter()
        .zip(labels)
        .map(|(words, labels)| NerExample { words, labels })
        .collect();
    fs::write(out.join(PREDICTIONS_OUT), write_conll(&examples))?;
    println!("tagged {} sentences", examples.len());
    Ok(())
}

fn stats(cfg: &RunConfig, out: &Path) -> Result<()> {
    let report = if let Some(p) = cfg.path("conll_file") {
        let s = dataset_stats(&p).with_context(|| format!("cannot read {}", p.display()))?;
        format!("sentences={}\ntokens={}\nannotations={}\n", s.sentences, s.tokens, s.annotations)
    } else if let Some(p) = cfg.path("corpus_file") {
        let s = corpus_stats(&read_text(&p)?);
        format!("documents={}\nsentences={}\nwords={}\n", s.documents, s.sentences, s.words)
    } else {
        bail!("stats needs conll_file or corpus_file");
    };
    fs::write(out.join(STATS_OUT), &report)?;
    print!("{report}");
    Ok(())
}
