use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use albert_cli::{run_from, EFFECTIVE_CONFIG, INCOMPLETE_MARKER, LOCK_FILE};

fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(rel)
}

fn albert(args: &[String]) -> anyhow::Result<()> {
    run_from(std::iter::once("albert".to_string()).chain(args.iter().cloned()))
}

fn args(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

const WORDS: [&str; 12] = [
    "cells", "were", "treated", "with", "aspirin", "and", "the", "tumor", "growth", "slowed", "in", "mice",
];

/// Sentence-per-line corpus plus a tiny BIO split; "aspirin" is the entity.
fn workspace(dir: &Path) {
    let mut corpus = String::new();
    let mut conll = String::new();
    for d in 0..30 {
        for s in 0..3 {
            let words: Vec<&str> = (0..6).map(|i| WORDS[(d * 5 + s * 3 + i * 7) % WORDS.len()]).collect();
            corpus.push_str(&words.join(" "));
            corpus.push('\n');
            for w in &words {
                let tag = if *w == "aspirin" { "B-Chem" } else { "O" };
                conll.push_str(&format!("{w} {tag}\n"));
            }
            conll.push('\n');
        }
        corpus.push('\n');
    }
    fs::write(dir.join("corpus.txt"), corpus).unwrap();
    fs::write(dir.join("ner.conll"), conll).unwrap();
}

fn p(dir: &Path, rel: &str) -> String {
    dir.join(rel).display().to_string()
}

const TINY: [&str; 10] = [
    "embedding_size=8",
    "hidden_size=16",
    "num_hidden_layers=2",
    "num_attention_heads=2",
    "intermediate_size=32",
    "max_position_embeddings=32",
    "max_seq_length=32",
    "train_batch_size=8",
    "learning_rate=0.01",
    "warmup_steps=2",
];

fn pretrain_args(dir: &Path, out: &str, extra: &[&str]) -> Vec<String> {
    let mut a = args(&["pretrain", "--out", &p(dir, out), "--seed", "3"]);
    a.push(format!("corpus_file={}", p(dir, "corpus.txt")));
    a.push(format!("vocab_file={}", p(dir, "vocab/vocab.txt")));
    a.extend(args(&TINY));
    a.extend(args(extra));
    a
}

fn build_vocab(dir: &Path) {
    albert(&args(&[
        "build-vocab",
        "--out",
        &p(dir, "vocab"),
        &format!("corpus_file={}", p(dir, "corpus.txt")),
        "vocab_size=300",
    ]))
    .unwrap();
}

#[test]
fn evaluate_gold_against_itself_scores_one() {
    let dir = tempfile::tempdir().unwrap();
    let gold = fixture("stats.conll").display().to_string();
    albert(&args(&[
        "evaluate",
        "--out",
        &p(dir.path(), "eval"),
        &format!("gold_file={gold}"),
        &format!("pred_file={gold}"),
    ]))
    .unwrap();
    let kv = fs::read_to_string(dir.path().join("eval/metrics.kv")).unwrap();
    assert!(kv.starts_with("precision=1.0000\nrecall=1.0000\nf1=1.0000\n"), "{kv}");
    assert!(kv.contains("Disease.f1=1.0000"), "{kv}");
    let report = fs::read_to_string(dir.path().join("eval/metrics.txt")).unwrap();
    assert!(report.contains("micro-averaged"), "{report}");
}

#[test]
fn bad_value_exits_nonzero_with_one_line() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_albert"))
        .args(["stats", "--out", &p(dir.path(), "s"), "hidden_size=abc"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.contains("hidden_size"), "{err}");
}

#[test]
fn failed_run_is_marked_incomplete_and_unlocked() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s");
    let status = Command::new(env!("CARGO_BIN_EXE_albert"))
        .args(["stats", "--out", out.to_str().unwrap(), "conll_file=/nonexistent/x.conll"])
        .status()
        .unwrap();
    assert!(!status.success());
    assert!(out.join(INCOMPLETE_MARKER).exists());
    assert!(!out.join(LOCK_FILE).exists());
    assert!(out.join(EFFECTIVE_CONFIG).exists());
}

#[test]
fn config_file_is_overridden_by_command_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# desk run\nhidden_size=64\nseed=9\n").unwrap();
    albert(&args(&[
        "stats",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        &p(dir.path(), "s"),
        &format!("conll_file={}", fixture("stats.conll").display()),
        "hidden_size=32",
    ]))
    .unwrap();
    let eff = fs::read_to_string(dir.path().join("s").join(EFFECTIVE_CONFIG)).unwrap();
    assert!(eff.contains("\nhidden_size=32\n"), "{eff}");
    assert!(eff.contains("\nseed=9\n"), "{eff}");
    assert!(!dir.path().join("s").join(INCOMPLETE_MARKER).exists());
}

#[test]
fn unknown_key_in_file_names_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "seed=1\nhiden_size=3\n").unwrap();
    let err = albert(&args(&["stats", "--config", cfg.to_str().unwrap(), "--out", &p(dir.path(), "s")])).unwrap_err();
    let msg = format!("{err:#}");
    assert!(msg.contains("bad.cfg:2") && msg.contains("hiden_size"), "{msg}");
}

#[test]
fn resumed_pretraining_matches_uninterrupted_run() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    workspace(d);
    build_vocab(d);
    let common = ["train_steps=20", "save_checkpoint_steps=5", "log_every=2"];
    albert(&pretrain_args(d, "full", &common)).unwrap();

    let mut first = common.to_vec();
    first.push("stop_at_step=10");
    albert(&pretrain_args(d, "split", &first)).unwrap();
    let log = fs::read_to_string(d.join("split/train.log")).unwrap();
    assert!(log.lines().last().unwrap().starts_with("10\t"), "{log}");
    let mut second = common.to_vec();
    second.push("resume=true");
    albert(&pretrain_args(d, "split", &second)).unwrap();

    for f in ["train.log", "model.ckpt"] {
        assert_eq!(
            fs::read(d.join("full").join(f)).unwrap(),
            fs::read(d.join("split").join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn resume_rejects_changed_architecture() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    workspace(d);
    build_vocab(d);
    albert(&pretrain_args(d, "run", &["train_steps=4", "save_checkpoint_steps=2"])).unwrap();
    let err = albert(&pretrain_args(d, "run", &["train_steps=8", "resume=true", "hidden_size=24", "num_attention_heads=2"]))
        .unwrap_err();
    assert!(format!("{err:#}").contains("hidden_size"), "{err:#}");
}

fn hashes(paths: &[PathBuf]) -> Vec<Vec<u8>> {
    paths.iter().map(|p| fs::read(p).unwrap()).collect()
}

#[test]
fn full_pipeline_leaves_inputs_untouched() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    workspace(d);
    build_vocab(d);
    albert(&pretrain_args(d, "pre", &["train_steps=6", "save_checkpoint_steps=3"])).unwrap();

    let inputs: Vec<PathBuf> = ["corpus.txt", "ner.conll", "vocab/vocab.txt", "vocab/merges.txt", "pre/model.ckpt"]
        .iter()
        .map(|r| d.join(r))
        .collect();
    let before = hashes(&inputs);

    let ner = p(d, "ner.conll");
    let mut ft = args(&["finetune", "--out", &p(d, "ft"), "--seed", "4"]);
    ft.extend([
        format!("checkpoint={}", p(d, "pre/model.ckpt")),
        format!("vocab_file={}", p(d, "vocab/vocab.txt")),
        format!("train_file={ner}"),
        format!("dev_file={ner}"),
        format!("test_file={ner}"),
    ]);
    ft.extend(args(&["train_steps=8", "warmup_steps=2", "save_checkpoint_steps=4", "learning_rate=0.005", "max_seq_length=32"]));
    albert(&ft).unwrap();
    let log = fs::read_to_string(d.join("ft/train.log")).unwrap();
    assert!(log.lines().any(|l| l.starts_with("4\tdev_f1\t")), "{log}");
    assert!(log.lines().all(|l| l.split('\t').count() == 3));

    albert(&args(&[
        "predict",
        "--out",
        &p(d, "pred"),
        &format!("checkpoint={}", p(d, "ft/model.ckpt")),
        &format!("vocab_file={}", p(d, "vocab/vocab.txt")),
        &format!("input_file={ner}"),
    ]))
    .unwrap();
    let (gold, _) = albert_core::ner::read_conll(&d.join("ner.conll")).unwrap();
    let (pred, _) = albert_core::ner::read_conll(&d.join("pred/predictions.conll")).unwrap();
    assert_eq!(gold.len(), pred.len());
    assert!(gold.iter().zip(&pred).all(|(g, q)| g.words == q.words));

    // scoring the predictions file agrees with scoring the checkpoint directly
    albert(&args(&[
        "evaluate",
        "--out",
        &p(d, "eval_pred"),
        &format!("gold_file={ner}"),
        &format!("pred_file={}", p(d, "pred/predictions.conll")),
    ]))
    .unwrap();
    albert(&args(&[
        "evaluate",
        "--out",
        &p(d, "eval_model"),
        &format!("gold_file={ner}"),
        &format!("checkpoint={}", p(d, "ft/model.ckpt")),
        &format!("vocab_file={}", p(d, "vocab/vocab.txt")),
    ]))
    .unwrap();
    let a = fs::read_to_string(d.join("eval_pred/metrics.kv")).unwrap();
    assert_eq!(a, fs::read_to_string(d.join("eval_model/metrics.kv")).unwrap());
    assert_eq!(a, fs::read_to_string(d.join("ft/test_metrics.kv")).unwrap());

    assert_eq!(before, hashes(&inputs));
}

#[test]
fn finetune_rejects_unseen_dev_labels() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    workspace(d);
    build_vocab(d);
    albert(&pretrain_args(d, "pre", &["train_steps=3", "save_checkpoint_steps=3"])).unwrap();
    fs::write(d.join("dev.conll"), "aspirin B-Drug\nhelps O\n").unwrap();
    let mut ft = args(&["finetune", "--out", &p(d, "ft")]);
    ft.extend([
        format!("checkpoint={}", p(d, "pre/model.ckpt")),
        format!("vocab_file={}", p(d, "vocab/vocab.txt")),
        format!("train_file={}", p(d, "ner.conll")),
        format!("dev_file={}", p(d, "dev.conll")),
        "max_seq_length=32".into(),
    ]);
    let err = albert(&ft).unwrap_err();
    assert!(format!("{err:#}").contains("dev_file"), "{err:#}");
}

#[test]
fn prep_corpus_refuses_to_overwrite_its_input() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    fs::create_dir_all(&out).unwrap();
    let raw = out.join("corpus.txt");
    fs::write(&raw, "A sentence that is long enough to keep.\n").unwrap();
    let err = albert(&args(&["prep-corpus", "--out", out.to_str().unwrap(), &format!("raw_files={}", raw.display())]))
        .unwrap_err();
    assert!(format!("{err:#}").contains("overwritten"), "{err:#}");
    assert_eq!(fs::read_to_string(&raw).unwrap(), "A sentence that is long enough to keep.\n");
}
