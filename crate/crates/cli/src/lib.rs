//! Single `albert` binary: corpus preparation, vocabulary training,
//! pretraining, NER fine-tuning, evaluation, prediction and dataset stats.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use config::{parse_config, Command, RunConfig};

/// Marker left in the output directory until a command finishes cleanly.
pub const INCOMPLETE_MARKER: &str = "INCOMPLETE";
pub const LOCK_FILE: &str = ".lock";
pub const EFFECTIVE_CONFIG: &str = "effective.cfg";

#[derive(Debug, Parser)]
#[command(name = "albert", version, about = "Factorized, layer-shared encoder pretraining and NER fine-tuning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Clean raw documents into a sentence-per-line corpus.
    PrepCorpus(Common),
    /// Train a byte-level BPE vocabulary on a prepared corpus.
    BuildVocab(Common),
    /// Pretrain with masked-LM and sentence-order objectives.
    Pretrain(Common),
    /// Fine-tune a pretrained checkpoint for BIO tagging.
    Finetune(Common),
    /// Score predictions (or a fine-tuned checkpoint) against gold CoNLL.
    Evaluate(Common),
    /// Tag sentences with a fine-tuned checkpoint.
    Predict(Common),
    /// Count sentences, tokens and annotations.
    Stats(Common),
}

#[derive(Debug, Args)]
pub struct Common {
    /// key=value config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Run directory; all outputs go here.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    pub threads: Option<usize>,
    /// key=value overrides, applied last.
    pub overrides: Vec<String>,
}

impl Cmd {
    pub fn name(&self) -> &'static str {
        self.parts().0.name()
    }

    fn parts(&self) -> (Command, &Common) {
        match self {
            Cmd::PrepCorpus(c) => (Command::PrepCorpus, c),
            Cmd::BuildVocab(c) => (Command::BuildVocab, c),
            Cmd::Pretrain(c) => (Command::Pretrain, c),
            Cmd::Finetune(c) => (Command::Finetune, c),
            Cmd::Evaluate(c) => (Command::Evaluate, c),
            Cmd::Predict(c) => (Command::Predict, c),
            Cmd::Stats(c) => (Command::Stats, c),
        }
    }
}

/// Holds the output-directory lock; the lock is released on drop.
struct RunDir {
    out: PathBuf,
}

impl RunDir {
    fn open(out: &Path) -> Result<Self> {
        fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
        let lock = out.join(LOCK_FILE);
        match fs::OpenOptions::new().write(true).create_new(true).open(&lock) {
            Ok(_) => {}
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                bail!("{} is in use by another run (remove {} if none is active)", out.display(), lock.display())
            }
            Err(e) => return Err(e).with_context(|| format!("cannot create {}", lock.display())),
        }
        let dir = Self { out: out.to_path_buf() };
        fs::write(out.join(INCOMPLETE_MARKER), "")?;
        Ok(dir)
    }

    fn finish(self) -> Result<()> {
        fs::remove_file(self.out.join(INCOMPLETE_MARKER))?;
        Ok(())
    }
}

impl Drop for RunDir {
    fn drop(&mut self) {
        let _ = fs::remove_file(self.out.join(LOCK_FILE));
    }
}

/// Effective configuration for a parsed command line.
pub fn effective_config(cli: &Cli) -> Result<RunConfig> {
    let (command, common) = cli.command.parts();
    let mut overrides = common.overrides.clone();
    if let Some(s) = common.seed {
        overrides.push(format!("seed={s}"));
    }
    if let Some(t) = common.threads {
        overrides.push(format!("threads={t}"));
    }
    Ok(parse_config(command, common.config.as_deref(), &overrides)?)
}

pub fn run(cli: &Cli) -> Result<()> {
    let (command, common) = cli.command.parts();
    let cfg = effective_config(cli)?;
    let dir = RunDir::open(&common.out)?;
    fs::write(common.out.join(EFFECTIVE_CONFIG), cfg.render())?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.usize("threads")).build()?;
    pool.install(|| commands::dispatch(command, &cfg, &common.out))?;
    dir.finish()
}

/// Parses `args` (program name first) and runs the command.
pub fn run_from<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args)?;
    run(&cli)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lock_blocks_second_run_and_is_released() {
        let dir = tempfile::tempdir().unwrap();
        let first = RunDir::open(dir.path()).unwrap();
        let err = RunDir::open(dir.path()).err().unwrap();
        assert!(err.to_string().contains("in use"), "{err}");
        assert!(dir.path().join(INCOMPLETE_MARKER).exists());
        first.finish().unwrap();
        assert!(!dir.path().join(INCOMPLETE_MARKER).exists());
        assert!(!dir.path().join(LOCK_FILE).exists());
        RunDir::open(dir.path()).unwrap();
    }

    #[test]
    fn flags_override_positional_keys() {
        let cli = Cli::try_parse_from(["albert", "pretrain", "--out", "x", "--seed", "7", "seed=3", "hidden_size=32"]).unwrap();
        let cfg = effective_config(&cli).unwrap();
        assert_eq!(cfg.u64("seed"), 7);
        assert_eq!(cfg.usize("hidden_size"), 32);
    }
}
