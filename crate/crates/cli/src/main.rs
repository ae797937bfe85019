//! `abstain` command-line front end. Every subcommand prints one JSON report.

mod compare;
mod data;
mod eval;
mod masks;
mod ood;
mod tables;

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use abstain::{report, ErrorKind};
use anyhow::Context;
use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "abstain", version, about = "Confidence scoring, abstention, and evaluation toolkit")]
#[command(after_help = FILE_FORMATS)]
struct Cli {
    /// Seed for every stochastic step.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    /// Where to write the JSON report (stdout when omitted). For `pseudomask`
    /// this is the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

const FILE_FORMATS: &str = "\
File formats:
  logits CSV     id,split,label,logit_0,...,logit_{C-1}   (split: train|val|test|ood; label empty for ood)
  features CSV   id,split,label,x_0,...,x_{D-1}
  scores CSV     id,split,label,score                      (written by `score --format csv`)
  predictions    id,label,prediction                       (class indices)
  labels CSV     id,label                                  (index or class name)
  values CSV     one numeric column, named by --column (default `value`)
  masks          binary PGM (P5, maxval 255, >=128 is foreground)
  images         binary PPM (P6) or PGM (P5), maxval 255";

#[derive(Subcommand)]
enum Command {
    /// Confidence scores (MSP, Energy, ODIN) from logits or a saved model.
    Score(ood::ScoreArgs),
    /// AUROC, AUPR-In and FPR@95TPR with ID rows as positives.
    OodEval(ood::OodEvalArgs),
    /// Coverage and rejection over a list of thresholds.
    Sweep(ood::SweepArgs),
    /// Confusion matrix, per-class and macro precision/recall/F1, loss.
    ClsEval(eval::ClsEvalArgs),
    /// IoU, Dice, precision, recall and pixel accuracy with bootstrap CIs.
    SegEval(eval::SegEvalArgs),
    /// Continuity-corrected McNemar test and paired accuracy difference.
    Mcnemar(compare::McnemarArgs),
    /// Percentile bootstrap CI for the mean or median of a column.
    Bootstrap(compare::BootstrapArgs),
    /// Perceptual-hash near-duplicate clustering.
    Dedup(data::DedupArgs),
    /// Stratified train/val/test split.
    Split(data::SplitArgs),
    /// Stratified nested fold plan with leakage audit.
    Folds(data::FoldsArgs),
    /// Nested cross-validation with two-stage grid search on the tiny model.
    NestedCv(data::NestedCvArgs),
    /// Box-initialised GrabCut pseudo-masks for a directory of PPM images.
    Pseudomask(masks::PseudomaskArgs),
    /// End-to-end run on synthetic features.
    Demo(DemoArgs),
}

#[derive(clap::Args)]
struct DemoArgs {
    /// Samples per in-distribution class.
    #[arg(long, default_value_t = 200)]
    per_class: usize,
    /// Samples in the unseen blob.
    #[arg(long, default_value_t = 200)]
    ood_samples: usize,
    #[arg(long, default_value_t = 30)]
    epochs: usize,
}

/// Flag combinations that clap cannot express; exit code 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

pub struct Ctx {
    pub seed: u64,
    pub out: Option<PathBuf>,
}

impl Ctx {
    pub fn emit<T: Serialize>(&self, command: &str, body: &T) -> anyhow::Result<()> {
        let value = report::envelope(command, self.seed, body)?;
        let text = report::render(&value);
        match &self.out {
            Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display()))?,
            None => std::io::stdout().lock().write_all(text.as_bytes())?,
        }
        Ok(())
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let ctx = Ctx { seed: cli.seed, out: cli.out };
    match cli.command {
        Command::Score(a) => ood::score(&ctx, a),
        Command::OodEval(a) => ood::ood_eval(&ctx, a),
        Command::Sweep(a) => ood::sweep(&ctx, a),
        Command::ClsEval(a) => eval::cls_eval(&ctx, a),
        Command::SegEval(a) => eval::seg_eval(&ctx, a),
        Command::Mcnemar(a) => compare::mcnemar(&ctx, a),
        Command::Bootstrap(a) => compare::bootstrap(&ctx, a),
        Command::Dedup(a) => data::dedup(&ctx, a),
        Command::Split(a) => data::split(&ctx, a),
        Command::Folds(a) => data::folds(&ctx, a),
        Command::NestedCv(a) => data::nested_cv(&ctx, a),
        Command::Pseudomask(a) => masks::pseudomask(&ctx, a),
        Command::Demo(a) => {
            let cfg = abstain::demo::DemoConfig {
                seed: ctx.seed,
                per_class: a.per_class,
                ood_samples: a.ood_samples,
                epochs: a.epochs,
                ..Default::default()
            };
            ctx.emit("demo", &abstain::demo::run(&cfg)?)
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        return 1;
    }
    match err.downcast_ref::<abstain::Error>().map(abstain::Error::kind) {
        Some(ErrorKind::Numeric) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let command = Cli::command().mut_subcommands(|sub| sub.after_help(FILE_FORMATS));
    let cli = match command.try_get_matches().and_then(|m| Cli::from_arg_matches(&m)) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
