use std::fs;
use std::path::PathBuf;

use abstain::data_model::Split;
use abstain::hygiene::{
    cluster_near_duplicates, nested_cv_run, nested_fold_plan, phash64, stratified_split, DedupReport, HashEntry, HyperGrid,
    NestedCvReport, SearchSetup, DEFAULT_MAX_DIST, DEFAULT_RATIOS,
};
use abstain::io::{read_feature_csv, read_image};
use abstain::tiny_model::{train, TinyClassifier, TrainConfig};
use abstain::{rng, Error};
use anyhow::Context;
use clap::{Args, ValueEnum};
use serde::Serialize;

use crate::tables::read_labels;
use crate::{usage, Ctx};

#[derive(Args)]
pub struct DedupArgs {
    /// Directory of PPM/PGM images.
    #[arg(long = "in")]
    input: PathBuf,
    /// Largest Hamming distance still counted as a near duplicate.
    #[arg(long, default_value_t = DEFAULT_MAX_DIST)]
    max_dist: u32,
    /// Also write the kept file names, one per line.
    #[arg(long)]
    keep_list: Option<PathBuf>,
}

#[derive(Serialize)]
struct HashRow {
    id: String,
    hash: String,
}

#[derive(Serialize)]
struct DedupOutput {
    hashes: Vec<HashRow>,
    #[serde(flatten)]
    report: DedupReport,
}

pub fn dedup(ctx: &Ctx, a: DedupArgs) -> anyhow::Result<()> {
    let mut names: Vec<String> = fs::read_dir(&a.input)
        .with_context(|| format!("listing {}", a.input.display()))?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".ppm") || n.ends_with(".pgm"))
        .collect();
    names.sort();
    if names.is_empty() {
        return Err(Error::EmptyInput.into());
    }
    let entries = names
        .into_iter()
        .map(|id| Ok(HashEntry { hash: phash64(&read_image(a.input.join(&id))?), id }))
        .collect::<abstain::Result<Vec<_>>>()?;
    let report = cluster_near_duplicates(&entries, a.max_dist);
    if let Some(path) = &a.keep_list {
        let text: String = report.keep.iter().map(|k| format!("{k}\n")).collect();
        fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    let hashes = entries.iter().map(|e| HashRow { id: e.id.clone(), hash: format!("{:016x}", e.hash) }).collect();
    ctx.emit("dedup", &DedupOutput { hashes, report })
}

#[derive(Args)]
pub struct SplitArgs {
    /// Labels CSV (`id,label`).
    #[arg(long, conflicts_with = "counts")]
    labels: Option<PathBuf>,
    /// Comma-separated class sizes instead of a labels file.
    #[arg(long, value_delimiter = ',')]
    counts: Option<Vec<usize>>,
    /// Train, val and test fractions.
    #[arg(long, value_delimiter = ',', num_args = 1)]
    ratios: Option<Vec<f64>>,
}

#[derive(Serialize)]
struct ClassCounts {
    class: String,
    total: usize,
    train: usize,
    val: usize,
    test: usize,
}

#[derive(Serialize)]
struct Assignment {
    id: String,
    split: Split,
}

#[derive(Serialize)]
struct SplitReport {
    ratios: [f64; 3],
    per_class: Vec<ClassCounts>,
    totals: [usize; 3],
    empty_classes: Vec<usize>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    assignments: Vec<Assignment>,
}

pub fn split(ctx: &Ctx, a: SplitArgs) -> anyhow::Result<()> {
    let ratios: [f64; 3] = match a.ratios {
        Some(r) => r.try_into().map_err(|_| usage("--ratios takes exactly three values"))?,
        None => DEFAULT_RATIOS,
    };
    let (ids, labels, classes) = match (a.labels, a.counts) {
        (Some(path), _) => {
            let l = read_labels(&path)?;
            (Some(l.ids), l.labels, l.classes)
        }
        (None, Some(counts)) => {
            let labels = counts.iter().enumerate().flat_map(|(k, &n)| std::iter::repeat_n(k, n)).collect();
            (None, labels, (0..counts.len()).map(|k| k.to_string()).collect())
        }
        (None, None) => return Err(usage("give --labels or --counts")),
    };
    let s = stratified_split(&labels, ratios, ctx.seed)?;
    let per_class: Vec<ClassCounts> = s
        .per_class
        .iter()
        .enumerate()
        .map(|(k, c)| ClassCounts {
            class: classes.get(k).cloned().unwrap_or_else(|| k.to_string()),
            total: c.iter().sum(),
            train: c[0],
            val: c[1],
            test: c[2],
        })
        .collect();
    let totals = [0, 1, 2].map(|j| s.per_class.iter().map(|c| c[j]).sum());
    let assignments = ids
        .map(|ids| ids.into_iter().zip(&s.splits).map(|(id, &split)| Assignment { id, split }).collect())
        .unwrap_or_default();
    ctx.emit("split", &SplitReport { ratios, per_class, totals, empty_classes: s.empty_classes, assignments })
}

#[derive(Args)]
pub struct FoldsArgs {
    /// Labels CSV (`id,label`).
    #[arg(long)]
    labels: PathBuf,
    #[arg(long, default_value_t = 5)]
    outer: usize,
    #[arg(long, default_value_t = 3)]
    inner: usize,
}

#[derive(Serialize)]
struct FoldIds {
    test: Vec<String>,
    inner: Vec<Vec<String>>,
}

#[derive(Serialize)]
struct FoldsReport {
    n: usize,
    outer: Vec<FoldIds>,
    leakage_audit_passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    audit_failure: Option<String>,
}

pub fn folds(ctx: &Ctx, a: FoldsArgs) -> anyhow::Result<()> {
    let l = read_labels(&a.labels)?;
    let plan = nested_fold_plan(&l.labels, a.outer, a.inner, ctx.seed)?;
    let audit = plan.audit();
    let name = |ids: &[usize]| -> Vec<String> { ids.iter().map(|&i| l.ids[i].clone()).collect() };
    let outer = plan
        .outer
        .iter()
        .map(|f| FoldIds { test: name(&f.test), inner: f.inner.iter().map(|v| name(v)).collect() })
        .collect();
    ctx.emit(
        "folds",
        &FoldsReport { n: plan.n, outer, leakage_audit_passed: audit.is_ok(), audit_failure: audit.err() },
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Grid {
    /// Learning rates rescaled for plain SGD on the tiny model.
    Desk,
    /// The published AdamW ranges, unchanged.
    Published,
}

#[derive(Args)]
pub struct NestedCvArgs {
    /// Features CSV; rows without a label are ignored.
    #[arg(long)]
    features: PathBuf,
    #[arg(long, default_value_t = 5)]
    outer: usize,
    #[arg(long, default_value_t = 3)]
    inner: usize,
    #[arg(long, value_enum, default_value = "desk")]
    grid: Grid,
    #[arg(long, default_value_t = 16)]
    hidden: usize,
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    /// Epochs with the backbone frozen.
    #[arg(long, default_value_t = 1)]
    warmup_epochs: usize,
    /// Weight the loss by inverse class frequency.
    #[arg(long)]
    class_balanced: bool,
    /// Retrain the consensus configuration on all rows and save the model JSON.
    #[arg(long)]
    save_model: Option<PathBuf>,
}

pub fn nested_cv(ctx: &Ctx, a: NestedCvArgs) -> anyhow::Result<()> {
    let records: Vec<_> = read_feature_csv(&a.features)?.into_iter().filter(|r| r.label.is_some()).collect();
    if records.is_empty() {
        return Err(Error::EmptyDataset.into());
    }
    let xs: Vec<Vec<f64>> = records.iter().map(|r| r.logits.clone()).collect();
    let labels: Vec<usize> = records.iter().map(|r| r.label.expect("filtered")).collect();
    let setup = SearchSetup {
        grid: match a.grid {
            Grid::Desk => HyperGrid::desk(),
            Grid::Published => HyperGrid::published(),
        },
        base: TrainConfig {
            epochs: a.epochs,
            batch_size: a.batch_size,
            warmup_epochs: a.warmup_epochs,
            class_balanced: a.class_balanced,
            ..TrainConfig::default()
        },
        hidden: a.hidden,
        seed: ctx.seed,
    };
    let report: NestedCvReport = nested_cv_run(&setup, &xs, &labels, a.outer, a.inner)?;
    if let Some(path) = &a.save_model {
        let classes = labels.iter().max().map_or(0, |m| m + 1);
        let init_seed = rng::derive(ctx.seed, 7);
        let model = TinyClassifier::init(xs[0].len(), a.hidden, classes, init_seed)?;
        let cfg = TrainConfig { seed: rng::derive(init_seed, 1), ..report.consensus.clone() };
        let (model, _) = train(&model, &xs, &labels, &cfg)?;
        fs::write(path, model.to_json()).with_context(|| format!("writing {}", path.display()))?;
    }
    ctx.emit("nested-cv", &report)
}
