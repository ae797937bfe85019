use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use abstain::cls_eval::{confusion, confusion_kept, cross_entropy, prf_report, ConfusionMatrix, PrfReport};
use abstain::io::{read_logit_csv, read_pgm};
use abstain::scoring::{argmax, softmax};
use abstain::seg_eval::{dataset_summary, mask_metrics, DatasetSummary, MaskMetrics};
use abstain::stats::DEFAULT_B_SEGMENTATION;
use abstain::Error;
use anyhow::Context;
use clap::Args;
use serde::Serialize;

use crate::tables::read_predictions;
use crate::{usage, Ctx};

#[derive(Args)]
pub struct ClsEvalArgs {
    /// Logits CSV; unlabelled rows are skipped.
    #[arg(long, conflicts_with = "predictions")]
    logits: Option<PathBuf>,
    /// Predictions CSV (`id,label,prediction`).
    #[arg(long)]
    predictions: Option<PathBuf>,
    /// Class count for --predictions (default: largest index + 1).
    #[arg(long)]
    num_classes: Option<usize>,
    /// Comma-separated class names for the report.
    #[arg(long, value_delimiter = ',')]
    class_names: Option<Vec<String>>,
    /// Abstain when the maximum softmax probability is below this (logits only).
    #[arg(long)]
    tau: Option<f64>,
    /// Label smoothing for the reported cross-entropy.
    #[arg(long, default_value_t = 0.0)]
    smoothing: f64,
}

#[derive(Serialize)]
struct Abstention {
    tau: f64,
    kept: usize,
    coverage: f64,
    confusion: ConfusionMatrix,
    metrics: PrfReport,
}

#[derive(Serialize)]
struct ClsReport {
    classes: Vec<String>,
    count: usize,
    confusion: ConfusionMatrix,
    metrics: PrfReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    cross_entropy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    abstention: Option<Abstention>,
}

pub fn cls_eval(ctx: &Ctx, a: ClsEvalArgs) -> anyhow::Result<()> {
    let (labels, preds, probs, c): (Vec<usize>, Vec<usize>, _, usize) = match (&a.logits, &a.predictions) {
        (Some(path), _) => {
            let records: Vec<_> = read_logit_csv(path)?.into_iter().filter(|r| r.label.is_some()).collect();
            if records.is_empty() {
                return Err(Error::EmptyInput.into());
            }
            let c = records[0].logits.len();
            let probs = records.iter().map(|r| softmax(&r.logits, 1.0)).collect::<abstain::Result<Vec<_>>>()?;
            let labels: Vec<usize> = records.iter().map(|r| r.label.expect("filtered")).collect();
            let preds = records.iter().map(|r| argmax(&r.logits)).collect();
            (labels, preds, Some(probs), c)
        }
        (None, Some(path)) => {
            if a.tau.is_some() {
                return Err(usage("--tau needs --logits"));
            }
            let rows = read_predictions(path)?;
            let seen = rows.iter().map(|r| r.label.max(r.prediction)).max().unwrap_or(0) + 1;
            let c = a.num_classes.unwrap_or(seen);
            (rows.iter().map(|r| r.label).collect(), rows.iter().map(|r| r.prediction).collect(), None, c)
        }
        (None, None) => return Err(usage("give --logits or --predictions")),
    };
    let classes = match a.class_names {
        Some(names) if names.len() == c => names,
        Some(names) => return Err(usage(format!("{} class names for {c} classes", names.len()))),
        None => (0..c).map(|k| k.to_string()).collect(),
    };
    let cm = confusion(&labels, &preds, c)?;
    let metrics = prf_report(&cm)?;
    let cross_entropy = probs.as_ref().map(|p| cross_entropy(p, &labels, a.smoothing)).transpose()?;
    let abstention = match (a.tau, &probs) {
        (Some(tau), Some(p)) => {
            let keep: Vec<bool> = p.iter().map(|row| row.iter().copied().fold(0.0, f64::max) >= tau).collect();
            let kept = keep.iter().filter(|&&k| k).count();
            let cm = confusion_kept(&labels, &preds, &keep, c)?;
            let metrics = prf_report(&cm)?;
            Some(Abstention { tau, kept, coverage: kept as f64 / keep.len() as f64, confusion: cm, metrics })
        }
        _ => None,
    };
    ctx.emit("cls-eval", &ClsReport { classes, count: labels.len(), confusion: cm, metrics, cross_entropy, abstention })
}

#[derive(Args)]
pub struct SegEvalArgs {
    /// Directory of predicted PGM masks.
    #[arg(long)]
    pred: PathBuf,
    /// Directory of reference PGM masks with the same file names.
    #[arg(long)]
    gt: PathBuf,
    /// Optional `name,class` CSV for per-class summaries.
    #[arg(long)]
    classes: Option<PathBuf>,
    /// Image-level bootstrap resamples.
    #[arg(long, default_value_t = DEFAULT_B_SEGMENTATION)]
    resamples: usize,
}

#[derive(Serialize)]
struct ImageMetrics {
    name: String,
    #[serde(flatten)]
    metrics: MaskMetrics,
}

#[derive(Serialize)]
struct SegReport {
    images: Vec<ImageMetrics>,
    global: DatasetSummary,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    per_class: BTreeMap<String, DatasetSummary>,
}

pub fn pgm_names(dir: &Path) -> anyhow::Result<Vec<String>> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".pgm"))
        .collect();
    names.sort();
    Ok(names)
}

#[derive(serde::Deserialize)]
struct ClassRow {
    name: String,
    class: String,
}

pub fn seg_eval(ctx: &Ctx, a: SegEvalArgs) -> anyhow::Result<()> {
    let names = pgm_names(&a.gt)?;
    if names.is_empty() {
        return Err(Error::EmptyInput.into());
    }
    let images = names
        .iter()
        .map(|name| {
            let pred = a.pred.join(name);
            if !pred.exists() {
                return Err(Error::InvalidArgument(format!("no prediction for {name}")));
            }
            Ok(ImageMetrics { name: name.clone(), metrics: mask_metrics(&read_pgm(pred)?, &read_pgm(a.gt.join(name))?)? })
        })
        .collect::<abstain::Result<Vec<_>>>()?;
    let all: Vec<MaskMetrics> = images.iter().map(|m| m.metrics).collect();
    let global = dataset_summary(&all, a.resamples, ctx.seed)?;
    let mut per_class = BTreeMap::new();
    if let Some(path) = &a.classes {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).with_context(|| format!("reading {}", path.display()))?;
        let mut class_of = BTreeMap::new();
        for (i, row) in rdr.deserialize::<ClassRow>().enumerate() {
            let row = row.map_err(|e| Error::MalformedRow { row: i + 1, message: e.to_string() })?;
            class_of.insert(row.name, row.class);
        }
        let mut groups: BTreeMap<String, Vec<MaskMetrics>> = BTreeMap::new();
        for m in &images {
            let class = class_of
                .get(&m.name)
                .ok_or_else(|| Error::InvalidArgument(format!("{} has no class", m.name)))?;
            groups.entry(class.clone()).or_default().push(m.metrics);
        }
        for (k, (class, ms)) in groups.into_iter().enumerate() {
            let summary = dataset_summary(&ms, a.resamples, abstain::rng::derive(ctx.seed, 1 + k as u64))?;
            per_class.insert(class, summary);
        }
    }
    ctx.emit("seg-eval", &SegReport { images, global, per_class })
}
