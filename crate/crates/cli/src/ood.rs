use std::fs::File;
use std::path::PathBuf;

use abstain::data_model::{LogitRecord, Split};
use abstain::io::{read_feature_csv, read_logit_csv};
use abstain::ood_eval::{auroc, ood_metrics, score_sweep, threshold_sweep, ScoredSample, DEFAULT_TAUS, REFERENCE_TAU};
use abstain::scoring::{argmax, energy_detector_score, energy_score, odin_grid, odin_score, tempered_msp, OdinConfig};
use abstain::tiny_model::TinyClassifier;
use abstain::Error;
use anyhow::Context;
use clap::{Args, ValueEnum};
use serde::Serialize;

use crate::tables::{read_scores, write_scores, ScoreRow};
use crate::{usage, Ctx};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Msp,
    Energy,
    Odin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Args)]
pub struct ScoreArgs {
    #[arg(long, value_enum, default_value = "msp")]
    method: Method,
    /// Logits CSV (MSP and Energy).
    #[arg(long)]
    logits: Option<PathBuf>,
    /// Model JSON written by `nested-cv --save-model` (ODIN).
    #[arg(long)]
    model: Option<PathBuf>,
    /// Features CSV matching the model's input width (ODIN).
    #[arg(long)]
    features: Option<PathBuf>,
    /// Softmax temperature. ODIN tunes it on val+ood rows when both this and
    /// --epsilon are omitted.
    #[arg(long)]
    temperature: Option<f64>,
    /// ODIN perturbation size in feature units.
    #[arg(long)]
    epsilon: Option<f64>,
    /// `csv` writes the scores table instead of a JSON report.
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

#[derive(Serialize)]
struct ScoredRecord {
    id: String,
    split: Split,
    label: Option<usize>,
    prediction: usize,
    score: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    energy: Option<f64>,
}

#[derive(Serialize)]
struct OdinTuning {
    rows: usize,
    auroc: f64,
}

#[derive(Serialize)]
struct ScoreReport {
    method: Method,
    temperature: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    odin_tuning: Option<OdinTuning>,
    count: usize,
    records: Vec<ScoredRecord>,
}

fn require(path: &Option<PathBuf>, flag: &str, method: &str) -> anyhow::Result<PathBuf> {
    path.clone().ok_or_else(|| usage(format!("--method {method} needs {flag}")))
}

fn non_empty(records: Vec<LogitRecord>) -> abstain::Result<Vec<LogitRecord>> {
    if records.is_empty() {
        Err(Error::EmptyInput)
    } else {
        Ok(records)
    }
}

fn samples(records: &[LogitRecord], scores: &[f64]) -> Vec<ScoredSample> {
    records
        .iter()
        .zip(scores)
        .map(|(r, &s)| ScoredSample::new(r.id.clone(), s, !r.is_ood()))
        .collect()
}

fn tune_odin(model: &TinyClassifier, records: &[LogitRecord]) -> anyhow::Result<(OdinConfig, OdinTuning)> {
    let tuning: Vec<LogitRecord> =
        records.iter().filter(|r| matches!(r.split, Split::Val | Split::Ood)).cloned().collect();
    if !tuning.iter().any(|r| r.split == Split::Val) || !tuning.iter().any(LogitRecord::is_ood) {
        return Err(usage("ODIN without --temperature/--epsilon needs val and ood rows to tune on"));
    }
    let mut best: Option<(f64, OdinConfig)> = None;
    for cfg in odin_grid() {
        let scores = tuning.iter().map(|r| odin_score(model, &r.logits, &cfg)).collect::<abstain::Result<Vec<_>>>()?;
        let a = auroc(&samples(&tuning, &scores))?;
        if best.is_none_or(|(b, _)| a > b) {
            best = Some((a, cfg));
        }
    }
    let (a, cfg) = best.expect("grid is non-empty");
    Ok((cfg, OdinTuning { rows: tuning.len(), auroc: a }))
}

pub fn score(ctx: &Ctx, a: ScoreArgs) -> anyhow::Result<()> {
    let temperature = a.temperature.unwrap_or(1.0);
    let (records, scored, epsilon, tuning) = match a.method {
        Method::Msp | Method::Energy => {
            let name = if a.method == Method::Msp { "msp" } else { "energy" };
            let records = non_empty(read_logit_csv(require(&a.logits, "--logits", name)?)?)?;
            let scored = records
                .iter()
                .map(|r| {
                    let (score, energy) = match a.method {
                        Method::Msp => (tempered_msp(&r.logits, temperature)?, None),
                        _ => (energy_detector_score(&r.logits, temperature)?, Some(energy_score(&r.logits, temperature)?)),
                    };
                    Ok((argmax(&r.logits), score, energy))
                })
                .collect::<abstain::Result<Vec<_>>>()?;
            (records, scored, None, None)
        }
        Method::Odin => {
            let model_path = require(&a.model, "--model", "odin")?;
            let text = std::fs::read_to_string(&model_path).with_context(|| format!("reading {}", model_path.display()))?;
            let model = TinyClassifier::from_json(&text)?;
            let records = non_empty(read_feature_csv(require(&a.features, "--features", "odin")?)?)?;
            let (cfg, tuning) = match (a.temperature, a.epsilon) {
                (Some(t), Some(e)) => (OdinConfig::new(t, e)?, None),
                (None, None) => {
                    let (cfg, t) = tune_odin(&model, &records)?;
                    (cfg, Some(t))
                }
                _ => return Err(usage("give both --temperature and --epsilon, or neither")),
            };
            let scored = records
                .iter()
                .map(|r| Ok((model.predict(&r.logits)?, odin_score(&model, &r.logits, &cfg)?, None)))
                .collect::<abstain::Result<Vec<_>>>()?;
            return finish(ctx, a.format, a.method, cfg.temperature, Some(cfg.epsilon), tuning, records, scored);
        }
    };
    finish(ctx, a.format, a.method, temperature, epsilon, tuning, records, scored)
}

#[allow(clippy::too_many_arguments)]
fn finish(
    ctx: &Ctx,
    format: Format,
    method: Method,
    temperature: f64,
    epsilon: Option<f64>,
    odin_tuning: Option<OdinTuning>,
    records: Vec<LogitRecord>,
    scored: Vec<(usize, f64, Option<f64>)>,
) -> anyhow::Result<()> {
    let rows: Vec<ScoredRecord> = records
        .into_iter()
        .zip(scored)
        .map(|(r, (prediction, score, energy))| ScoredRecord {
            id: r.id,
            split: r.split,
            label: r.label,
            prediction,
            score,
            energy,
        })
        .collect();
    if format == Format::Csv {
        let table: Vec<ScoreRow> = rows
            .iter()
            .map(|r| ScoreRow { id: r.id.clone(), split: r.split, label: r.label, score: r.score })
            .collect();
        match &ctx.out {
            Some(p) => write_scores(File::create(p).with_context(|| format!("creating {}", p.display()))?, &table)?,
            None => write_scores(std::io::stdout().lock(), &table)?,
        }
        return Ok(());
    }
    let report = ScoreReport { method, temperature, epsilon, odin_tuning, count: rows.len(), records: rows };
    ctx.emit("score", &report)
}

#[derive(Args)]
pub struct OodEvalArgs {
    /// Scores CSV; rows with split `ood` are negatives, all others positives.
    #[arg(long, conflicts_with = "logits")]
    scores: Option<PathBuf>,
    /// Logits CSV, scored with --method first.
    #[arg(long)]
    logits: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "msp")]
    method: Method,
    #[arg(long, default_value_t = 1.0)]
    temperature: f64,
}

#[derive(Serialize)]
struct OodEvalReport {
    n_id: usize,
    n_ood: usize,
    auroc: f64,
    aupr_in: f64,
    fpr_at_95tpr: f64,
}

pub fn ood_eval(ctx: &Ctx, a: OodEvalArgs) -> anyhow::Result<()> {
    let samples: Vec<ScoredSample> = match (&a.scores, &a.logits) {
        (Some(path), _) => read_scores(path)?
            .into_iter()
            .map(|r| {
                let is_id = r.is_id();
                ScoredSample::new(r.id, r.score, is_id)
            })
            .collect(),
        (None, Some(path)) => {
            let records = non_empty(read_logit_csv(path)?)?;
            let scores = records
                .iter()
                .map(|r| match a.method {
                    Method::Msp => tempered_msp(&r.logits, a.temperature),
                    Method::Energy => energy_detector_score(&r.logits, a.temperature),
                    Method::Odin => Err(Error::InvalidArgument("ODIN needs a model; run `score` first".into())),
                })
                .collect::<abstain::Result<Vec<_>>>()?;
            records
                .iter()
                .zip(scores)
                .map(|(r, s)| ScoredSample::new(r.id.clone(), s, !r.is_ood()))
                .collect()
        }
        (None, None) => return Err(usage("give --scores or --logits")),
    };
    let m = ood_metrics(&samples)?;
    let n_id = samples.iter().filter(|s| s.is_id).count();
    ctx.emit(
        "ood-eval",
        &OodEvalReport { n_id, n_ood: samples.len() - n_id, auroc: m.auroc, aupr_in: m.aupr_in, fpr_at_95tpr: m.fpr_at_95tpr },
    )
}

#[derive(Args)]
pub struct SweepArgs {
    /// Scores CSV.
    #[arg(long)]
    scores: PathBuf,
    /// Comma-separated ascending thresholds; defaults to
    /// 0.2,0.3,0.4,0.45,0.5,0.55,0.6,0.7,0.8.
    #[arg(long, value_delimiter = ',')]
    taus: Option<Vec<f64>>,
    /// Allow scores and thresholds outside [0, 1] (e.g. negated energy).
    #[arg(long)]
    raw: bool,
}

#[derive(Serialize)]
struct SweepRow {
    tau: f64,
    coverage: f64,
    rejection: f64,
    reference: bool,
}

#[derive(Serialize)]
struct SweepReport {
    count: usize,
    reference_tau: f64,
    points: Vec<SweepRow>,
}

pub fn sweep(ctx: &Ctx, a: SweepArgs) -> anyhow::Result<()> {
    let rows = read_scores(&a.scores)?;
    let scores: Vec<f64> = rows.iter().map(|r| r.score).collect();
    let taus = a.taus.unwrap_or_else(|| DEFAULT_TAUS.to_vec());
    let points = if a.raw { score_sweep(&scores, &taus)? } else { threshold_sweep(&scores, &taus)? };
    let points = points
        .into_iter()
        .map(|p| SweepRow { tau: p.tau, coverage: p.coverage, rejection: p.rejection, reference: p.tau == REFERENCE_TAU })
        .collect();
    ctx.emit("sweep", &SweepReport { count: scores.len(), reference_tau: REFERENCE_TAU, points })
}
