use std::collections::BTreeMap;
use std::path::PathBuf;

use abstain::data_model::PairedOutcome;
use abstain::stats::{mcnemar as mcnemar_test, median, paired_acc_diff_ci, paired_outcomes, percentile_bootstrap, DEFAULT_B_CLASSIFICATION, Z_95};
use abstain::Error;
use clap::{Args, ValueEnum};
use serde::Serialize;

use crate::tables::{read_column, read_predictions, PredictionRow};
use crate::{usage, Ctx};

/// Printed paired comparisons on an 843-image test set:
/// `(n11, n10, n01, n00, χ², p, Δacc, CI low, CI high)`.
const REFERENCE_ROWS: [(u64, u64, u64, u64, f64, f64, f64, f64, f64); 5] = [
    (788, 35, 8, 12, 16.331, 5.32e-5, 0.0320, 0.0169, 0.0471),
    (778, 18, 44, 3, 10.512, 0.0012, -0.0308, -0.0490, -0.0127),
    (790, 6, 37, 10, 21.605, 3.35e-6, -0.0368, -0.0518, -0.0217),
    (780, 16, 43, 4, 11.932, 0.0005, -0.0320, -0.0498, -0.0143),
    (815, 7, 8, 13, 0.0167, 0.8973, -0.0012, -0.0102, 0.0078),
];

#[derive(Args)]
pub struct McnemarArgs {
    /// Both classifiers correct.
    #[arg(long, requires_all = ["n10", "n01", "n00"], conflicts_with_all = ["a", "b"])]
    n11: Option<u64>,
    /// A correct, B wrong.
    #[arg(long)]
    n10: Option<u64>,
    /// A wrong, B correct.
    #[arg(long)]
    n01: Option<u64>,
    /// Both wrong.
    #[arg(long)]
    n00: Option<u64>,
    /// Predictions CSV of classifier A (`id,label,prediction`).
    #[arg(long, requires = "b")]
    a: Option<PathBuf>,
    /// Predictions CSV of classifier B, same ids as A.
    #[arg(long, requires = "a")]
    b: Option<PathBuf>,
}

#[derive(Serialize)]
struct Printed {
    chi2: f64,
    p: f64,
    delta: f64,
    ci: [f64; 2],
    /// Computed minus printed statistic.
    chi2_difference: f64,
}

#[derive(Serialize)]
struct McnemarReport {
    n11: u64,
    n10: u64,
    n01: u64,
    n00: u64,
    n: u64,
    accuracy_a: f64,
    accuracy_b: f64,
    chi2: f64,
    p: f64,
    degenerate: bool,
    delta: f64,
    ci: [f64; 2],
    #[serde(skip_serializing_if = "Option::is_none")]
    printed: Option<Printed>,
}

fn correctness(a: &[PredictionRow], b: &[PredictionRow]) -> abstain::Result<(Vec<bool>, Vec<bool>)> {
    let by_id: BTreeMap<&str, &PredictionRow> = b.iter().map(|r| (r.id.as_str(), r)).collect();
    if by_id.len() != b.len() || a.len() != b.len() {
        return Err(Error::LengthMismatch { left: a.len(), right: by_id.len() });
    }
    let mut ca = Vec::with_capacity(a.len());
    let mut cb = Vec::with_capacity(a.len());
    for (i, ra) in a.iter().enumerate() {
        let rb = by_id
            .get(ra.id.as_str())
            .ok_or_else(|| Error::MalformedRow { row: i + 1, message: format!("id {:?} missing from B", ra.id) })?;
        if rb.label != ra.label {
            return Err(Error::MalformedRow { row: i + 1, message: format!("labels disagree for {:?}", ra.id) });
        }
        ca.push(ra.prediction == ra.label);
        cb.push(rb.prediction == rb.label);
    }
    Ok((ca, cb))
}

pub fn mcnemar(ctx: &Ctx, a: McnemarArgs) -> anyhow::Result<()> {
    let po = match (a.n11, a.n10, a.n01, a.n00, &a.a, &a.b) {
        (Some(n11), Some(n10), Some(n01), Some(n00), _, _) => PairedOutcome::new(n11, n10, n01, n00)?,
        (_, _, _, _, Some(pa), Some(pb)) => {
            let (ca, cb) = correctness(&read_predictions(pa)?, &read_predictions(pb)?)?;
            paired_outcomes(&ca, &cb)?
        }
        _ => return Err(usage("give --n11 --n10 --n01 --n00, or --a and --b")),
    };
    let test = mcnemar_test(&po);
    let diff = paired_acc_diff_ci(&po, Z_95);
    let n = po.total();
    let printed = REFERENCE_ROWS
        .iter()
        .find(|r| (r.0, r.1, r.2, r.3) == (po.n11, po.n10, po.n01, po.n00))
        .map(|r| Printed { chi2: r.4, p: r.5, delta: r.6, ci: [r.7, r.8], chi2_difference: test.chi2 - r.4 });
    ctx.emit(
        "mcnemar",
        &McnemarReport {
            n11: po.n11,
            n10: po.n10,
            n01: po.n01,
            n00: po.n00,
            n,
            accuracy_a: (po.n11 + po.n10) as f64 / n as f64,
            accuracy_b: (po.n11 + po.n01) as f64 / n as f64,
            chi2: test.chi2,
            p: test.p,
            degenerate: test.degenerate,
            delta: diff.delta,
            ci: [diff.lo, diff.hi],
            printed,
        },
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Statistic {
    Mean,
    Median,
}

#[derive(Args)]
pub struct BootstrapArgs {
    /// CSV with a numeric column.
    #[arg(long)]
    values: PathBuf,
    #[arg(long, default_value = "value")]
    column: String,
    #[arg(long, value_enum, default_value = "mean")]
    stat: Statistic,
    #[arg(long, default_value_t = DEFAULT_B_CLASSIFICATION)]
    resamples: usize,
}

#[derive(Serialize)]
struct BootstrapReport {
    statistic: Statistic,
    n: usize,
    resamples: usize,
    estimate: f64,
    ci: [f64; 2],
}

pub fn bootstrap(ctx: &Ctx, a: BootstrapArgs) -> anyhow::Result<()> {
    let values = read_column(&a.values, &a.column)?;
    let ci = match a.stat {
        Statistic::Mean => percentile_bootstrap(&values, abstain::stats::mean, a.resamples, ctx.seed)?,
        Statistic::Median => percentile_bootstrap(&values, median, a.resamples, ctx.seed)?,
    };
    ctx.emit(
        "bootstrap",
        &BootstrapReport { statistic: a.stat, n: values.len(), resamples: a.resamples, estimate: ci.estimate, ci: [ci.lo, ci.hi] },
    )
}
