//! Detector-quality metrics over in-distribution (ID) and out-of-distribution
//! (OOD) scores, plus the abstention threshold sweep.
//!
//! Scores follow the "larger = more ID" orientation and ID is the positive
//! class throughout. A sample is accepted at threshold `t` when `score >= t`.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::data_model::{OodReport, SweepPoint};
use crate::error::{Error, Result};

/// Thresholds of the reported coverage/rejection sweep.
pub const DEFAULT_TAUS: [f64; 9] = [0.2, 0.3, 0.4, 0.45, 0.5, 0.55, 0.6, 0.7, 0.8];

/// Reference operating point of the sweep.
pub const REFERENCE_TAU: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredSample {
    pub id: String,
    pub score: f64,
    pub is_id: bool,
}

impl ScoredSample {
    pub fn new(id: impl Into<String>, score: f64, is_id: bool) -> Self {
        Self { id: id.into(), score, is_id }
    }
}

/// Tie groups in descending score order: `(n_id, n_ood)` per distinct score.
fn descending_groups(samples: &[ScoredSample]) -> Result<(Vec<(u64, u64)>, u64, u64)> {
    if samples.iter().any(|s| !s.score.is_finite()) {
        return Err(Error::InvalidArgument("scores must be finite".into()));
    }
    let mut sorted: Vec<(f64, bool)> = samples.iter().map(|s| (s.score, s.is_id)).collect();
    sorted.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal));
    let mut groups: Vec<(u64, u64)> = Vec::new();
    let mut last = f64::NAN;
    for (score, is_id) in sorted {
        if groups.is_empty() || score != last {
            groups.push((0, 0));
            last = score;
        }
        let g = groups.last_mut().unwrap();
        if is_id {
            g.0 += 1;
        } else {
            g.1 += 1;
        }
    }
    let n_id: u64 = groups.iter().map(|g| g.0).sum();
    let n_ood: u64 = groups.iter().map(|g| g.1).sum();
    if n_id == 0 {
        return Err(Error::MissingClass("no in-distribution samples".into()));
    }
    if n_ood == 0 {
        return Err(Error::MissingClass("no out-of-distribution samples".into()));
    }
    Ok((groups, n_id, n_ood))
}

/// Mann-Whitney AUROC with half credit for ties, computed from tie groups in
/// integer arithmetic (twice the U statistic) before the final division.
pub fn auroc(samples: &[ScoredSample]) -> Result<f64> {
    let (groups, n_id, n_ood) = descending_groups(samples)?;
    let mut ood_below = n_ood;
    let mut twice_u: u64 = 0;
    for &(gi, go) in &groups {
        ood_below -= go;
        twice_u += gi * (2 * ood_below + go);
    }
    Ok(twice_u as f64 / (2 * n_id * n_ood) as f64)
}

/// Average precision with ID as the positive class: step-wise sum of
/// precision times recall increment over distinct thresholds, no
/// interpolation.
pub fn aupr_in(samples: &[ScoredSample]) -> Result<f64> {
    let (groups, n_id, _) = descending_groups(samples)?;
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut weighted = 0.0;
    for &(gi, go) in &groups {
        tp += gi;
        fp += go;
        if gi > 0 {
            weighted += gi as f64 * (tp as f64 / (tp + fp) as f64);
        }
    }
    Ok(weighted / n_id as f64)
}

/// Smallest OOD acceptance rate over thresholds that accept at least 95% of
/// ID samples.
pub fn fpr_at_95tpr(samples: &[ScoredSample]) -> Result<f64> {
    let (groups, n_id, n_ood) = descending_groups(samples)?;
    let (mut tp, mut fp) = (0u64, 0u64);
    for &(gi, go) in &groups {
        tp += gi;
        fp += go;
        // TPR >= 0.95 in exact integer form
        if 100 * tp >= 95 * n_id {
            return Ok(fp as f64 / n_ood as f64);
        }
    }
    unreachable!("accepting every sample gives TPR = 1")
}

pub fn ood_metrics(samples: &[ScoredSample]) -> Result<OodReport> {
    Ok(OodReport {
        auroc: auroc(samples)?,
        aupr_in: aupr_in(samples)?,
        fpr_at_95tpr: fpr_at_95tpr(samples)?,
    })
}

/// Coverage and rejection at each threshold for arbitrary real-valued
/// scores (e.g. the negated energy). A sample is kept when `score >= tau`.
pub fn score_sweep(scores: &[f64], thresholds: &[f64]) -> Result<Vec<SweepPoint>> {
    if scores.is_empty() || thresholds.is_empty() {
        return Err(Error::EmptyInput);
    }
    if scores.iter().chain(thresholds).any(|v| v.is_nan()) {
        return Err(Error::InvalidArgument("scores and thresholds must not be NaN".into()));
    }
    if thresholds.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidArgument("thresholds must be sorted ascending".into()));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len() as f64;
    Ok(thresholds
        .iter()
        .map(|&tau| {
            let below = sorted.partition_point(|&s| s < tau);
            let coverage = (sorted.len() - below) as f64 / n;
            SweepPoint { tau, coverage, rejection: 1.0 - coverage }
        })
        .collect())
}

/// Abstention sweep over MSP-style confidences in `[0, 1]`: the model
/// abstains when `confidence < tau`.
pub fn threshold_sweep(confidences: &[f64], taus: &[f64]) -> Result<Vec<SweepPoint>> {
    if confidences.iter().any(|c| !(0.0..=1.0).contains(c)) {
        return Err(Error::InvalidArgument("confidences must lie in [0, 1]".into()));
    }
    score_sweep(confidences, taus)
}
