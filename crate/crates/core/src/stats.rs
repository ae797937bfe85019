//! Paired classifier comparison and percentile bootstrap.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data_model::PairedOutcome;
use crate::error::{Error, Result};
use crate::rng;

/// Resamples used for classification-metric confidence intervals.
pub const DEFAULT_B_CLASSIFICATION: usize = 4000;
/// Resamples used for segmentation-metric confidence intervals.
pub const DEFAULT_B_SEGMENTATION: usize = 5000;
/// Two-sided 95% standard normal quantile.
pub const Z_95: f64 = 1.959_963_984_540_054;

pub fn paired_outcomes(correct_a: &[bool], correct_b: &[bool]) -> Result<PairedOutcome> {
    if correct_a.len() != correct_b.len() {
        return Err(Error::LengthMismatch { left: correct_a.len(), right: correct_b.len() });
    }
    if correct_a.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut po = PairedOutcome { n11: 0, n10: 0, n01: 0, n00: 0 };
    for (&a, &b) in correct_a.iter().zip(correct_b) {
        match (a, b) {
            (true, true) => po.n11 += 1,
            (true, false) => po.n10 += 1,
            (false, true) => po.n01 += 1,
            (false, false) => po.n00 += 1,
        }
    }
    Ok(po)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McNemar {
    pub chi2: f64,
    pub p: f64,
    /// No discordant pairs; the statistic is reported as 0 with p = 1.
    pub degenerate: bool,
}

/// Continuity-corrected McNemar statistic `(|n10 − n01| − 0.5)² / (n10 + n01)`
/// with a χ²(1) tail probability.
pub fn mcnemar(po: &PairedOutcome) -> McNemar {
    let discordant = po.n10 + po.n01;
    if discordant == 0 {
        return McNemar { chi2: 0.0, p: 1.0, degenerate: true };
    }
    let diff = po.n10.abs_diff(po.n01) as f64 - 0.5;
    let chi2 = diff * diff / discordant as f64;
    McNemar { chi2, p: chi2_sf_df1(chi2).expect("statistic is non-negative"), degenerate: false }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracyDiff {
    pub delta: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Wald interval for the paired accuracy difference `acc(A) − acc(B)`:
/// `SE = sqrt((n10 + n01) − (n10 − n01)²/N) / N`.
pub fn paired_acc_diff_ci(po: &PairedOutcome, z: f64) -> AccuracyDiff {
    let n = po.total() as f64;
    let diff = po.n10 as f64 - po.n01 as f64;
    let delta = diff / n;
    let var = ((po.n10 + po.n01) as f64 - diff * diff / n).max(0.0);
    let se = var.sqrt() / n;
    AccuracyDiff { delta, lo: delta - z * se, hi: delta + z * se }
}

/// Upper tail of χ² with one degree of freedom: `erfc(sqrt(x/2))`.
///
/// `erfc` is the FreeBSD msun implementation shipped in `libm`, accurate to
/// within an ulp or two across the whole range.
pub fn chi2_sf_df1(x: f64) -> Result<f64> {
    if x.is_nan() || x < 0.0 {
        return Err(Error::NegativeStatistic(x));
    }
    Ok(libm::erfc((x / 2.0).sqrt()))
}

/// Linear-interpolation quantile (R type 7) of an ascending-sorted slice.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapCi {
    pub estimate: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Runs `b` bootstrap replicates over `n` items. Replicate `r` draws its
/// indices from stream `r` of `seed`, so the output does not depend on how
/// the replicates are scheduled. Returns one statistic vector per replicate.
pub fn bootstrap_replicates<F>(n: usize, b: usize, seed: u64, statistic: F) -> Vec<Vec<f64>>
where
    F: Fn(&[usize]) -> Vec<f64> + Sync,
{
    (0..b as u64)
        .into_par_iter()
        .map_init(
            || vec![0usize; n],
            |idx, r| {
                let mut g = rng::stream(seed, r);
                for slot in idx.iter_mut() {
                    *slot = g.random_range(0..n);
                }
                statistic(idx)
            },
        )
        .collect()
}

/// 2.5/97.5 percentiles of each column of the replicate matrix.
pub fn percentile_intervals(replicates: &[Vec<f64>], width: usize) -> Vec<(f64, f64)> {
    (0..width)
        .map(|k| {
            let mut col: Vec<f64> = replicates.iter().map(|r| r[k]).collect();
            col.sort_by(f64::total_cmp);
            (quantile_sorted(&col, 0.025), quantile_sorted(&col, 0.975))
        })
        .collect()
}

/// Percentile bootstrap CI of `statistic` over `values`.
pub fn percentile_bootstrap<F>(values: &[f64], statistic: F, b: usize, seed: u64) -> Result<BootstrapCi>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    if b == 0 {
        return Err(Error::InvalidArgument("bootstrap needs at least one resample".into()));
    }
    let estimate = statistic(values);
    let reps = bootstrap_replicates(values.len(), b, seed, |idx| {
        let sample: Vec<f64> = idx.iter().map(|&i| values[i]).collect();
        vec![statistic(&sample)]
    });
    let (lo, hi) = percentile_intervals(&reps, 1)[0];
    Ok(BootstrapCi { estimate, lo, hi })
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    quantile_sorted(&s, 0.5)
}

/// Sample standard deviation (n − 1 denominator); zero for a single value.
pub fn sample_sd(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}
