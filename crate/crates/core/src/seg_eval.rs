//! Mask agreement metrics with image-level bootstrap aggregation.
//!
//! Empty-denominator conventions: when both masks are empty every ratio is
//! 1 (agreement on absence); when only the denominator side is empty the
//! ratio is 0. This keeps `dice = 2·iou/(1+iou)` and
//! `precision(a, b) = recall(b, a)` exact for all mask pairs.

use serde::{Deserialize, Serialize};

use crate::data_model::BinaryMask;
use crate::error::{Error, Result};
use crate::stats::{bootstrap_replicates, percentile_intervals};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskMetrics {
    pub iou: f64,
    pub dice: f64,
    pub precision: f64,
    pub recall: f64,
    pub pixel_acc: f64,
}

impl MaskMetrics {
    pub const NAMES: [&'static str; 5] = ["iou", "dice", "precision", "recall", "pixel_acc"];

    pub fn as_array(&self) -> [f64; 5] {
        [self.iou, self.dice, self.precision, self.recall, self.pixel_acc]
    }
}

fn ratio(num: usize, den: usize, both_empty: bool) -> f64 {
    if den == 0 {
        if both_empty {
            1.0
        } else {
            0.0
        }
    } else {
        num as f64 / den as f64
    }
}

pub fn mask_metrics(pred: &BinaryMask, gt: &BinaryMask) -> Result<MaskMetrics> {
    if !pred.same_shape(gt) {
        return Err(Error::DimensionMismatch {
            expected: gt.width() * gt.height(),
            got: pred.width() * pred.height(),
        });
    }
    let (mut inter, mut union, mut np, mut ng, mut tn) = (0usize, 0usize, 0usize, 0usize, 0usize);
    for (&p, &g) in pred.bits().iter().zip(gt.bits()) {
        inter += (p && g) as usize;
        union += (p || g) as usize;
        np += p as usize;
        ng += g as usize;
        tn += (!p && !g) as usize;
    }
    let both_empty = union == 0;
    Ok(MaskMetrics {
        iou: ratio(inter, union, both_empty),
        dice: ratio(2 * inter, np + ng, both_empty),
        precision: ratio(inter, np, both_empty),
        recall: ratio(inter, ng, both_empty),
        pixel_acc: (inter + tn) as f64 / pred.bits().len() as f64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub images: usize,
    pub resamples: usize,
    pub iou: MetricSummary,
    pub dice: MetricSummary,
    pub precision: MetricSummary,
    pub recall: MetricSummary,
    pub pixel_acc: MetricSummary,
}

/// Unweighted per-image means with 95% percentile-bootstrap intervals. All
/// five metrics share the same image resamples.
pub fn dataset_summary(per_image: &[MaskMetrics], b: usize, seed: u64) -> Result<DatasetSummary> {
    if per_image.is_empty() {
        return Err(Error::EmptyInput);
    }
    if b == 0 {
        return Err(Error::InvalidArgument("bootstrap needs at least one resample".into()));
    }
    let rows: Vec<[f64; 5]> = per_image.iter().map(MaskMetrics::as_array).collect();
    let column_means = |idx: &mut dyn Iterator<Item = usize>| {
        let mut acc = [0.0; 5];
        let mut n = 0usize;
        for i in idx {
            for (a, v) in acc.iter_mut().zip(&rows[i]) {
                *a += v;
            }
            n += 1;
        }
        acc.map(|a| a / n as f64)
    };
    let means = column_means(&mut (0..rows.len()));
    let reps = bootstrap_replicates(rows.len(), b, seed, |idx| column_means(&mut idx.iter().copied()).to_vec());
    let ci = percentile_intervals(&reps, 5);
    let s = |k: usize| MetricSummary { mean: means[k], lo: ci[k].0, hi: ci[k].1 };
    Ok(DatasetSummary {
        images: rows.len(),
        resamples: b,
        iou: s(0),
        dice: s(1),
        precision: s(2),
        recall: s(3),
        pixel_acc: s(4),
    })
}
