//! Closed-set classification metrics: cross-entropy with optional label
//! smoothing, confusion matrices, and per-class/macro precision, recall, F1.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tiny_model::smooth_targets;

const LOG_FLOOR: f64 = 1e-300;

/// Mean categorical cross-entropy against (optionally smoothed) targets.
pub fn cross_entropy(probs: &[Vec<f64>], labels: &[usize], smoothing: f64) -> Result<f64> {
    if probs.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if probs.len() != labels.len() {
        return Err(Error::LengthMismatch { left: probs.len(), right: labels.len() });
    }
    let c = probs[0].len();
    let mut total = 0.0;
    for (row, (p, &label)) in probs.iter().zip(labels).enumerate() {
        if p.len() != c {
            return Err(Error::DimensionMismatch { expected: c, got: p.len() });
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || p.iter().any(|&v| !(v >= 0.0)) {
            return Err(Error::RowNotNormalized { row, sum });
        }
        let t = smooth_targets(label, c, smoothing).map_err(|e| match e {
            Error::BadLabelIndex { label, classes, .. } => Error::BadLabelIndex { row, label, classes },
            other => other,
        })?;
        total -= t
            .iter()
            .zip(p)
            .filter(|(ti, _)| **ti > 0.0)
            .map(|(ti, pi)| ti * pi.max(LOG_FLOOR).ln())
            .sum::<f64>();
    }
    Ok(total / probs.len() as f64)
}

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes()).map(|k| self.counts[k][k]).sum()
    }

    pub fn accuracy(&self) -> Result<f64> {
        match self.total() {
            0 => Err(Error::EmptyMatrix),
            n => Ok(self.trace() as f64 / n as f64),
        }
    }
}

pub fn confusion(true_labels: &[usize], pred_labels: &[usize], classes: usize) -> Result<ConfusionMatrix> {
    if true_labels.len() != pred_labels.len() {
        return Err(Error::LengthMismatch { left: true_labels.len(), right: pred_labels.len() });
    }
    if true_labels.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut counts = vec![vec![0u64; classes]; classes];
    for (row, (&t, &p)) in true_labels.iter().zip(pred_labels).enumerate() {
        for l in [t, p] {
            if l >= classes {
                return Err(Error::BadLabelIndex { row, label: l as i64, classes });
            }
        }
        counts[t][p] += 1;
    }
    Ok(ConfusionMatrix { counts })
}

/// Confusion matrix over the samples where `keep` is true; used to score a
/// classifier on what it did not abstain on.
pub fn confusion_kept(true_labels: &[usize], pred_labels: &[usize], keep: &[bool], classes: usize) -> Result<ConfusionMatrix> {
    if keep.len() != true_labels.len() {
        return Err(Error::LengthMismatch { left: true_labels.len(), right: keep.len() });
    }
    let (t, p): (Vec<usize>, Vec<usize>) = true_labels
        .iter()
        .zip(pred_labels)
        .zip(keep)
        .filter(|(_, &k)| k)
        .map(|((&t, &p), _)| (t, p))
        .unzip();
    confusion(&t, &p, classes)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
    /// Set when the precision or recall denominator was zero and the value
    /// was defined as 0.
    pub zero_division: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrfReport {
    pub per_class: Vec<ClassMetrics>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub accuracy: f64,
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

pub fn prf_report(cm: &ConfusionMatrix) -> Result<PrfReport> {
    let c = cm.classes();
    let accuracy = cm.accuracy()?;
    let per_class: Vec<ClassMetrics> = (0..c)
        .map(|k| {
            let tp = cm.counts[k][k];
            let predicted: u64 = (0..c).map(|t| cm.counts[t][k]).sum();
            let support: u64 = cm.counts[k].iter().sum();
            let (precision, zp) = ratio(tp, predicted);
            let (recall, zr) = ratio(tp, support);
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            ClassMetrics { precision, recall, f1, support, zero_division: zp || zr }
        })
        .collect();
    let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / c as f64;
    Ok(PrfReport {
        macro_precision: mean(|m| m.precision),
        macro_recall: mean(|m| m.recall),
        macro_f1: mean(|m| m.f1),
        accuracy,
        per_class,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cross_entropy_examples() {
        let onehot = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        assert_eq!(cross_entropy(&onehot, &[0, 1], 0.0).unwrap(), 0.0);
        let uniform = vec![vec![0.25; 4]; 3];
        assert!((cross_entropy(&uniform, &[0, 1, 3], 0.0).unwrap() - 4f64.ln()).abs() < 1e-15);
        let p = vec![vec![0.8, 0.2], vec![0.3, 0.7]];
        assert!((cross_entropy(&p, &[0, 1], 0.0).unwrap() - 0.289909247626471).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_errors() {
        assert!(matches!(cross_entropy(&[], &[], 0.0), Err(Error::EmptyBatch)));
        assert!(matches!(cross_entropy(&[vec![0.5, 0.6]], &[0], 0.0), Err(Error::RowNotNormalized { row: 0, .. })));
        assert!(matches!(cross_entropy(&[vec![0.5, 0.5]], &[2], 0.0), Err(Error::BadLabelIndex { .. })));
        // zero probability on the true class stays finite
        let l = cross_entropy(&[vec![1.0, 0.0]], &[1], 0.0).unwrap();
        assert!(l.is_finite() && l > 600.0);
    }

    #[test]
    fn confusion_examples() {
        let cm = confusion(&[0, 1, 1], &[0, 0, 1], 2).unwrap();
        assert_eq!(cm.counts, vec![vec![1, 0], vec![1, 1]]);
        let diag = confusion(&[0, 1, 2], &[0, 1, 2], 3).unwrap();
        assert_eq!(diag.trace(), 3);
        assert!(matches!(confusion(&[], &[], 2), Err(Error::EmptyBatch)));
        assert!(matches!(confusion(&[0], &[0, 1], 2), Err(Error::LengthMismatch { .. })));
        assert!(matches!(confusion(&[0], &[5], 2), Err(Error::BadLabelIndex { .. })));
    }

    #[test]
    fn prf_examples() {
        let r = prf_report(&ConfusionMatrix { counts: vec![vec![1, 0], vec![1, 1]] }).unwrap();
        let close = |a: f64, b: f64| (a - b).abs() < 1e-15;
        assert!(close(r.per_class[0].precision, 0.5) && close(r.per_class[0].recall, 1.0));
        assert!(close(r.per_class[0].f1, 2.0 / 3.0));
        assert!(close(r.per_class[1].precision, 1.0) && close(r.per_class[1].recall, 0.5));
        assert!(close(r.macro_f1, 2.0 / 3.0));
        assert!(close(r.accuracy, 2.0 / 3.0));

        let diag = prf_report(&confusion(&[0, 1, 2, 2], &[0, 1, 2, 2], 3).unwrap()).unwrap();
        assert_eq!((diag.macro_precision, diag.macro_recall, diag.macro_f1, diag.accuracy), (1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn zero_division_is_flagged() {
        // class 1 never predicted, class 2 absent entirely
        let r = prf_report(&confusion(&[0, 1], &[0, 0], 3).unwrap()).unwrap();
        assert_eq!(r.per_class[1].precision, 0.0);
        assert!(r.per_class[1].zero_division);
        assert_eq!((r.per_class[2].precision, r.per_class[2].recall, r.per_class[2].f1), (0.0, 0.0, 0.0));
        assert!(r.per_class[2].zero_division);
        assert!(!r.per_class[0].zero_division);
        assert!(matches!(prf_report(&ConfusionMatrix { counts: vec![vec![0]] }), Err(Error::EmptyMatrix)));
    }

    #[test]
    fn abstention_mask_restricts_accuracy() {
        let cm = confusion_kept(&[0, 1, 1, 0], &[0, 0, 1, 1], &[true, false, true, false], 2).unwrap();
        assert_eq!(cm.accuracy().unwrap(), 1.0);
    }

    fn labels(c: usize) -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
        prop::collection::vec((0..c, 0..c), 1..60).prop_map(|v| v.into_iter().unzip())
    }

    fn prob_rows(c: usize) -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<usize>)> {
        prop::collection::vec((prop::collection::vec(0.01f64..1.0, c), 0..c), 1..20).prop_map(|rows| {
            rows.into_iter()
                .map(|(r, l)| {
                    let s: f64 = r.iter().sum();
                    (r.into_iter().map(|v| v / s).collect::<Vec<_>>(), l)
                })
                .unzip()
        })
    }

    proptest! {
        #[test]
        fn accuracy_is_trace_over_total((t, p) in labels(4)) {
            let cm = confusion(&t, &p, 4).unwrap();
            let r = prf_report(&cm).unwrap();
            prop_assert_eq!(r.accuracy, cm.trace() as f64 / t.len() as f64);
        }

        #[test]
        fn macro_metrics_permutation_invariant((t, p) in labels(4), shift in 1usize..4) {
            let perm = |l: &usize| (l + shift) % 4;
            let a = prf_report(&confusion(&t, &p, 4).unwrap()).unwrap();
            let b = prf_report(&confusion(&t.iter().map(perm).collect::<Vec<_>>(), &p.iter().map(perm).collect::<Vec<_>>(), 4).unwrap()).unwrap();
            prop_assert!((a.macro_f1 - b.macro_f1).abs() < 1e-12);
            prop_assert!((a.macro_precision - b.macro_precision).abs() < 1e-12);
            prop_assert!((a.macro_recall - b.macro_recall).abs() < 1e-12);
        }

        #[test]
        fn cross_entropy_linear_in_smoothing((p, l) in prob_rows(4), alpha in 0f64..0.99) {
            let onehot = cross_entropy(&p, &l, 0.0).unwrap();
            let uniform = p.iter().map(|r| -r.iter().map(|v| v.ln()).sum::<f64>() / 4.0).sum::<f64>() / p.len() as f64;
            let smoothed = cross_entropy(&p, &l, alpha).unwrap();
            prop_assert!((smoothed - ((1.0 - alpha) * onehot + alpha * uniform)).abs() < 1e-10);
            prop_assert!(onehot > 0.0);
        }
    }
}
