use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data_model::{FoldPlan, OuterFold, Split};
use crate::error::{Error, Result};
use crate::rng;

pub const DEFAULT_RATIOS: [f64; 3] = [0.70, 0.15, 0.15];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAssignment {
    /// One entry per input sample.
    pub splits: Vec<Split>,
    /// Per class: (train, val, test) counts.
    pub per_class: Vec<[usize; 3]>,
    /// Classes below the largest label that have no samples.
    pub empty_classes: Vec<usize>,
}

/// Largest-remainder apportionment of `n` items to `ratios`. Ties in the
/// fractional part go to the earlier slot.
fn apportion(n: usize, ratios: &[f64; 3]) -> [usize; 3] {
    let quotas = ratios.map(|r| n as f64 * r);
    let mut counts = quotas.map(|q| q.floor() as usize);
    let assigned: usize = counts.iter().sum();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        let (fa, fb) = (quotas[a] - quotas[a].floor(), quotas[b] - quotas[b].floor());
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for &k in order.iter().take(n.saturating_sub(assigned)) {
        counts[k] += 1;
    }
    counts
}

/// Per-class shuffle and largest-remainder allocation into train/val/test.
pub fn stratified_split(labels: &[usize], ratios: [f64; 3], seed: u64) -> Result<SplitAssignment> {
    if labels.is_empty() {
        return Err(Error::EmptyInput);
    }
    if ratios.iter().any(|&r| !(r >= 0.0)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!("split ratios {ratios:?} must be non-negative and sum to 1")));
    }
    let classes = labels.iter().max().unwrap() + 1;
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let mut splits = vec![Split::Train; labels.len()];
    let mut per_class = Vec::with_capacity(classes);
    let mut empty_classes = Vec::new();
    for (c, ids) in by_class.iter_mut().enumerate() {
        if ids.is_empty() {
            empty_classes.push(c);
        }
        ids.shuffle(&mut rng::stream(seed, c as u64));
        let counts = apportion(ids.len(), &ratios);
        let (train, rest) = ids.split_at(counts[0]);
        let (val, test) = rest.split_at(counts[1]);
        for (part, split) in [(train, Split::Train), (val, Split::Val), (test, Split::Test)] {
            for &i in part {
                splits[i] = split;
            }
        }
        per_class.push(counts);
    }
    Ok(SplitAssignment { splits, per_class, empty_classes })
}

/// Stratified k-way partition of `ids`: shuffle within each class, then deal
/// the class-ordered sequence round-robin so both per-class and total fold
/// sizes differ by at most one.
fn stratified_folds(ids: &[usize], labels: &[usize], k: usize, seed: u64) -> Vec<Vec<usize>> {
    let classes = ids.iter().map(|&i| labels[i]).max().map_or(0, |m| m + 1);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for &i in ids {
        by_class[labels[i]].push(i);
    }
    let mut folds = vec![Vec::new(); k];
    let mut pos = 0usize;
    for (c, members) in by_class.iter_mut().enumerate() {
        members.sort_unstable();
        members.shuffle(&mut rng::stream(seed, c as u64));
        for &i in members.iter() {
            folds[pos % k].push(i);
            pos += 1;
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    folds
}

pub fn nested_fold_plan(labels: &[usize], outer: usize, inner: usize, seed: u64) -> Result<FoldPlan> {
    if outer < 2 || inner < 2 {
        return Err(Error::InvalidArgument("nested CV needs at least 2 outer and 2 inner folds".into()));
    }
    if labels.is_empty() {
        return Err(Error::EmptyInput);
    }
    let classes = labels.iter().max().unwrap() + 1;
    let mut counts = vec![0usize; classes];
    for &l in labels {
        counts[l] += 1;
    }
    if let Some((class, &count)) = counts.iter().enumerate().find(|(_, &n)| n > 0 && n < outer) {
        return Err(Error::TooFewSamplesPerClass { class, count, folds: outer });
    }
    let all: Vec<usize> = (0..labels.len()).collect();
    let outer_folds = stratified_folds(&all, labels, outer, rng::derive(seed, 0));
    let plan = FoldPlan {
        n: labels.len(),
        outer: outer_folds
            .iter()
            .enumerate()
            .map(|(f, test)| {
                let train: Vec<usize> = outer_folds
                    .iter()
                    .enumerate()
                    .filter(|(g, _)| *g != f)
                    .flat_map(|(_, v)| v.iter().copied())
                    .collect();
                OuterFold {
                    test: test.clone(),
                    inner: stratified_folds(&train, labels, inner, rng::derive(seed, 1 + f as u64)),
                }
            })
            .collect(),
    };
    debug_assert!(plan.audit().is_ok());
    Ok(plan)
}

/// Inverse-frequency class weights normalised to mean 1 over samples:
/// `w_c = (N / C) / count_c`, so `Σ_c w_c · count_c = N`.
pub fn class_weights(labels: &[usize], classes: usize) -> Result<Vec<f64>> {
    let mut counts = vec![0usize; classes];
    for (row, &l) in labels.iter().enumerate() {
        if l >= classes {
            return Err(Error::BadLabelIndex { row, label: l as i64, classes });
        }
        counts[l] += 1;
    }
    if let Some(c) = counts.iter().position(|&n| n == 0) {
        return Err(Error::MissingClass(format!("class {c} has no samples")));
    }
    let per_class = labels.len() as f64 / classes as f64;
    Ok(counts.iter().map(|&n| per_class / n as f64).collect())
}
