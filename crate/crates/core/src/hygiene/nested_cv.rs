//! Two-stage inner-loop search inside nested cross-validation.
//!
//! Stage 1 trains with the backbone frozen and searches head learning rate,
//! weight decay and label smoothing. The best `top_k` stage-1 settings then
//! advance to stage 2, which unfreezes the backbone and searches its learning
//! rate together with MixUp. Outer folds only ever evaluate.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::split::nested_fold_plan;
use crate::data_model::FoldPlan;
use crate::error::{Error, Result};
use crate::rng;
use crate::stats::{mean, sample_sd};
use crate::tiny_model::{train, TinyClassifier, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperGrid {
    pub head_lr: Vec<f64>,
    pub weight_decay: Vec<f64>,
    pub label_smoothing: Vec<f64>,
    pub backbone_lr: Vec<f64>,
    pub mixup_alpha: Vec<f64>,
    pub top_k: usize,
}

impl HyperGrid {
    /// The endpoints of the published search ranges, as used with AdamW on
    /// deep backbones. Too small for plain SGD on the tiny model.
    pub fn published() -> Self {
        Self {
            head_lr: vec![1e-3, 3e-3],
            weight_decay: vec![1e-4, 1e-2, 1e-1],
            label_smoothing: vec![0.0, 0.1],
            backbone_lr: vec![1e-5, 3e-4],
            mixup_alpha: vec![0.0, 0.2],
            top_k: 2,
        }
    }

    /// Same structure rescaled for SGD on the tiny classifier.
    pub fn desk() -> Self {
        Self {
            head_lr: vec![0.05, 0.2],
            weight_decay: vec![1e-4, 1e-2],
            label_smoothing: vec![0.0, 0.1],
            backbone_lr: vec![0.01, 0.1],
            mixup_alpha: vec![0.0, 0.2],
            top_k: 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let sets = [
            ("head_lr", &self.head_lr),
            ("weight_decay", &self.weight_decay),
            ("label_smoothing", &self.label_smoothing),
            ("backbone_lr", &self.backbone_lr),
            ("mixup_alpha", &self.mixup_alpha),
        ];
        for (name, s) in sets {
            if s.is_empty() {
                return Err(Error::InvalidArgument(format!("hyperparameter set {name} is empty")));
            }
        }
        if self.top_k == 0 {
            return Err(Error::InvalidArgument("top_k must be at least 1".into()));
        }
        Ok(())
    }

    /// Stage-1 combinations in enumeration order (head LR, then weight decay,
    /// then smoothing).
    fn stage1(&self, base: &TrainConfig) -> Vec<TrainConfig> {
        let mut out = Vec::new();
        for &head_lr in &self.head_lr {
            for &weight_decay in &self.weight_decay {
                for &label_smoothing in &self.label_smoothing {
                    out.push(TrainConfig {
                        head_lr,
                        weight_decay,
                        label_smoothing,
                        backbone_lr: 0.0,
                        mixup_alpha: 0.0,
                        ..base.clone()
                    });
                }
            }
        }
        out
    }

    fn stage2(&self, survivor: &TrainConfig) -> Vec<TrainConfig> {
        let mut out = Vec::new();
        for &backbone_lr in &self.backbone_lr {
            for &mixup_alpha in &self.mixup_alpha {
                out.push(TrainConfig { backbone_lr, mixup_alpha, ..survivor.clone() });
            }
        }
        out
    }
}

/// Everything the search needs besides data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSetup {
    pub grid: HyperGrid,
    /// Supplies epochs, batch size, warm-up and class balancing.
    pub base: TrainConfig,
    pub hidden: usize,
    pub seed: u64,
}

/// Position of a candidate in the search: stage-1 index, and stage-2 index
/// within that survivor (`None` for stage-1 candidates).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CandidateKey {
    pub stage1: usize,
    pub stage2: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub key: CandidateKey,
    pub config: TrainConfig,
    pub fold_accuracy: Vec<f64>,
    pub mean_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InnerSelection {
    pub best: CandidateScore,
    pub stage1: Vec<CandidateScore>,
    pub stage2: Vec<CandidateScore>,
    /// Every sample index touched while selecting.
    #[serde(skip)]
    pub used_ids: BTreeSet<usize>,
}

fn subset(xs: &[Vec<f64>], labels: &[usize], ids: &[usize]) -> (Vec<Vec<f64>>, Vec<usize>) {
    ids.iter().map(|&i| (xs[i].clone(), labels[i])).unzip()
}

fn num_classes(labels: &[usize]) -> usize {
    labels.iter().max().map_or(0, |m| m + 1)
}

/// Trains on `train_ids` from a fresh seeded init and returns the accuracy on
/// `eval_ids`.
fn fit_and_score(
    setup: &SearchSetup,
    xs: &[Vec<f64>],
    labels: &[usize],
    cfg: &TrainConfig,
    train_ids: &[usize],
    eval_ids: &[usize],
    init_seed: u64,
) -> Result<f64> {
    let (tx, ty) = subset(xs, labels, train_ids);
    let (ex, ey) = subset(xs, labels, eval_ids);
    let model = TinyClassifier::init(xs[0].len(), setup.hidden, num_classes(labels), init_seed)?;
    let cfg = TrainConfig { seed: rng::derive(init_seed, 1), ..cfg.clone() };
    let (trained, _) = train(&model, &tx, &ty, &cfg)?;
    trained.accuracy(&ex, &ey)
}

fn score_candidates(
    setup: &SearchSetup,
    xs: &[Vec<f64>],
    labels: &[usize],
    plan: &FoldPlan,
    outer_index: usize,
    candidates: Vec<(CandidateKey, TrainConfig)>,
) -> Result<Vec<CandidateScore>> {
    let fold = &plan.outer[outer_index];
    let k = fold.inner.len();
    let jobs: Vec<(usize, usize)> = (0..candidates.len()).flat_map(|c| (0..k).map(move |f| (c, f))).collect();
    let accs: Vec<f64> = jobs
        .par_iter()
        .map(|&(c, f)| {
            // same init for every candidate on a given inner split
            let init_seed = rng::derive(setup.seed, (outer_index * 1000 + f) as u64);
            fit_and_score(setup, xs, labels, &candidates[c].1, &fold.inner_train(f), &fold.inner[f], init_seed)
        })
        .collect::<Result<_>>()?;
    Ok(candidates
        .into_iter()
        .enumerate()
        .map(|(c, (key, config))| {
            let fold_accuracy = accs[c * k..(c + 1) * k].to_vec();
            CandidateScore { key, config, mean_accuracy: mean(&fold_accuracy), fold_accuracy }
        })
        .collect())
}

/// Best first: higher mean accuracy, then lower weight decay, then earlier
/// enumeration order.
fn rank(scores: &[CandidateScore]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        let (sa, sb) = (&scores[a], &scores[b]);
        sb.mean_accuracy
            .total_cmp(&sa.mean_accuracy)
            .then(sa.config.weight_decay.total_cmp(&sb.config.weight_decay))
            .then(sa.key.cmp(&sb.key))
    });
    order
}

pub fn inner_select(
    setup: &SearchSetup,
    xs: &[Vec<f64>],
    labels: &[usize],
    plan: &FoldPlan,
    outer_index: usize,
) -> Result<InnerSelection> {
    setup.grid.validate()?;
    setup.base.validate()?;
    if xs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if xs.len() != labels.len() || plan.n != xs.len() {
        return Err(Error::LengthMismatch { left: xs.len(), right: plan.n });
    }
    if outer_index >= plan.outer.len() {
        return Err(Error::InvalidArgument(format!("outer fold {outer_index} does not exist")));
    }

    let stage1_candidates = setup
        .grid
        .stage1(&setup.base)
        .into_iter()
        .enumerate()
        .map(|(i, cfg)| (CandidateKey { stage1: i, stage2: None }, cfg))
        .collect();
    let stage1 = score_candidates(setup, xs, labels, plan, outer_index, stage1_candidates)?;

    let survivors: Vec<usize> = rank(&stage1).into_iter().take(setup.grid.top_k).collect();
    let stage2_candidates = survivors
        .iter()
        .flat_map(|&s| {
            setup
                .grid
                .stage2(&stage1[s].config)
                .into_iter()
                .enumerate()
                .map(move |(j, cfg)| (CandidateKey { stage1: s, stage2: Some(j) }, cfg))
        })
        .collect();
    let stage2 = score_candidates(setup, xs, labels, plan, outer_index, stage2_candidates)?;
    let best = stage2[rank(&stage2)[0]].clone();

    let used_ids = plan.outer[outer_index].inner.iter().flatten().copied().collect();
    Ok(InnerSelection { best, stage1, stage2, used_ids })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuterResult {
    pub fold: usize,
    pub test_size: usize,
    pub accuracy: f64,
    pub selected: CandidateScore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NestedCvReport {
    pub folds: Vec<OuterResult>,
    pub mean_accuracy: f64,
    /// Sample standard deviation across outer folds.
    pub sd_accuracy: f64,
    /// The configuration selected most often across outer folds; ties go to
    /// the earliest fold's choice.
    pub consensus: TrainConfig,
    pub leakage_audit_passed: bool,
}

/// Outer evaluation loop: select on inner folds, retrain on the full outer
/// training set, evaluate on the outer test set.
pub fn nested_cv_run(setup: &SearchSetup, xs: &[Vec<f64>], labels: &[usize], outer: usize, inner: usize) -> Result<NestedCvReport> {
    if xs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let plan = nested_fold_plan(labels, outer, inner, setup.seed)?;
    let mut audit_ok = plan.audit().is_ok();
    let mut folds = Vec::with_capacity(outer);
    for f in 0..outer {
        let sel = inner_select(setup, xs, labels, &plan, f)?;
        let train_ids = plan.outer[f].train();
        let test_ids = &plan.outer[f].test;
        let test_set: BTreeSet<usize> = test_ids.iter().copied().collect();
        audit_ok &= sel.used_ids.is_disjoint(&test_set) && train_ids.iter().all(|i| !test_set.contains(i));
        let init_seed = rng::derive(setup.seed, (f * 1000 + 999) as u64);
        let accuracy = fit_and_score(setup, xs, labels, &sel.best.config, &train_ids, test_ids, init_seed)?;
        folds.push(OuterResult { fold: f, test_size: test_ids.len(), accuracy, selected: sel.best });
    }
    let accs: Vec<f64> = folds.iter().map(|r| r.accuracy).collect();
    let consensus = consensus_config(&folds);
    Ok(NestedCvReport {
        mean_accuracy: mean(&accs),
        sd_accuracy: sample_sd(&accs),
        consensus,
        leakage_audit_passed: audit_ok,
        folds,
    })
}

fn consensus_config(folds: &[OuterResult]) -> TrainConfig {
    let mut best: Option<(usize, &OuterResult)> = None;
    for r in folds {
        let votes = folds.iter().filter(|o| o.selected.config == r.selected.config).count();
        if best.is_none_or(|(v, _)| votes > v) {
            best = Some((votes, r));
        }
    }
    best.expect("at least one outer fold").1.selected.config.clone()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    fn blobs(per_class: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut r = rng::seeded(seed);
        let noise = Normal::new(0.0, 0.4).unwrap();
        let centers = [[-2.0, 0.0], [2.0, 0.0], [0.0, 2.5]];
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..per_class * centers.len() {
            let c = i % centers.len();
            xs.push(centers[c].iter().map(|m| m + noise.sample(&mut r)).collect());
            ys.push(c);
        }
        (xs, ys)
    }

    fn single(head_lr: f64) -> HyperGrid {
        HyperGrid {
            head_lr: vec![head_lr],
            weight_decay: vec![1e-4],
            label_smoothing: vec![0.0],
            backbone_lr: vec![0.05],
            mixup_alpha: vec![0.0],
            top_k: 1,
        }
    }

    fn setup(grid: HyperGrid) -> SearchSetup {
        SearchSetup {
            grid,
            base: TrainConfig { epochs: 15, batch_size: 16, warmup_epochs: 1, ..Default::default() },
            hidden: 4,
            seed: 3,
        }
    }

    #[test]
    fn single_combo_is_returned() {
        let (xs, ys) = blobs(10, 1);
        let plan = nested_fold_plan(&ys, 5, 3, 1).unwrap();
        let s = setup(single(0.1));
        let sel = inner_select(&s, &xs, &ys, &plan, 0).unwrap();
        assert_eq!(sel.stage1.len(), 1);
        assert_eq!(sel.best.config.head_lr, 0.1);
        assert_eq!(sel.best.config.backbone_lr, 0.05);
    }

    #[test]
    fn zero_learning_rate_loses() {
        let (xs, ys) = blobs(10, 2);
        let plan = nested_fold_plan(&ys, 5, 3, 2).unwrap();
        let mut grid = single(0.0);
        grid.head_lr = vec![0.0, 0.1];
        grid.backbone_lr = vec![0.0];
        let sel = inner_select(&setup(grid), &xs, &ys, &plan, 1).unwrap();
        assert_eq!(sel.best.config.head_lr, 0.1);
        assert!(sel.stage1[0].mean_accuracy < sel.stage1[1].mean_accuracy);
    }

    #[test]
    fn ties_prefer_lower_weight_decay() {
        let mk = |wd: f64, stage1: usize| CandidateScore {
            key: CandidateKey { stage1, stage2: None },
            config: TrainConfig { weight_decay: wd, ..Default::default() },
            fold_accuracy: vec![0.9],
            mean_accuracy: 0.9,
        };
        assert_eq!(rank(&[mk(0.1, 0), mk(0.01, 1), mk(0.01, 2)]), vec![1, 2, 0]);
    }

    #[test]
    fn selection_is_deterministic_and_leak_free() {
        let (xs, ys) = blobs(10, 4);
        let mut grid = HyperGrid::desk();
        grid.label_smoothing = vec![0.0];
        let s = setup(grid);
        let a = nested_cv_run(&s, &xs, &ys, 5, 3).unwrap();
        let b = nested_cv_run(&s, &xs, &ys, 5, 3).unwrap();
        assert_eq!(a, b);
        assert!(a.leakage_audit_passed);
        assert!(a.mean_accuracy >= 0.95, "{}", a.mean_accuracy);
        assert_eq!(a.folds.len(), 5);
    }

    #[test]
    fn empty_grid_rejected() {
        let mut g = HyperGrid::desk();
        g.mixup_alpha.clear();
        assert!(g.validate().is_err());
        assert!(HyperGrid::published().validate().is_ok());
    }
}
