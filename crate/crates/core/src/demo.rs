//! End-to-end run on synthetic features: four Gaussian classes plus a fifth
//! blob that is never trained on and has to be rejected.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data_model::{OodReport, PairedOutcome, Split, SweepPoint};
use crate::error::Result;
use crate::hygiene::{nested_cv_run, stratified_split, HyperGrid, NestedCvReport, SearchSetup, DEFAULT_RATIOS};
use crate::ood_eval::{auroc, ood_metrics, threshold_sweep, ScoredSample, DEFAULT_TAUS, REFERENCE_TAU};
use crate::rng;
use crate::scoring::{energy_detector_score, msp_score, odin_grid, odin_score, OdinConfig};
use crate::stats::{mcnemar, paired_acc_diff_ci, paired_outcomes, percentile_bootstrap, AccuracyDiff, BootstrapCi, McNemar, Z_95};
use crate::tiny_model::{train, TinyClassifier, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoConfig {
    pub seed: u64,
    pub features: usize,
    pub per_class: usize,
    pub ood_samples: usize,
    /// Distance of each class mean from the origin along its own axis.
    pub separation: f64,
    pub noise: f64,
    pub hidden: usize,
    pub outer_folds: usize,
    pub inner_folds: usize,
    pub epochs: usize,
    pub bootstrap_resamples: usize,
}

impl Default for DemoConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            features: 8,
            per_class: 200,
            ood_samples: 200,
            separation: 5.0,
            noise: 1.0,
            hidden: 16,
            outer_folds: 5,
            inner_folds: 3,
            epochs: 30,
            bootstrap_resamples: crate::stats::DEFAULT_B_CLASSIFICATION,
        }
    }
}

pub struct SyntheticData {
    pub xs: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub ood: Vec<Vec<f64>>,
}

/// Class `k` is centred at `separation·e_k`; the unseen blob sits at the
/// centroid of the class means, equidistant from all of them.
pub fn synthetic(cfg: &DemoConfig) -> SyntheticData {
    let mut r = rng::seeded(rng::derive(cfg.seed, 0xdada));
    let noise = Normal::new(0.0, cfg.noise).expect("noise must be finite and non-negative");
    let mut draw = |center: &[f64]| -> Vec<f64> { center.iter().map(|c| c + noise.sample(&mut r)).collect() };
    let classes = 4;
    let mut xs = Vec::with_capacity(classes * cfg.per_class);
    let mut labels = Vec::with_capacity(classes * cfg.per_class);
    for _ in 0..cfg.per_class {
        for k in 0..classes {
            let mut center = vec![0.0; cfg.features];
            center[k] = cfg.separation;
            xs.push(draw(&center));
            labels.push(k);
        }
    }
    let mut centroid = vec![0.0; cfg.features];
    centroid[..classes].fill(cfg.separation / classes as f64);
    let ood = (0..cfg.ood_samples).map(|_| draw(&centroid)).collect();
    SyntheticData { xs, labels, ood }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub method: String,
    pub metrics: OodReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub odin: Option<OdinConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub config_a: TrainConfig,
    pub config_b: TrainConfig,
    pub accuracy_a: f64,
    pub accuracy_b: f64,
    pub outcomes: PairedOutcome,
    pub mcnemar: McNemar,
    pub accuracy_difference: AccuracyDiff,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoReport {
    pub config: DemoConfig,
    pub split_sizes: [usize; 3],
    pub nested_cv: NestedCvReport,
    pub test_accuracy: f64,
    pub test_accuracy_ci: BootstrapCi,
    pub ood: Vec<MethodResult>,
    pub reference_tau: f64,
    pub sweep: Vec<SweepPoint>,
    pub comparison: Comparison,
}

fn pick(xs: &[Vec<f64>], ids: &[usize]) -> Vec<Vec<f64>> {
    ids.iter().map(|&i| xs[i].clone()).collect()
}

fn scored(id_scores: &[f64], ood_scores: &[f64]) -> Vec<ScoredSample> {
    let id = id_scores.iter().enumerate().map(|(i, &s)| ScoredSample::new(format!("id-{i}"), s, true));
    let ood = ood_scores.iter().enumerate().map(|(i, &s)| ScoredSample::new(format!("ood-{i}"), s, false));
    id.chain(ood).collect()
}

fn score_all(xs: &[Vec<f64>], f: impl Fn(&[f64]) -> Result<f64>) -> Result<Vec<f64>> {
    xs.iter().map(|x| f(x)).collect()
}

fn fit(cfg: &TrainConfig, hidden: usize, xs: &[Vec<f64>], labels: &[usize], seed: u64) -> Result<TinyClassifier> {
    let model = TinyClassifier::init(xs[0].len(), hidden, 4, seed)?;
    let cfg = TrainConfig { seed: rng::derive(seed, 1), ..cfg.clone() };
    Ok(train(&model, xs, labels, &cfg)?.0)
}

pub fn run(cfg: &DemoConfig) -> Result<DemoReport> {
    let data = synthetic(cfg);
    let split = stratified_split(&data.labels, DEFAULT_RATIOS, rng::derive(cfg.seed, 1))?;
    let ids_of = |want: Split| -> Vec<usize> { (0..data.labels.len()).filter(|&i| split.splits[i] == want).collect() };
    let (train_ids, val_ids, test_ids) = (ids_of(Split::Train), ids_of(Split::Val), ids_of(Split::Test));
    let (train_x, val_x, test_x) = (pick(&data.xs, &train_ids), pick(&data.xs, &val_ids), pick(&data.xs, &test_ids));
    let labels_of = |ids: &[usize]| -> Vec<usize> { ids.iter().map(|&i| data.labels[i]).collect() };
    let (train_y, test_y) = (labels_of(&train_ids), labels_of(&test_ids));

    let setup = SearchSetup {
        grid: HyperGrid::desk(),
        base: TrainConfig { epochs: cfg.epochs, warmup_epochs: 1, ..TrainConfig::default() },
        hidden: cfg.hidden,
        seed: rng::derive(cfg.seed, 2),
    };
    let nested = nested_cv_run(&setup, &train_x, &train_y, cfg.outer_folds, cfg.inner_folds)?;

    let final_seed = rng::derive(cfg.seed, 3);
    let model = fit(&nested.consensus, cfg.hidden, &train_x, &train_y, final_seed)?;
    let correct: Vec<bool> = test_x
        .iter()
        .zip(&test_y)
        .map(|(x, &y)| model.predict(x).map(|p| p == y))
        .collect::<Result<_>>()?;
    let hits: Vec<f64> = correct.iter().map(|&c| c as u8 as f64).collect();
    let test_accuracy_ci = percentile_bootstrap(&hits, crate::stats::mean, cfg.bootstrap_resamples, rng::derive(cfg.seed, 4))?;

    // unseen blob: half tunes ODIN alongside the validation split, half is held out
    let (ood_val, ood_test) = data.ood.split_at(data.ood.len() / 2);
    let logits = |xs: &[Vec<f64>]| -> Result<Vec<Vec<f64>>> { xs.iter().map(|x| model.forward(x)).collect() };
    let (test_logits, ood_logits) = (logits(&test_x)?, logits(ood_test)?);

    let msp_id = score_all(&test_logits, msp_score)?;
    let msp_ood = score_all(&ood_logits, msp_score)?;
    let energy_id = score_all(&test_logits, |z| energy_detector_score(z, 1.0))?;
    let energy_ood = score_all(&ood_logits, |z| energy_detector_score(z, 1.0))?;

    let mut odin_best: Option<(f64, OdinConfig)> = None;
    for candidate in odin_grid() {
        let id = score_all(&val_x, |x| odin_score(&model, x, &candidate))?;
        let ood = score_all(ood_val, |x| odin_score(&model, x, &candidate))?;
        let a = auroc(&scored(&id, &ood))?;
        if odin_best.is_none_or(|(best, _)| a > best) {
            odin_best = Some((a, candidate));
        }
    }
    let odin = odin_best.expect("grid is non-empty").1;
    let odin_id = score_all(&test_x, |x| odin_score(&model, x, &odin))?;
    let odin_ood = score_all(ood_test, |x| odin_score(&model, x, &odin))?;

    let ood = vec![
        MethodResult { method: "msp".into(), metrics: ood_metrics(&scored(&msp_id, &msp_ood))?, odin: None },
        MethodResult { method: "energy".into(), metrics: ood_metrics(&scored(&energy_id, &energy_ood))?, odin: None },
        MethodResult { method: "odin".into(), metrics: ood_metrics(&scored(&odin_id, &odin_ood))?, odin: Some(odin) },
    ];
    let confidences: Vec<f64> = msp_id.iter().chain(&msp_ood).copied().collect();
    let sweep = threshold_sweep(&confidences, &DEFAULT_TAUS)?;

    // a fixed low-learning-rate configuration as the comparison arm
    let config_b = TrainConfig {
        head_lr: setup.grid.head_lr[0],
        weight_decay: setup.grid.weight_decay[0],
        label_smoothing: 0.0,
        backbone_lr: setup.grid.backbone_lr[0],
        mixup_alpha: 0.0,
        epochs: 3,
        ..setup.base.clone()
    };
    let model_b = fit(&config_b, cfg.hidden, &train_x, &train_y, final_seed)?;
    let correct_b: Vec<bool> = test_x
        .iter()
        .zip(&test_y)
        .map(|(x, &y)| model_b.predict(x).map(|p| p == y))
        .collect::<Result<_>>()?;
    let outcomes = paired_outcomes(&correct, &correct_b)?;
    let comparison = Comparison {
        config_a: nested.consensus.clone(),
        config_b,
        accuracy_a: (outcomes.n11 + outcomes.n10) as f64 / outcomes.total() as f64,
        accuracy_b: (outcomes.n11 + outcomes.n01) as f64 / outcomes.total() as f64,
        mcnemar: mcnemar(&outcomes),
        accuracy_difference: paired_acc_diff_ci(&outcomes, Z_95),
        outcomes,
    };

    Ok(DemoReport {
        config: cfg.clone(),
        split_sizes: [train_ids.len(), val_ids.len(), test_ids.len()],
        nested_cv: nested,
        test_accuracy: test_accuracy_ci.estimate,
        test_accuracy_ci,
        ood,
        reference_tau: REFERENCE_TAU,
        sweep,
        comparison,
    })
}
