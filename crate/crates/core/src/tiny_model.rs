//! A small softmax classifier with exact gradients.
//!
//! `logits = W2 · tanh(W1 x + b1) + b2`, or `W2 x + b2` when the hidden width
//! is zero. `W1, b1` form the backbone parameter group and `W2, b2` the head,
//! so the frozen-backbone / unfrozen-backbone schedule of the inner tuning loop
//! can be reproduced at small scale.

use std::ops::Range;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::scoring::{argmax, softmax, DifferentiableClassifier};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TinyClassifier {
    d: usize,
    h: usize,
    c: usize,
    /// Flat parameters in the order `W1 (h×d), b1 (h), W2 (c×m), b2 (c)` with
    /// `m = h` (or `d` for the linear model). Matrices are row-major.
    params: Vec<f64>,
}

/// Gradients of the mean loss over a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub loss: f64,
    /// Same layout as [`TinyClassifier::params`].
    pub params: Vec<f64>,
    /// One entry per sample: the gradient of the batch loss with respect to
    /// that sample's input.
    pub inputs: Vec<Vec<f64>>,
}

impl TinyClassifier {
    pub fn zeros(d: usize, h: usize, c: usize) -> Result<Self> {
        if d == 0 || c == 0 {
            return Err(Error::InvalidArgument("input dimension and class count must be positive".into()));
        }
        let n = Self::param_count(d, h, c);
        Ok(Self { d, h, c, params: vec![0.0; n] })
    }

    /// Uniform Glorot initialisation of weights, zero biases.
    pub fn init(d: usize, h: usize, c: usize, seed: u64) -> Result<Self> {
        let mut m = Self::zeros(d, h, c)?;
        let mut r = rng::seeded(seed);
        let (w1, _, w2, _) = m.ranges();
        let a1 = (6.0 / (d + h.max(1)) as f64).sqrt();
        for p in &mut m.params[w1] {
            *p = r.random_range(-a1..a1);
        }
        let a2 = (6.0 / (m.hidden_width() + c) as f64).sqrt();
        for p in &mut m.params[w2] {
            *p = r.random_range(-a2..a2);
        }
        Ok(m)
    }

    pub fn from_params(d: usize, h: usize, c: usize, params: Vec<f64>) -> Result<Self> {
        let expected = Self::param_count(d, h, c);
        if d == 0 || c == 0 {
            return Err(Error::InvalidArgument("input dimension and class count must be positive".into()));
        }
        if params.len() != expected {
            return Err(Error::DimensionMismatch { expected, got: params.len() });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidArgument("model parameters must be finite".into()));
        }
        Ok(Self { d, h, c, params })
    }

    fn param_count(d: usize, h: usize, c: usize) -> usize {
        let m = if h == 0 { d } else { h };
        h * d + h + c * m + c
    }

    fn ranges(&self) -> (Range<usize>, Range<usize>, Range<usize>, Range<usize>) {
        let w1 = 0..self.h * self.d;
        let b1 = w1.end..w1.end + self.h;
        let w2 = b1.end..b1.end + self.c * self.hidden_width();
        let b2 = w2.end..w2.end + self.c;
        (w1, b1, w2, b2)
    }

    pub fn backbone_range(&self) -> Range<usize> {
        0..self.h * self.d + self.h
    }

    pub fn head_range(&self) -> Range<usize> {
        self.backbone_range().end..self.params.len()
    }

    pub fn input_dim(&self) -> usize {
        self.d
    }

    pub fn hidden(&self) -> usize {
        self.h
    }

    pub fn classes(&self) -> usize {
        self.c
    }

    fn hidden_width(&self) -> usize {
        if self.h == 0 {
            self.d
        } else {
            self.h
        }
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.d {
            return Err(Error::DimensionMismatch { expected: self.d, got: x.len() });
        }
        Ok(())
    }

    /// Hidden activation (the input itself for the linear model) and logits.
    fn forward_cached(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (w1, b1, w2, b2) = self.ranges();
        let p = &self.params;
        let a: Vec<f64> = if self.h == 0 {
            x.to_vec()
        } else {
            (0..self.h)
                .map(|j| {
                    let row = &p[w1.start + j * self.d..w1.start + (j + 1) * self.d];
                    let pre: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + p[b1.start + j];
                    pre.tanh()
                })
                .collect()
        };
        let m = a.len();
        let z = (0..self.c)
            .map(|k| {
                let row = &p[w2.start + k * m..w2.start + (k + 1) * m];
                row.iter().zip(&a).map(|(w, v)| w * v).sum::<f64>() + p[b2.start + k]
            })
            .collect();
        (a, z)
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.forward_cached(x).1)
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.forward(x)?))
    }

    /// Backpropagates `dz` (gradient w.r.t. logits) through one sample,
    /// accumulating parameter gradients scaled by `scale` and returning the
    /// input gradient (also scaled).
    fn backward(&self, x: &[f64], a: &[f64], dz: &[f64], scale: f64, grad: Option<&mut [f64]>) -> Vec<f64> {
        let (w1, b1, w2, b2) = self.ranges();
        let p = &self.params;
        let m = a.len();
        // da = W2ᵀ dz
        let mut da = vec![0.0; m];
        for k in 0..self.c {
            let row = &p[w2.start + k * m..w2.start + (k + 1) * m];
            for (d, w) in da.iter_mut().zip(row) {
                *d += w * dz[k];
            }
        }
        let dpre: Vec<f64> = if self.h == 0 {
            Vec::new()
        } else {
            a.iter().zip(&da).map(|(&aj, &g)| g * (1.0 - aj * aj)).collect()
        };
        if let Some(g) = grad {
            for k in 0..self.c {
                let s = scale * dz[k];
                for (j, &aj) in a.iter().enumerate() {
                    g[w2.start + k * m + j] += s * aj;
                }
                g[b2.start + k] += s;
            }
            for (j, &dj) in dpre.iter().enumerate() {
                let s = scale * dj;
                for (i, &xi) in x.iter().enumerate() {
                    g[w1.start + j * self.d + i] += s * xi;
                }
                g[b1.start + j] += s;
            }
        }
        if self.h == 0 {
            da.into_iter().map(|v| v * scale).collect()
        } else {
            let mut dx = vec![0.0; self.d];
            for (j, &dj) in dpre.iter().enumerate() {
                let row = &p[w1.start + j * self.d..w1.start + (j + 1) * self.d];
                for (o, w) in dx.iter_mut().zip(row) {
                    *o += w * dj * scale;
                }
            }
            dx
        }
    }

    /// Mean (optionally weighted) soft-target cross-entropy and its exact
    /// gradients.
    pub fn loss_and_grads(&self, xs: &[Vec<f64>], targets: &[Vec<f64>], weights: Option<&[f64]>) -> Result<Gradients> {
        self.batch_checks(xs, targets, weights)?;
        let total_w: f64 = weights.map_or(xs.len() as f64, |w| w.iter().sum());
        let mut grad = vec![0.0; self.params.len()];
        let mut inputs = Vec::with_capacity(xs.len());
        let mut loss = 0.0;
        for (i, (x, t)) in xs.iter().zip(targets).enumerate() {
            let w = weights.map_or(1.0, |w| w[i]) / total_w;
            let (a, z) = self.forward_cached(x);
            let p = softmax(&z, 1.0)?;
            let lse = crate::scoring::stable_logsumexp(&z)?;
            loss += w * t.iter().zip(&z).map(|(ti, zi)| ti * (lse - zi)).sum::<f64>();
            let tsum: f64 = t.iter().sum();
            let dz: Vec<f64> = p.iter().zip(t).map(|(pi, ti)| pi * tsum - ti).collect();
            inputs.push(self.backward(x, &a, &dz, w, Some(&mut grad)));
        }
        Ok(Gradients { loss, params: grad, inputs })
    }

    /// Loss only; used by training traces and finite-difference checks.
    pub fn loss(&self, xs: &[Vec<f64>], targets: &[Vec<f64>], weights: Option<&[f64]>) -> Result<f64> {
        self.batch_checks(xs, targets, weights)?;
        let total_w: f64 = weights.map_or(xs.len() as f64, |w| w.iter().sum());
        let mut loss = 0.0;
        for (i, (x, t)) in xs.iter().zip(targets).enumerate() {
            let w = weights.map_or(1.0, |w| w[i]) / total_w;
            let z = self.forward_cached(x).1;
            let lse = crate::scoring::stable_logsumexp(&z)?;
            loss += w * t.iter().zip(&z).map(|(ti, zi)| ti * (lse - zi)).sum::<f64>();
        }
        Ok(loss)
    }

    fn batch_checks(&self, xs: &[Vec<f64>], targets: &[Vec<f64>], weights: Option<&[f64]>) -> Result<()> {
        if xs.is_empty() {
            return Err(Error::EmptyBatch);
        }
        if xs.len() != targets.len() {
            return Err(Error::LengthMismatch { left: xs.len(), right: targets.len() });
        }
        if let Some(w) = weights {
            if w.len() != xs.len() {
                return Err(Error::LengthMismatch { left: xs.len(), right: w.len() });
            }
        }
        for x in xs {
            self.check_input(x)?;
        }
        for t in targets {
            if t.len() != self.c {
                return Err(Error::DimensionMismatch { expected: self.c, got: t.len() });
            }
        }
        Ok(())
    }

    /// Gradients of the mean label-smoothed cross-entropy.
    pub fn grads(&self, xs: &[Vec<f64>], labels: &[usize], smoothing: f64) -> Result<Gradients> {
        let targets = labels
            .iter()
            .map(|&l| smooth_targets(l, self.c, smoothing))
            .collect::<Result<Vec<_>>>()?;
        self.loss_and_grads(xs, &targets, None)
    }

    pub fn accuracy(&self, xs: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
        if xs.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let mut correct = 0usize;
        for (x, &l) in xs.iter().zip(labels) {
            if self.predict(x)? == l {
                correct += 1;
            }
        }
        Ok(correct as f64 / xs.len() as f64)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serialization cannot fail")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let raw: TinyClassifier =
            serde_json::from_str(s).map_err(|e| Error::InvalidArgument(format!("model JSON: {e}")))?;
        Self::from_params(raw.d, raw.h, raw.c, raw.params)
    }
}

impl DifferentiableClassifier for TinyClassifier {
    fn input_dim(&self) -> usize {
        self.d
    }

    fn num_classes(&self) -> usize {
        self.c
    }

    fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.forward(x)
    }

    fn input_vjp(&self, x: &[f64], upstream: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        if upstream.len() != self.c {
            return Err(Error::DimensionMismatch { expected: self.c, got: upstream.len() });
        }
        let (a, _) = self.forward_cached(x);
        Ok(self.backward(x, &a, upstream, 1.0, None))
    }
}

/// `(1 − α)·onehot(label) + α/C`.
pub fn smooth_targets(label: usize, classes: usize, alpha: f64) -> Result<Vec<f64>> {
    if label >= classes {
        return Err(Error::BadLabelIndex { row: 0, label: label as i64, classes });
    }
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!("label smoothing must lie in [0, 1), got {alpha}")));
    }
    let base = alpha / classes as f64;
    let mut t = vec![base; classes];
    t[label] += 1.0 - alpha;
    Ok(t)
}

/// Convex combination of two samples and their target vectors.
pub fn mixup(x1: &[f64], y1: &[f64], x2: &[f64], y2: &[f64], lambda: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if x1.len() != x2.len() {
        return Err(Error::DimensionMismatch { expected: x1.len(), got: x2.len() });
    }
    if y1.len() != y2.len() {
        return Err(Error::DimensionMismatch { expected: y1.len(), got: y2.len() });
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidArgument(format!("mixup weight must lie in [0, 1], got {lambda}")));
    }
    let mix = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| lambda * u + (1.0 - lambda) * v).collect();
    Ok((mix(x1, x2), mix(y1, y2)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub head_lr: f64,
    /// Zero freezes the backbone.
    pub backbone_lr: f64,
    pub weight_decay: f64,
    pub label_smoothing: f64,
    /// Beta(α, α) mixing; zero disables MixUp.
    pub mixup_alpha: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Leading epochs trained with the backbone frozen.
    pub warmup_epochs: usize,
    /// Weight the loss by inverse class frequency.
    pub class_balanced: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            head_lr: 0.1,
            backbone_lr: 0.0,
            weight_decay: 0.0,
            label_smoothing: 0.0,
            mixup_alpha: 0.0,
            batch_size: 32,
            epochs: 30,
            warmup_epochs: 0,
            class_balanced: false,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let nonneg = |name: &str, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!("{name} must be a non-negative finite number, got {v}")))
            }
        };
        nonneg("head_lr", self.head_lr)?;
        nonneg("backbone_lr", self.backbone_lr)?;
        nonneg("weight_decay", self.weight_decay)?;
        nonneg("mixup_alpha", self.mixup_alpha)?;
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return Err(Error::InvalidArgument(format!(
                "label_smoothing must lie in [0, 1), got {}",
                self.label_smoothing
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    /// Full-data smoothed loss after each epoch.
    pub loss: Vec<f64>,
    /// Full-data accuracy after each epoch.
    pub accuracy: Vec<f64>,
}

/// Mini-batch SGD with separate head/backbone learning rates and decoupled
/// weight decay. Deterministic for a given config seed.
pub fn train(model: &TinyClassifier, xs: &[Vec<f64>], labels: &[usize], cfg: &TrainConfig) -> Result<(TinyClassifier, TrainTrace)> {
    cfg.validate()?;
    if xs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if xs.len() != labels.len() {
        return Err(Error::LengthMismatch { left: xs.len(), right: labels.len() });
    }
    let c = model.classes();
    let targets = labels
        .iter()
        .map(|&l| smooth_targets(l, c, cfg.label_smoothing))
        .collect::<Result<Vec<_>>>()?;
    let sample_w: Option<Vec<f64>> = if cfg.class_balanced {
        let w = crate::hygiene::class_weights(labels, c)?;
        Some(labels.iter().map(|&l| w[l]).collect())
    } else {
        None
    };
    let beta = if cfg.mixup_alpha > 0.0 {
        Some(Beta::new(cfg.mixup_alpha, cfg.mixup_alpha).map_err(|e| Error::InvalidArgument(e.to_string()))?)
    } else {
        None
    };

    let mut m = model.clone();
    let mut r = rng::seeded(cfg.seed);
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let head = m.head_range();
    let backbone = m.backbone_range();
    let mut trace = TrainTrace { loss: Vec::with_capacity(cfg.epochs), accuracy: Vec::with_capacity(cfg.epochs) };

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut r);
        let backbone_lr = if epoch < cfg.warmup_epochs { 0.0 } else { cfg.backbone_lr };
        for batch in order.chunks(cfg.batch_size) {
            let mut bx: Vec<Vec<f64>> = batch.iter().map(|&i| xs[i].clone()).collect();
            let mut by: Vec<Vec<f64>> = batch.iter().map(|&i| targets[i].clone()).collect();
            let bw: Option<Vec<f64>> = sample_w.as_ref().map(|w| batch.iter().map(|&i| w[i]).collect());
            if let Some(beta) = &beta {
                let lambda: f64 = beta.sample(&mut r);
                let mut partner: Vec<usize> = (0..batch.len()).collect();
                partner.shuffle(&mut r);
                let (ox, oy) = (bx.clone(), by.clone());
                for (k, &j) in partner.iter().enumerate() {
                    let (mx, my) = mixup(&ox[k], &oy[k], &ox[j], &oy[j], lambda)?;
                    bx[k] = mx;
                    by[k] = my;
                }
            }
            let g = m.loss_and_grads(&bx, &by, bw.as_deref())?;
            step(&mut m.params[head.clone()], &g.params[head.clone()], cfg.head_lr, cfg.weight_decay);
            step(&mut m.params[backbone.clone()], &g.params[backbone.clone()], backbone_lr, cfg.weight_decay);
        }
        trace.loss.push(m.loss(xs, &targets, sample_w.as_deref())?);
        trace.accuracy.push(m.accuracy(xs, labels)?);
    }
    Ok((m, trace))
}

fn step(params: &mut [f64], grads: &[f64], lr: f64, weight_decay: f64) {
    if lr == 0.0 {
        return;
    }
    let shrink = 1.0 - lr * weight_decay;
    for (p, g) in params.iter_mut().zip(grads) {
        *p = *p * shrink - lr * g;
    }
}
