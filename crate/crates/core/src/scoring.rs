//! Confidence scores over logits: softmax, maximum softmax probability (MSP),
//! Energy, and ODIN.
//!
//! All detector scores are oriented so that larger means more
//! in-distribution. Energy itself is reported on its native scale (lower is
//! more in-distribution); [`energy_detector_score`] negates it for ranking.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A model that exposes logits and vector-Jacobian products with respect to
/// its input. ODIN needs nothing else.
pub trait DifferentiableClassifier {
    fn input_dim(&self) -> usize;
    fn num_classes(&self) -> usize;
    fn logits(&self, x: &[f64]) -> Result<Vec<f64>>;
    /// Gradient with respect to `x` of `Σ_k upstream[k] · logits(x)[k]`.
    fn input_vjp(&self, x: &[f64], upstream: &[f64]) -> Result<Vec<f64>>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdinConfig {
    pub temperature: f64,
    /// Perturbation magnitude in input-feature units.
    pub epsilon: f64,
}

impl OdinConfig {
    pub fn new(temperature: f64, epsilon: f64) -> Result<Self> {
        let cfg = Self { temperature, epsilon };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            return Err(Error::NonPositiveTemperature(self.temperature));
        }
        if !(self.epsilon >= 0.0) || !self.epsilon.is_finite() {
            return Err(Error::InvalidArgument(format!("ODIN epsilon must be >= 0, got {}", self.epsilon)));
        }
        Ok(())
    }
}

pub const ODIN_TEMPERATURE_GRID: [f64; 4] = [1.0, 10.0, 100.0, 1000.0];
pub const ODIN_EPSILON_GRID: [f64; 4] = [0.0, 0.001, 0.002, 0.004];

/// The default ODIN search grid, temperature-major.
pub fn odin_grid() -> Vec<OdinConfig> {
    ODIN_TEMPERATURE_GRID
        .iter()
        .flat_map(|&t| ODIN_EPSILON_GRID.iter().map(move |&e| OdinConfig { temperature: t, epsilon: e }))
        .collect()
}

/// `log Σ exp(v_i)` with max-shift.
pub fn stable_logsumexp(v: &[f64]) -> Result<f64> {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if v.is_empty() {
        return Err(Error::EmptyVector);
    }
    if !max.is_finite() {
        return Err(Error::InvalidArgument("logsumexp input must be finite".into()));
    }
    let sum: f64 = v.iter().map(|&x| (x - max).exp()).sum();
    Ok(max + sum.ln())
}

fn check_temperature(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositiveTemperature(t))
    }
}

pub fn softmax(logits: &[f64], temperature: f64) -> Result<Vec<f64>> {
    check_temperature(temperature)?;
    if logits.is_empty() {
        return Err(Error::EmptyVector);
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() || logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("logits must be finite".into()));
    }
    let exps: Vec<f64> = logits.iter().map(|&z| ((z - max) / temperature).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Maximum softmax probability at temperature 1.
pub fn msp_score(logits: &[f64]) -> Result<f64> {
    tempered_msp(logits, 1.0)
}

pub fn tempered_msp(logits: &[f64], temperature: f64) -> Result<f64> {
    let p = softmax(logits, temperature)?;
    Ok(p.into_iter().fold(0.0, f64::max))
}

/// `E = −T · logsumexp(logits / T)`.
pub fn energy_score(logits: &[f64], temperature: f64) -> Result<f64> {
    check_temperature(temperature)?;
    let scaled: Vec<f64> = logits.iter().map(|&z| z / temperature).collect();
    Ok(-temperature * stable_logsumexp(&scaled)?)
}

/// `−E`, so that larger means more in-distribution.
pub fn energy_detector_score(logits: &[f64], temperature: f64) -> Result<f64> {
    Ok(-energy_score(logits, temperature)?)
}

/// The ODIN input: `x − ε · sign(∇ₓ[−log max softmax(f(x)/T)])`.
///
/// Stepping against the gradient of the loss raises the winning class'
/// tempered probability.
pub fn odin_perturb<M: DifferentiableClassifier + ?Sized>(model: &M, x: &[f64], cfg: &OdinConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    if x.len() != model.input_dim() {
        return Err(Error::DimensionMismatch { expected: model.input_dim(), got: x.len() });
    }
    if cfg.epsilon == 0.0 {
        return Ok(x.to_vec());
    }
    let z = model.logits(x)?;
    let p = softmax(&z, cfg.temperature)?;
    let k = argmax(&p);
    // d/dz_j of −log p_k(z/T) = (p_j − [j = k]) / T
    let upstream: Vec<f64> = p
        .iter()
        .enumerate()
        .map(|(j, &pj)| (pj - if j == k { 1.0 } else { 0.0 }) / cfg.temperature)
        .collect();
    let g = model.input_vjp(x, &upstream)?;
    Ok(x.iter().zip(&g).map(|(&xi, &gi)| xi - cfg.epsilon * sign(gi)).collect())
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub fn odin_score<M: DifferentiableClassifier + ?Sized>(model: &M, x: &[f64], cfg: &OdinConfig) -> Result<f64> {
    let xt = odin_perturb(model, x, cfg)?;
    tempered_msp(&model.logits(&xt)?, cfg.temperature)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Msp,
    Energy,
    Odin,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[track_caller]
    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn logsumexp_examples() {
        close(stable_logsumexp(&[0.0; 4]).unwrap(), 4f64.ln(), 1e-15);
        close(stable_logsumexp(&[1000.0, 1000.0]).unwrap(), 1000.0 + 2f64.ln(), 1e-12);
        assert_eq!(stable_logsumexp(&[3.0]).unwrap(), 3.0);
        assert!(matches!(stable_logsumexp(&[]), Err(Error::EmptyVector)));
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax(&[0.0; 4], 1.0).unwrap(), vec![0.25; 4]);
        let l: Vec<f64> = [1.0f64, 2.0, 3.0, 4.0].iter().map(|v| v.ln()).collect();
        for (p, e) in softmax(&l, 1.0).unwrap().iter().zip([0.1, 0.2, 0.3, 0.4]) {
            close(*p, e, 1e-15);
        }
        for p in softmax(&[5.0, -3.0, 2.0, 0.5], 1e6).unwrap() {
            close(p, 0.25, 1e-4);
        }
        assert!(matches!(softmax(&[1.0], 0.0), Err(Error::NonPositiveTemperature(_))));
        assert!(matches!(softmax(&[1.0], -2.0), Err(Error::NonPositiveTemperature(_))));
    }

    #[test]
    fn msp_examples() {
        assert_eq!(msp_score(&[0.0; 4]).unwrap(), 0.25);
        let l: Vec<f64> = [1.0f64, 2.0, 3.0, 4.0].iter().map(|v| v.ln()).collect();
        close(msp_score(&l).unwrap(), 0.4, 1e-15);
        // e^2 / (e^2 + e + 2)
        close(msp_score(&[2.0, 1.0, 0.0, 0.0]).unwrap(), 0.610295685, 1e-9);
    }

    #[test]
    fn energy_examples() {
        close(energy_score(&[0.0; 4], 1.0).unwrap(), -(4f64.ln()), 1e-15);
        for t in [0.1, 1.0, 7.5, 1000.0] {
            close(energy_score(&[3.25], t).unwrap(), -3.25, 1e-12);
        }
        // −ln(e^2 + e + 2)
        close(energy_score(&[2.0, 1.0, 0.0, 0.0], 1.0).unwrap(), -2.493811709, 1e-9);
        assert!(energy_score(&[1.0], 0.0).is_err());
    }

    #[test]
    fn odin_grid_shape() {
        let g = odin_grid();
        assert_eq!(g.len(), 16);
        assert_eq!(g[0], OdinConfig { temperature: 1.0, epsilon: 0.0 });
        assert_eq!(g[15], OdinConfig { temperature: 1000.0, epsilon: 0.004 });
        assert!(OdinConfig::new(0.0, 0.1).is_err());
        assert!(OdinConfig::new(1.0, -0.1).is_err());
    }

    proptest! {
        #[test]
        fn logsumexp_shift_equivariant(v in prop::collection::vec(-50f64..50.0, 1..8), c in -100f64..100.0) {
            let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
            prop_assert!((stable_logsumexp(&shifted).unwrap() - stable_logsumexp(&v).unwrap() - c).abs() < 1e-9);
        }

        #[test]
        fn softmax_normalized_and_shift_invariant(v in prop::collection::vec(-30f64..30.0, 1..8), c in -50f64..50.0, t in 0.05f64..100.0) {
            let p = softmax(&v, t).unwrap();
            prop_assert!(p.iter().all(|&x| x > 0.0));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
            let q = softmax(&shifted, t).unwrap();
            for (a, b) in p.iter().zip(&q) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn softmax_preserves_argmax(v in prop::collection::vec(-30f64..30.0, 1..8), t in 0.01f64..1e4) {
            prop_assert_eq!(argmax(&softmax(&v, t).unwrap()), argmax(&v));
        }

        #[test]
        fn msp_bounds(v in prop::collection::vec(-60f64..60.0, 1..10)) {
            let s = msp_score(&v).unwrap();
            let c = v.len() as f64;
            prop_assert!(s >= 1.0 / c - 1e-15 && s <= 1.0);
        }

        #[test]
        fn energy_shift(v in prop::collection::vec(-30f64..30.0, 1..8), c in -50f64..50.0, t in 0.1f64..10.0) {
            let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
            let d = energy_score(&shifted, t).unwrap() - (energy_score(&v, t).unwrap() - c);
            prop_assert!(d.abs() < 1e-9);
        }
    }
}
