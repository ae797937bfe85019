use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng;

/// Smallest covariance eigenvalue (Lab units squared).
pub const COVARIANCE_FLOOR: f64 = 1e-6;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian {
    pub weight: f64,
    pub mean: [f64; 3],
    pub cov: [[f64; 3]; 3],
    inv: Matrix3<f64>,
    /// `−½(3 ln 2π + ln det Σ)`
    log_norm: f64,
}

impl Gaussian {
    fn new(weight: f64, mean: Vector3<f64>, cov: Matrix3<f64>) -> Self {
        let cov = floor_eigenvalues(cov);
        let det = cov.determinant();
        let inv = cov.try_inverse().expect("floored covariance is invertible");
        Self {
            weight,
            mean: [mean.x, mean.y, mean.z],
            cov: [
                [cov[(0, 0)], cov[(0, 1)], cov[(0, 2)]],
                [cov[(1, 0)], cov[(1, 1)], cov[(1, 2)]],
                [cov[(2, 0)], cov[(2, 1)], cov[(2, 2)]],
            ],
            inv,
            log_norm: -0.5 * (3.0 * LN_2PI + det.ln()),
        }
    }

    fn log_pdf(&self, z: &[f64; 3]) -> f64 {
        let d = Vector3::new(z[0] - self.mean[0], z[1] - self.mean[1], z[2] - self.mean[2]);
        self.log_norm - 0.5 * d.dot(&(self.inv * d))
    }
}

/// Constrained covariance update: clipping eigenvalues from below is the
/// maximiser of the Gaussian likelihood under `λ_min ≥ floor`, so EM with
/// this step still never decreases the log-likelihood.
fn floor_eigenvalues(cov: Matrix3<f64>) -> Matrix3<f64> {
    let sym = (cov + cov.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    if eig.eigenvalues.iter().all(|&l| l >= COVARIANCE_FLOOR) {
        return sym;
    }
    let clipped = eig.eigenvalues.map(|l| l.max(COVARIANCE_FLOOR));
    let v = eig.eigenvectors;
    let r = v * Matrix3::from_diagonal(&clipped) * v.transpose();
    (r + r.transpose()) * 0.5
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmmModel {
    pub components: Vec<Gaussian>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmmFit {
    pub model: GmmModel,
    /// Total log-likelihood of the data after initialisation and after each EM
    /// iteration.
    pub log_likelihood: Vec<f64>,
}

impl GmmModel {
    pub fn k(&self) -> usize {
        self.components.len()
    }

    /// `log p(z)` under the mixture.
    pub fn log_likelihood(&self, z: &[f64; 3]) -> f64 {
        let terms = self.component_log_terms(z);
        log_sum_exp(&terms)
    }

    fn component_log_terms(&self, z: &[f64; 3]) -> Vec<f64> {
        self.components
            .iter()
            .map(|g| if g.weight > 0.0 { g.weight.ln() + g.log_pdf(z) } else { f64::NEG_INFINITY })
            .collect()
    }

    pub fn total_log_likelihood(&self, pixels: &[[f64; 3]]) -> f64 {
        pixels.iter().map(|z| self.log_likelihood(z)).sum()
    }

    /// Continues EM from the current parameters on `pixels`.
    pub fn refine(&self, pixels: &[[f64; 3]], iters: usize) -> Result<GmmFit> {
        if pixels.is_empty() {
            return Err(Error::TooFewPixels { pixels: 0, components: self.k() });
        }
        Ok(run_em(self.clone(), pixels, iters))
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn sq_dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (0..3).map(|i| (a[i] - b[i]).powi(2)).sum()
}

/// M-step from per-pixel responsibilities (`resp[i * k + j]`). Components
/// with no mass keep their previous parameters at weight zero.
fn m_step(pixels: &[[f64; 3]], resp: &[f64], k: usize, previous: Option<&GmmModel>) -> GmmModel {
    let n = pixels.len() as f64;
    let components = (0..k)
        .map(|j| {
            let nk: f64 = (0..pixels.len()).map(|i| resp[i * k + j]).sum();
            if nk <= 1e-12 {
                let prev = previous.map(|p| p.components[j].clone());
                return match prev {
                    Some(g) => Gaussian { weight: 0.0, ..g },
                    None => Gaussian::new(0.0, Vector3::from(pixels[0]), Matrix3::identity()),
                };
            }
            let mut mean = Vector3::zeros();
            for (i, z) in pixels.iter().enumerate() {
                mean += Vector3::from(*z) * resp[i * k + j];
            }
            mean /= nk;
            let mut cov = Matrix3::zeros();
            for (i, z) in pixels.iter().enumerate() {
                let d = Vector3::from(*z) - mean;
                cov += d * d.transpose() * resp[i * k + j];
            }
            cov /= nk;
            Gaussian::new(nk / n, mean, cov)
        })
        .collect();
    GmmModel { components }
}

fn run_em(mut model: GmmModel, pixels: &[[f64; 3]], iters: usize) -> GmmFit {
    let k = model.k();
    let mut resp = vec![0.0; pixels.len() * k];
    let mut trace = vec![model.total_log_likelihood(pixels)];
    for _ in 0..iters {
        for (i, z) in pixels.iter().enumerate() {
            let terms = model.component_log_terms(z);
            let lse = log_sum_exp(&terms);
            for (j, t) in terms.iter().enumerate() {
                resp[i * k + j] = (t - lse).exp();
            }
        }
        let next = m_step(pixels, &resp, k, Some(&model));
        let ll = next.total_log_likelihood(pixels);
        let gain = ll - trace.last().unwrap();
        // never accept a step that rounding made worse
        if gain < 0.0 {
            break;
        }
        model = next;
        trace.push(ll);
        if gain / (pixels.len() as f64) < 1e-6 {
            break;
        }
    }
    GmmFit { model, log_likelihood: trace }
}

/// k-means++ seeding, a hard-assignment M-step, then EM for at most `iters`
/// iterations or until the per-pixel log-likelihood gain drops below 1e-6.
pub fn fit_gmm(pixels: &[[f64; 3]], k: usize, iters: usize, seed: u64) -> Result<GmmFit> {
    if k == 0 || pixels.len() < k {
        return Err(Error::TooFewPixels { pixels: pixels.len(), components: k });
    }
    let mut r = rng::seeded(seed);
    let mut centers = vec![pixels[r.random_range(0..pixels.len())]];
    let mut d2: Vec<f64> = pixels.iter().map(|z| sq_dist(z, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = r.random::<f64>() * total;
            let mut idx = pixels.len() - 1;
            for (i, &d) in d2.iter().enumerate() {
                if target < d {
                    idx = i;
                    break;
                }
                target -= d;
            }
            idx
        } else {
            r.random_range(0..pixels.len())
        };
        let c = pixels[pick];
        for (d, z) in d2.iter_mut().zip(pixels) {
            *d = d.min(sq_dist(z, &c));
        }
        centers.push(c);
    }
    let mut resp = vec![0.0; pixels.len() * k];
    for (i, z) in pixels.iter().enumerate() {
        let j = (0..k)
            .min_by(|&a, &b| sq_dist(z, &centers[a]).total_cmp(&sq_dist(z, &centers[b])))
            .unwrap();
        resp[i * k + j] = 1.0;
    }
    let init = m_step(pixels, &resp, k, None);
    Ok(run_em(init, pixels, iters))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn identical_pixels_collapse() {
        let px = vec![[50.0, 10.0, -5.0]; 40];
        let fit = fit_gmm(&px, 3, 10, 1).unwrap();
        for g in fit.model.components.iter().filter(|g| g.weight > 0.0) {
            assert_eq!(g.mean, [50.0, 10.0, -5.0]);
        }
        assert!(fit.log_likelihood.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn recovers_two_blobs() {
        let mut r = rng::seeded(8);
        let noise = Normal::new(0.0, 2.0).unwrap();
        let centers = [[30.0, 20.0, 10.0], [70.0, -20.0, 40.0]];
        let px: Vec<[f64; 3]> = (0..600)
            .map(|i| centers[i % 2].map(|c| c + noise.sample(&mut r)))
            .collect();
        let fit = fit_gmm(&px, 2, 50, 3).unwrap();
        for c in &centers {
            let nearest = fit.model.components.iter().map(|g| sq_dist(&g.mean, c).sqrt()).fold(f64::INFINITY, f64::min);
            assert!(nearest < 1.0, "{nearest}");
        }
        assert!(fit.log_likelihood.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn em_trace_non_decreasing_on_mixed_data() {
        let mut r = rng::seeded(2);
        let px: Vec<[f64; 3]> = (0..500)
            .map(|_| [r.random_range(0.0..100.0), r.random_range(-50.0..50.0), r.random_range(-50.0..50.0)])
            .collect();
        let fit = fit_gmm(&px, 5, 40, 9).unwrap();
        assert!(fit.log_likelihood.len() > 2);
        assert!(fit.log_likelihood.windows(2).all(|w| w[1] >= w[0]));
        let again = fit.model.refine(&px, 10).unwrap();
        assert!(again.log_likelihood[0] >= *fit.log_likelihood.last().unwrap() - 1e-9);
    }

    #[test]
    fn too_few_pixels() {
        assert!(matches!(fit_gmm(&[[0.0; 3]; 2], 3, 5, 1), Err(Error::TooFewPixels { .. })));
    }

    #[test]
    fn floor_applies_to_eigenvalues() {
        let g = Gaussian::new(1.0, Vector3::zeros(), Matrix3::zeros());
        let m = Matrix3::from_fn(|i, j| g.cov[i][j]);
        let eig = SymmetricEigen::new(m);
        assert!(eig.eigenvalues.iter().all(|&l| l >= COVARIANCE_FLOOR * (1.0 - 1e-9)));
    }
}
