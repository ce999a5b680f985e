//! Closed-form score functions for diagonal Gaussian mixtures at every noise
//! level. These serve as ground-truth eps providers for validating samplers
//! and solvers without any training.

use rand::Rng;

use crate::diffusion::EpsProvider;
use crate::error::{Error, Result};
use crate::rng::{rng_from_seed, standard_normal};
use crate::schedule::NoiseSchedule;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// A mixture of axis-aligned Gaussians.
#[derive(Debug, Clone)]
pub struct GaussianMixture {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    variances: Vec<Vec<f64>>,
}

impl GaussianMixture {
    pub fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, variances: Vec<Vec<f64>>) -> Result<Self> {
        if weights.is_empty() || means.len() != weights.len() || variances.len() != weights.len() {
            return Err(Error::InvalidArgument(
                "mixture needs matching, nonempty weights/means/variances".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 || weights.iter().any(|&w| w < 0.0) {
            return Err(Error::InvalidArgument(format!(
                "weights must be a simplex vector, sum = {total}"
            )));
        }
        let d = means[0].len();
        if d == 0 {
            return Err(Error::InvalidArgument("dimension must be >= 1".into()));
        }
        for (m, v) in means.iter().zip(&variances) {
            if m.len() != d || v.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: m.len().min(v.len()),
                });
            }
            if v.iter().any(|&x| x <= 0.0) {
                return Err(Error::InvalidArgument("variances must be positive".into()));
            }
        }
        Ok(Self {
            weights,
            means,
            variances,
        })
    }

    /// Single Gaussian convenience constructor.
    pub fn single(mean: Vec<f64>, variance: Vec<f64>) -> Result<Self> {
        Self::new(vec![1.0], vec![mean], vec![variance])
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn components(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    pub fn variances(&self) -> &[Vec<f64>] {
        &self.variances
    }

    /// Per-component log densities of the noised mixture at level `t`.
    ///
    /// The t-marginal of component k is N(sqrt(abar) mu_k, abar var_k + 1 - abar).
    fn component_log_densities(&self, x: &[f64], t: usize, schedule: &NoiseSchedule) -> Vec<f64> {
        let abar = schedule.alpha_bar(t);
        let scale = abar.sqrt();
        self.weights
            .iter()
            .zip(self.means.iter().zip(&self.variances))
            .map(|(&w, (mu, var))| {
                let mut log_p = w.ln();
                for i in 0..x.len() {
                    let v = abar * var[i] + (1.0 - abar);
                    let diff = x[i] - scale * mu[i];
                    log_p += -0.5 * (LN_2PI + v.ln() + diff * diff / v);
                }
                log_p
            })
            .collect()
    }

    /// Log density of the noised mixture, combined with log-sum-exp.
    pub fn log_density_at(&self, x: &[f64], t: usize, schedule: &NoiseSchedule) -> f64 {
        log_sum_exp(&self.component_log_densities(x, t, schedule))
    }

    /// Gradient of [`Self::log_density_at`] in `x`.
    pub fn score_at(&self, x: &[f64], t: usize, schedule: &NoiseSchedule) -> Vec<f64> {
        let abar = schedule.alpha_bar(t);
        let scale = abar.sqrt();
        let log_ps = self.component_log_densities(x, t, schedule);
        let resp = responsibilities(&log_ps);
        let mut score = vec![0.0; x.len()];
        for (k, r) in resp.iter().enumerate() {
            if *r == 0.0 {
                continue;
            }
            for i in 0..x.len() {
                let v = abar * self.variances[k][i] + (1.0 - abar);
                score[i] += r * (scale * self.means[k][i] - x[i]) / v;
            }
        }
        score
    }

    /// Eps provider evaluating `-sqrt(1 - abar_t) * score`.
    pub fn eps_provider<'a>(&'a self, schedule: &'a NoiseSchedule) -> GmmEpsProvider<'a> {
        GmmEpsProvider {
            gmm: self,
            schedule,
        }
    }

    /// Ancestral mixture sampling: pick a component by weight, then draw.
    pub fn sample(&self, n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = rng_from_seed(seed);
        let d = self.dim();
        (0..n)
            .map(|_| {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut k = self.components() - 1;
                for (i, &w) in self.weights.iter().enumerate() {
                    acc += w;
                    if u < acc {
                        k = i;
                        break;
                    }
                }
                (0..d)
                    .map(|i| {
                        self.means[k][i] + self.variances[k][i].sqrt() * standard_normal(&mut rng)
                    })
                    .collect()
            })
            .collect()
    }
}

/// Analytic eps provider backed by a mixture oracle.
pub struct GmmEpsProvider<'a> {
    gmm: &'a GaussianMixture,
    schedule: &'a NoiseSchedule,
}

impl EpsProvider for GmmEpsProvider<'_> {
    fn eps(&self, x_t: &[f64], t: usize) -> Vec<f64> {
        let coef = -(1.0 - self.schedule.alpha_bar(t)).sqrt();
        self.gmm
            .score_at(x_t, t, self.schedule)
            .into_iter()
            .map(|s| coef * s)
            .collect()
    }
}

pub(crate) fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Normalized posterior component probabilities from per-component log densities.
fn responsibilities(log_ps: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(log_ps);
    log_ps.iter().map(|lp| (lp - lse).exp()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schedule() -> NoiseSchedule {
        NoiseSchedule::linear(100, 1e-4, 0.02).unwrap()
    }

    fn two_component(d: usize, sep: f64) -> GaussianMixture {
        GaussianMixture::new(
            vec![0.5, 0.5],
            vec![vec![sep; d], vec![-sep; d]],
            vec![vec![0.2; d], vec![0.2; d]],
        )
        .unwrap()
    }

    #[test]
    fn rejects_invalid_mixtures() {
        assert!(GaussianMixture::new(vec![0.7, 0.7], vec![vec![0.0]; 2], vec![vec![1.0]; 2]).is_err());
        assert!(GaussianMixture::new(vec![1.0], vec![vec![0.0]], vec![vec![0.0]]).is_err());
        assert!(GaussianMixture::new(vec![1.0], vec![vec![0.0, 1.0]], vec![vec![1.0]]).is_err());
    }

    #[test]
    fn standard_normal_marginal_is_invariant() {
        let s = schedule();
        let gmm = GaussianMixture::single(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let x = [0.4, -1.1];
        let expect = -0.5 * (2.0 * LN_2PI + x.iter().map(|v| v * v).sum::<f64>());
        for t in [0, 1, 50, 100] {
            assert!((gmm.log_density_at(&x, t, &s) - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn t0_density_matches_original_mixture() {
        let s = schedule();
        let gmm = two_component(2, 1.0);
        let x = [0.3, 0.9];
        // direct evaluation of the unsmoothed mixture
        let mut direct = 0.0;
        for k in 0..2 {
            let mut log_p: f64 = 0.0;
            for i in 0..2 {
                let v = gmm.variances()[k][i];
                let diff = x[i] - gmm.means()[k][i];
                log_p += -0.5 * (LN_2PI + v.ln() + diff * diff / v);
            }
            direct += 0.5 * log_p.exp();
        }
        assert!((gmm.log_density_at(&x, 0, &s) - direct.ln()).abs() < 1e-12);
    }

    #[test]
    fn symmetric_mixture_density_is_even() {
        let s = schedule();
        let gmm = two_component(3, 0.8);
        let x = [0.2, -0.7, 1.3];
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        for t in [0, 10, 90] {
            let a = gmm.log_density_at(&x, t, &s);
            let b = gmm.log_density_at(&neg, t, &s);
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn single_gaussian_score_is_linear() {
        let s = schedule();
        let mu = vec![0.5, -0.25];
        let gmm = GaussianMixture::single(mu.clone(), vec![1.0, 1.0]).unwrap();
        let x = [1.0, 2.0];
        for t in [0, 30, 100] {
            let abar = s.alpha_bar(t);
            let score = gmm.score_at(&x, t, &s);
            // variance abar*1 + (1-abar) = 1, so score = -(x - sqrt(abar) mu)
            for i in 0..2 {
                let expect = -(x[i] - abar.sqrt() * mu[i]);
                assert!((score[i] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn symmetric_mixture_score_vanishes_at_origin() {
        let s = schedule();
        let gmm = two_component(2, 1.5);
        let score = gmm.score_at(&[0.0, 0.0], 20, &s);
        assert!(score.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn score_matches_finite_differences() {
        let s = schedule();
        let gmm = GaussianMixture::new(
            vec![0.3, 0.5, 0.2],
            vec![vec![1.0, -2.0], vec![0.0, 0.5], vec![-1.5, 3.0]],
            vec![vec![0.3, 1.2], vec![2.0, 0.1], vec![0.7, 0.7]],
        )
        .unwrap();
        let mut rng = rng_from_seed(5);
        let h = 1e-5;
        for _ in 0..20 {
            let x: Vec<f64> = (0..2).map(|_| 3.0 * standard_normal(&mut rng)).collect();
            let t = rng.random_range(0..=100);
            let score = gmm.score_at(&x, t, &s);
            for i in 0..2 {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[i] += h;
                xm[i] -= h;
                let fd = (gmm.log_density_at(&xp, t, &s) - gmm.log_density_at(&xm, t, &s))
                    / (2.0 * h);
                let rel = (score[i] - fd).abs() / score[i].abs().max(1e-8);
                assert!(rel < 1e-5, "rel error {rel} at t={t}");
            }
        }
    }

    #[test]
    fn eps_provider_matches_score_relation() {
        let s = schedule();
        let gmm = GaussianMixture::single(vec![0.0], vec![1.0]).unwrap();
        let provider = gmm.eps_provider(&s);
        let x = [0.75];
        for t in [1, 42, 100] {
            let eps = provider.eps(&x, t);
            // single N(0, I): score = -x, so eps = sqrt(1 - abar) x
            let expect = (1.0 - s.alpha_bar(t)).sqrt() * x[0];
            assert!((eps[0] - expect).abs() < 1e-12);
        }
        // zero score point of a symmetric mixture -> zero eps
        let sym = two_component(2, 1.0);
        let p2 = sym.eps_provider(&s);
        assert!(p2.eps(&[0.0, 0.0], 33).iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn sampling_respects_degenerate_weights() {
        let gmm = GaussianMixture::new(
            vec![1.0, 0.0],
            vec![vec![5.0], vec![-5.0]],
            vec![vec![1e-12], vec![1e-12]],
        )
        .unwrap();
        for x in gmm.sample(200, 9) {
            assert!((x[0] - 5.0).abs() < 1e-4);
        }
    }

    #[test]
    fn sampling_component_frequencies() {
        let gmm = GaussianMixture::new(
            vec![0.25, 0.75],
            vec![vec![10.0], vec![-10.0]],
            vec![vec![0.01], vec![0.01]],
        )
        .unwrap();
        let n = 10_000;
        let draws = gmm.sample(n, 123);
        let count_pos = draws.iter().filter(|x| x[0] > 0.0).count() as f64;
        let p = 0.25;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((count_pos / n as f64 - p).abs() < 3.0 * se);
    }

    #[test]
    fn noised_single_gaussian_moments_exact() {
        // K=1: marginal mean sqrt(abar) mu, variance abar var + (1 - abar).
        let s = schedule();
        let gmm = GaussianMixture::single(vec![2.0], vec![0.5]).unwrap();
        let t = 60;
        let abar = s.alpha_bar(t);
        // verify through density curvature at the mode: for a Gaussian,
        // score(x) = -(x - m)/v, linear with slope -1/v and root at m.
        let m = abar.sqrt() * 2.0;
        let v = abar * 0.5 + (1.0 - abar);
        let s1 = gmm.score_at(&[m], t, &s)[0];
        let s2 = gmm.score_at(&[m + 1.0], t, &s)[0];
        assert!(s1.abs() < 1e-12);
        assert!((s2 - (-1.0 / v)).abs() < 1e-12);
    }
}
