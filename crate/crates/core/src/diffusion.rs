//! Forward noising, Tweedie denoising and the stochastic ancestral sampler.
//!
//! Everything here is a pure function of its inputs: noise is always passed in
//! or drawn from an explicit seeded generator, so identical calls produce
//! identical outputs. Fields are flattened to plain vectors at this layer;
//! grid structure lives in the higher modules.

use crate::error::{Error, Result};
use crate::rng::{rng_from_seed, standard_normal_vec, SeededRng};
use crate::schedule::NoiseSchedule;

/// A flattened field together with its diffusion timestep.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionState {
    pub values: Vec<f64>,
    pub t: usize,
}

impl DiffusionState {
    pub fn new(values: Vec<f64>, t: usize, schedule: &NoiseSchedule) -> Result<Self> {
        if t > schedule.steps() {
            return Err(Error::TimestepOutOfRange {
                t,
                lo: 0,
                hi: schedule.steps(),
            });
        }
        Ok(Self { values, t })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Anything that predicts the injected noise `eps` from a noised state.
///
/// Implemented by the analytic mixture oracle and by the trained denoiser; the
/// batched entry point exists so providers with an efficient matrix path can
/// amortize work across particles.
pub trait EpsProvider: Sync {
    /// Predicted noise for one flattened state at timestep `t`.
    fn eps(&self, x_t: &[f64], t: usize) -> Vec<f64>;

    /// Predicted noise for `rows` states stored contiguously in `x_t`.
    fn eps_batch(&self, x_t: &[f64], rows: usize, t: usize) -> Vec<f64> {
        if rows == 0 {
            return Vec::new();
        }
        let d = x_t.len() / rows;
        let mut out = Vec::with_capacity(x_t.len());
        for r in 0..rows {
            out.extend(self.eps(&x_t[r * d..(r + 1) * d], t));
        }
        out
    }
}

impl<F> EpsProvider for F
where
    F: Fn(&[f64], usize) -> Vec<f64> + Sync,
{
    fn eps(&self, x_t: &[f64], t: usize) -> Vec<f64> {
        self(x_t, t)
    }
}

/// Closed-form marginal draw: `sqrt(abar_t) x0 + sqrt(1 - abar_t) z`.
pub fn forward_noise(
    x0: &[f64],
    t: usize,
    schedule: &NoiseSchedule,
    z: &[f64],
) -> Result<Vec<f64>> {
    if z.len() != x0.len() {
        return Err(Error::DimensionMismatch {
            expected: x0.len(),
            got: z.len(),
        });
    }
    let abar = schedule.alpha_bar(t);
    let signal = abar.sqrt();
    let noise = (1.0 - abar).sqrt();
    Ok(x0
        .iter()
        .zip(z)
        .map(|(&x, &n)| signal * x + noise * n)
        .collect())
}

/// Posterior-mean estimate of the clean field implied by the score at `(x_t, t)`:
/// `x0_hat = (x_t + (1 - abar_t) * score) / sqrt(abar_t)`.
pub fn tweedie_denoise(
    x_t: &[f64],
    t: usize,
    score: &[f64],
    schedule: &NoiseSchedule,
) -> Result<Vec<f64>> {
    if score.len() != x_t.len() {
        return Err(Error::DimensionMismatch {
            expected: x_t.len(),
            got: score.len(),
        });
    }
    let abar = schedule.alpha_bar(t);
    if abar == 0.0 {
        return Err(Error::InvalidArgument(
            "alpha_bar(t) = 0: denoising is undefined".into(),
        ));
    }
    let inv = 1.0 / abar.sqrt();
    let smoothing = 1.0 - abar;
    Ok(x_t
        .iter()
        .zip(score)
        .map(|(&x, &s)| inv * (x + smoothing * s))
        .collect())
}

/// `eps_hat = -sqrt(1 - abar_t) * score`.
pub fn score_to_eps(score: &[f64], t: usize, schedule: &NoiseSchedule) -> Vec<f64> {
    let coef = -(1.0 - schedule.alpha_bar(t)).sqrt();
    score.iter().map(|&s| coef * s).collect()
}

/// Inverse of [`score_to_eps`]. At `abar_t = 1` the map collapses; the score is
/// reported as zero there (the only eps consistent with that level).
pub fn eps_to_score(eps: &[f64], t: usize, schedule: &NoiseSchedule) -> Vec<f64> {
    let denom = (1.0 - schedule.alpha_bar(t)).sqrt();
    if denom == 0.0 {
        return vec![0.0; eps.len()];
    }
    eps.iter().map(|&e| -e / denom).collect()
}

/// One reverse-process draw `x_{t-1}` from `x_t` and the predicted noise.
///
/// Mean `(x_t - beta_t / sqrt(1 - abar_t) * eps_hat) / sqrt(alpha_t)`, variance
/// `beta_t (1 - abar_{t-1}) / (1 - abar_t)`; the variance vanishes at `t = 1`,
/// making the final step deterministic.
pub fn ancestral_step(
    x_t: &[f64],
    t: usize,
    eps_hat: &[f64],
    schedule: &NoiseSchedule,
    z: &[f64],
) -> Result<Vec<f64>> {
    if t == 0 || t > schedule.steps() {
        return Err(Error::TimestepOutOfRange {
            t,
            lo: 1,
            hi: schedule.steps(),
        });
    }
    if eps_hat.len() != x_t.len() || z.len() != x_t.len() {
        return Err(Error::DimensionMismatch {
            expected: x_t.len(),
            got: eps_hat.len().min(z.len()),
        });
    }
    let beta = schedule.beta(t);
    let alpha = schedule.alpha(t);
    let one_minus_abar = 1.0 - schedule.alpha_bar(t);
    // 1 - abar = 0 forces beta = 0; the eps coefficient is 0/0 and resolves to 0.
    let eps_coef = if one_minus_abar == 0.0 {
        0.0
    } else {
        beta / one_minus_abar.sqrt()
    };
    let mean_scale = 1.0 / alpha.sqrt();
    let var = if one_minus_abar == 0.0 {
        0.0
    } else {
        beta * (1.0 - schedule.alpha_bar(t - 1)) / one_minus_abar
    };
    let std = var.sqrt();
    Ok(x_t
        .iter()
        .zip(eps_hat)
        .zip(z)
        .map(|((&x, &e), &n)| mean_scale * (x - eps_coef * e) + std * n)
        .collect())
}

/// Run the full reverse chain from `x_T ~ N(0, I)` down to a clean sample.
pub fn sample_unconditional(
    provider: &dyn EpsProvider,
    dim: usize,
    schedule: &NoiseSchedule,
    seed: u64,
) -> Result<Vec<f64>> {
    let mut rng = rng_from_seed(seed);
    sample_unconditional_with(provider, dim, schedule, &mut rng)
}

/// As [`sample_unconditional`] but drawing from a caller-owned generator.
pub fn sample_unconditional_with(
    provider: &dyn EpsProvider,
    dim: usize,
    schedule: &NoiseSchedule,
    rng: &mut SeededRng,
) -> Result<Vec<f64>> {
    let mut x = standard_normal_vec(rng, dim);
    for t in (1..=schedule.steps()).rev() {
        let eps_hat = provider.eps(&x, t);
        let z = standard_normal_vec(rng, dim);
        x = ancestral_step(&x, t, &eps_hat, schedule, &z)?;
    }
    Ok(x)
}
