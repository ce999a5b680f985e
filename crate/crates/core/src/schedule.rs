//! Noise schedules for the forward and reverse diffusion processes.

use crate::error::{Error, Result};

/// The per-step variance schedule and its derived quantities.
///
/// Timesteps are 1-based to match the process definition: `beta(t)` and
/// `alpha(t)` are defined for `t` in `1..=steps`, while `alpha_bar(t)` is the
/// running product and extends to `t = 0` with `alpha_bar(0) = 1` (clean data).
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    betas: Vec<f64>,
    alphas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

impl NoiseSchedule {
    /// Linear interpolation of beta from `beta_start` to `beta_end` inclusive.
    pub fn linear(steps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if steps == 0 {
            return Err(Error::InvalidSchedule("step count must be >= 1".into()));
        }
        if !beta_start.is_finite() || !beta_end.is_finite() {
            return Err(Error::InvalidSchedule("betas must be finite".into()));
        }
        if beta_start < 0.0 {
            return Err(Error::InvalidSchedule(format!(
                "beta_start {beta_start} < 0"
            )));
        }
        if beta_end >= 1.0 {
            return Err(Error::InvalidSchedule(format!("beta_end {beta_end} >= 1")));
        }
        if beta_start > beta_end {
            return Err(Error::InvalidSchedule(format!(
                "beta_start {beta_start} > beta_end {beta_end}"
            )));
        }
        let betas: Vec<f64> = if steps == 1 {
            vec![beta_start]
        } else {
            (0..steps)
                .map(|i| {
                    let frac = i as f64 / (steps - 1) as f64;
                    beta_start + frac * (beta_end - beta_start)
                })
                .collect()
        };
        Ok(Self::from_betas(betas))
    }

    /// Build from an explicit beta sequence; alphas and running products derived.
    pub fn from_betas(betas: Vec<f64>) -> Self {
        let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bars = Vec::with_capacity(alphas.len());
        let mut product = 1.0;
        for a in &alphas {
            product *= a;
            alpha_bars.push(product);
        }
        Self {
            betas,
            alphas,
            alpha_bars,
        }
    }

    /// Number of diffusion steps T.
    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    /// beta_t for t in 1..=T.
    pub fn beta(&self, t: usize) -> f64 {
        assert!(t >= 1 && t <= self.steps(), "beta(t): t={t} out of range");
        self.betas[t - 1]
    }

    /// alpha_t = 1 - beta_t for t in 1..=T.
    pub fn alpha(&self, t: usize) -> f64 {
        assert!(t >= 1 && t <= self.steps(), "alpha(t): t={t} out of range");
        self.alphas[t - 1]
    }

    /// Running product of alphas up to t; `alpha_bar(0) = 1`.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        assert!(t <= self.steps(), "alpha_bar(t): t={t} out of range");
        if t == 0 {
            1.0
        } else {
            self.alpha_bars[t - 1]
        }
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bars
    }
}
