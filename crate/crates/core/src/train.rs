//! Denoising score-matching training loop with an adaptive-moment optimizer.

use rand::Rng;

use crate::error::{Error, Result};
use crate::net::{loss_and_grad, snap, DenoiserParams, Gradients, NetConfig, TrainExample};
use crate::rng::{derive_seed, rng_from_seed, standard_normal_vec};
use crate::schedule::NoiseSchedule;

/// Optimizer and loop hyperparameters; recorded in checkpoints for provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub grad_clip: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 3000,
            batch_size: 128,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            grad_clip: 1.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.steps == 0 || self.batch_size == 0 {
            return Err(Error::InvalidArgument(
                "steps and batch_size must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::InvalidArgument(
                "moment decay rates must lie in [0, 1)".into(),
            ));
        }
        if self.learning_rate < 0.0 || self.grad_clip <= 0.0 {
            return Err(Error::InvalidArgument(
                "learning rate must be >= 0 and grad_clip > 0".into(),
            ));
        }
        Ok(())
    }
}

const DIVERGENCE_LIMIT: f64 = 1e6;
const ADAM_EPS: f64 = 1e-8;

struct AdamState {
    m: Gradients,
    v: Gradients,
    step: usize,
}

impl AdamState {
    fn new(params: &DenoiserParams) -> Self {
        Self {
            m: Gradients::zeros_like(params),
            v: Gradients::zeros_like(params),
            step: 0,
        }
    }

    fn update(&mut self, params: &mut DenoiserParams, grad: &Gradients, cfg: &TrainConfig) {
        self.step += 1;
        let correction1 = 1.0 - cfg.beta1.powi(self.step as i32);
        let correction2 = 1.0 - cfg.beta2.powi(self.step as i32);
        for li in 0..params.layers.len() {
            adam_inner(
                &mut params.layers[li].weights,
                &mut self.m.weights[li],
                &mut self.v.weights[li],
                &grad.weights[li],
                cfg,
                correction1,
                correction2,
            );
            adam_inner(
                &mut params.layers[li].bias,
                &mut self.m.bias[li],
                &mut self.v.bias[li],
                &grad.bias[li],
                cfg,
                correction1,
                correction2,
            );
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn adam_inner(
    w: &mut [f64],
    m: &mut [f64],
    v: &mut [f64],
    g: &[f64],
    cfg: &TrainConfig,
    correction1: f64,
    correction2: f64,
) {
    for i in 0..w.len() {
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
        let m_hat = m[i] / correction1;
        let v_hat = v[i] / correction2;
        // snap keeps parameters f32-representable for exact checkpointing
        w[i] = snap(w[i] - cfg.learning_rate * m_hat / (v_hat.sqrt() + ADAM_EPS));
    }
}

/// Train an eps-prediction network from random initialization.
///
/// Batches draw rows uniformly with replacement and timesteps uniformly in
/// `1..=T`; the loss trace records the batch objective at every step. The run
/// is deterministic for a fixed config.
pub fn train(
    data: &[Vec<f64>],
    schedule: &NoiseSchedule,
    arch: NetConfig,
    cfg: &TrainConfig,
) -> Result<(DenoiserParams, Vec<f64>)> {
    let mut init_rng = rng_from_seed(derive_seed(cfg.seed, INIT_STREAM));
    let params = DenoiserParams::init(arch, &mut init_rng);
    train_from(params, data, schedule, cfg)
}

/// Seed sub-stream for weight initialization, distinct from the batch stream.
pub const INIT_STREAM: u64 = 0x1217;

/// Continue training existing parameters; optimizer moments start fresh.
pub fn train_from(
    mut params: DenoiserParams,
    data: &[Vec<f64>],
    schedule: &NoiseSchedule,
    cfg: &TrainConfig,
) -> Result<(DenoiserParams, Vec<f64>)> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    let d = params.arch.input_dim;
    if let Some(row) = data.iter().find(|r| r.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: row.len(),
        });
    }

    let mut rng = rng_from_seed(cfg.seed);
    let mut adam = AdamState::new(&params);
    let mut trace = Vec::with_capacity(cfg.steps);

    for step in 0..cfg.steps {
        let batch: Vec<TrainExample> = (0..cfg.batch_size)
            .map(|_| {
                let row = rng.random_range(0..data.len());
                let t = rng.random_range(1..=schedule.steps());
                TrainExample {
                    x0: data[row].clone(),
                    t,
                    z: standard_normal_vec(&mut rng, d),
                }
            })
            .collect();
        let (loss, mut grad) = loss_and_grad(&params, schedule, &batch)?;
        if loss > DIVERGENCE_LIMIT {
            return Err(Error::Diverged { step, loss });
        }
        let norm = grad.global_norm();
        if norm > cfg.grad_clip {
            let scale = cfg.grad_clip / norm;
            for arr in grad.weights.iter_mut().chain(grad.bias.iter_mut()) {
                for x in arr.iter_mut() {
                    *x *= scale;
                }
            }
        }
        adam.update(&mut params, &grad, cfg);
        trace.push(loss);
    }
    Ok((params, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::{sample_unconditional, EpsProvider};
    use crate::gmm::GaussianMixture;

    fn quick_schedule() -> NoiseSchedule {
        // Short test schedule with the same terminal noise as the 1000-step default.
        NoiseSchedule::linear(50, 1e-3, 0.25).unwrap()
    }

    fn small_arch(d: usize) -> NetConfig {
        NetConfig {
            input_dim: d,
            hidden_layers: 2,
            hidden_width: 192,
            time_freqs: 8,
        }
    }

    #[test]
    fn zero_learning_rate_leaves_params_unchanged() {
        let schedule = quick_schedule();
        let arch = small_arch(3);
        let cfg = TrainConfig {
            steps: 5,
            batch_size: 4,
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        let data = vec![vec![0.5, -0.5, 0.2]; 8];
        let (trained, _) = train(&data, &schedule, arch, &cfg).unwrap();
        let mut rng = rng_from_seed(derive_seed(cfg.seed, INIT_STREAM));
        let init = DenoiserParams::init(arch, &mut rng);
        assert_eq!(trained, init);
    }

    #[test]
    fn overfits_single_sample() {
        // 2000 steps total, with the learning rate stepped down halfway to
        // get under the constant-rate noise floor
        let schedule = quick_schedule();
        let arch = small_arch(4);
        let stage1 = TrainConfig {
            steps: 1000,
            batch_size: 64,
            seed: 7,
            ..TrainConfig::default()
        };
        let stage2 = TrainConfig {
            steps: 500,
            learning_rate: 2e-4,
            ..stage1.clone()
        };
        let stage3 = TrainConfig {
            steps: 500,
            learning_rate: 5e-5,
            ..stage1.clone()
        };
        let data = vec![vec![0.8, -0.3, 0.1, 0.6]];
        let (params, mut trace) = train(&data, &schedule, arch, &stage1).unwrap();
        let (params, trace2) = train_from(params, &data, &schedule, &stage2).unwrap();
        let (_, trace3) = train_from(params, &data, &schedule, &stage3).unwrap();
        trace.extend(trace2);
        trace.extend(trace3);
        let initial = trace[0];
        let final_loss = *trace.last().unwrap();
        assert!(trace.iter().all(|l| l.is_finite()));
        assert!(
            final_loss < 0.01 * initial,
            "final {final_loss} vs initial {initial}"
        );
    }

    #[test]
    fn trained_point_mass_predicts_injected_noise() {
        let schedule = quick_schedule();
        let arch = small_arch(2);
        let cfg = TrainConfig {
            steps: 2000,
            batch_size: 32,
            seed: 3,
            ..TrainConfig::default()
        };
        let mu = vec![0.4, -0.7];
        let data = vec![mu.clone()];
        let (params, _) = train(&data, &schedule, arch, &cfg).unwrap();
        let estimator = crate::net::StabilizedDenoiser::new(&params, &schedule);
        // eps_hat at (forward_noise(mu, t, z), t) should recover z
        let mut rng = rng_from_seed(11);
        let mut mse = 0.0;
        let n = 200;
        for _ in 0..n {
            let t = rng.random_range(1..=schedule.steps());
            let z = standard_normal_vec(&mut rng, 2);
            let x_t = crate::diffusion::forward_noise(&mu, t, &schedule, &z).unwrap();
            let eps_hat = estimator.eps(&x_t, t);
            mse += eps_hat
                .iter()
                .zip(&z)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                / 2.0;
        }
        mse /= n as f64;
        assert!(mse < 0.05, "overfit mse {mse}");
    }

    #[test]
    fn trained_model_reproduces_two_component_mixture() {
        // moment-matching against the mixture oracle in d = 4
        let schedule = quick_schedule();
        let gmm = GaussianMixture::new(
            vec![0.5, 0.5],
            vec![vec![0.9, 0.9, -0.9, -0.9], vec![-0.9, -0.9, 0.9, 0.9]],
            vec![vec![0.02; 4], vec![0.02; 4]],
        )
        .unwrap();
        let data = gmm.sample(2048, 21);
        let cfg = TrainConfig {
            steps: 1500,
            batch_size: 64,
            seed: 5,
            ..TrainConfig::default()
        };
        let (params, trace) = train(&data, &schedule, small_arch(4), &cfg).unwrap();
        assert!(*trace.last().unwrap() < trace[0]);
        let estimator = crate::net::StabilizedDenoiser::new(&params, &schedule);

        let n = 2000;
        let mut count0 = 0usize;
        let mut mean0 = vec![0.0; 4];
        let mut mean1 = vec![0.0; 4];
        for i in 0..n {
            let x = sample_unconditional(&estimator, 4, &schedule, 400 + i as u64).unwrap();
            // assign by sign pattern of first coordinate vs component means
            if x[0] > 0.0 {
                count0 += 1;
                for k in 0..4 {
                    mean0[k] += x[k];
                }
            } else {
                for k in 0..4 {
                    mean1[k] += x[k];
                }
            }
        }
        let w0 = count0 as f64 / n as f64;
        assert!((w0 - 0.5).abs() < 0.1, "weight {w0}");
        for k in 0..4 {
            mean0[k] /= count0 as f64;
            mean1[k] /= (n - count0) as f64;
        }
        let target0 = [0.9, 0.9, -0.9, -0.9];
        for k in 0..4 {
            assert!((mean0[k] - target0[k]).abs() < 0.2, "mean0[{k}] = {}", mean0[k]);
            assert!((mean1[k] + target0[k]).abs() < 0.2, "mean1[{k}] = {}", mean1[k]);
        }
    }

    #[test]
    fn rejects_bad_configs_and_data() {
        let schedule = quick_schedule();
        let arch = small_arch(2);
        let bad = TrainConfig {
            steps: 0,
            ..TrainConfig::default()
        };
        assert!(train(&[vec![0.0, 0.0]], &schedule, arch, &bad).is_err());
        let cfg = TrainConfig {
            steps: 1,
            batch_size: 2,
            ..TrainConfig::default()
        };
        assert!(train(&[], &schedule, arch, &cfg).is_err());
        assert!(train(&[vec![0.0]], &schedule, arch, &cfg).is_err());
    }
}
