//! Shared fixtures for the criterion benchmarks.

use mmdiff_core::gmm::GaussianMixture;
use mmdiff_core::net::{DenoiserParams, NetConfig};
use mmdiff_core::rng::rng_from_seed;
use mmdiff_core::schedule::NoiseSchedule;

pub fn bench_schedule() -> NoiseSchedule {
    NoiseSchedule::linear(100, 1e-3, 0.2).expect("valid schedule")
}

pub fn bench_mixture(dim: usize) -> GaussianMixture {
    GaussianMixture::new(
        vec![0.5, 0.5],
        vec![vec![0.8; dim], vec![-0.8; dim]],
        vec![vec![0.3; dim], vec![0.3; dim]],
    )
    .expect("valid mixture")
}

pub fn bench_denoiser(dim: usize) -> DenoiserParams {
    let arch = NetConfig {
        input_dim: dim,
        hidden_layers: 3,
        hidden_width: 256,
        time_freqs: 16,
    };
    DenoiserParams::init(arch, &mut rng_from_seed(7))
}
