use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use mmdiff_bench::{bench_denoiser, bench_mixture, bench_schedule};
use mmdiff_core::diffusion::{ancestral_step, EpsProvider};
use mmdiff_core::rng::{rng_from_seed, standard_normal_vec};
use mmdiff_core::solver::{ess, systematic_resample_indices};

fn bench_gmm_score(c: &mut Criterion) {
    let schedule = bench_schedule();
    let gmm = bench_mixture(16);
    let mut rng = rng_from_seed(1);
    let x = standard_normal_vec(&mut rng, 16);
    c.bench_function("gmm_score_d16", |b| {
        b.iter(|| gmm.score_at(black_box(&x), black_box(40), &schedule))
    });
}

fn bench_ancestral_step(c: &mut Criterion) {
    let schedule = bench_schedule();
    let mut rng = rng_from_seed(2);
    let x = standard_normal_vec(&mut rng, 1024);
    let eps = standard_normal_vec(&mut rng, 1024);
    let z = standard_normal_vec(&mut rng, 1024);
    c.bench_function("ancestral_step_d1024", |b| {
        b.iter(|| ancestral_step(black_box(&x), 50, black_box(&eps), &schedule, &z).unwrap())
    });
}

fn bench_denoiser_batch(c: &mut Criterion) {
    let params = bench_denoiser(1024);
    let mut rng = rng_from_seed(3);
    let batch = standard_normal_vec(&mut rng, 64 * 1024);
    c.bench_function("denoiser_forward_64x1024", |b| {
        b.iter(|| params.eps_batch(black_box(&batch), 64, black_box(50)))
    });
}

fn bench_resampling(c: &mut Criterion) {
    let mut rng = rng_from_seed(4);
    let raw = standard_normal_vec(&mut rng, 1024);
    let lw: Vec<f64> = raw.iter().map(|v| v * 2.0).collect();
    let total: f64 = lw.iter().map(|v| v.exp()).sum();
    let weights: Vec<f64> = lw.iter().map(|v| v.exp() / total).collect();
    c.bench_function("systematic_resample_1024", |b| {
        b.iter(|| systematic_resample_indices(black_box(&weights), 0.37))
    });
    c.bench_function("ess_1024", |b| b.iter(|| ess(black_box(&lw)).unwrap()));
}

criterion_group!(
    benches,
    bench_gmm_score,
    bench_ancestral_step,
    bench_denoiser_batch,
    bench_resampling
);
criterion_main!(benches);
