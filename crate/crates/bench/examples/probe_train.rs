use std::time::Instant;
use mmdiff_core::net::NetConfig;
use mmdiff_core::pipeline::*;
use mmdiff_core::schedule::NoiseSchedule;
use mmdiff_core::train::{train, train_from, TrainConfig};

fn eval_consistency(ds: &GrainDataset, params: &mmdiff_core::net::DenoiserParams, s: &NoiseSchedule, n: usize) -> f64 {
    let forward = ds.normalized_forward();
    let errs = consistency_errors(ds, params, s, &forward, n, 999).unwrap();
    median(&errs)
}

fn staged(label: &str, ds: &GrainDataset, s: &NoiseSchedule, width: usize, depth: usize, batch: usize, stages: &[(usize, f64)]) {
    let arch = NetConfig { input_dim: ds.layout.joint_len(), hidden_layers: depth, hidden_width: width, time_freqs: 16 };
    let rows = ds.joint_rows();
    let mut params: Option<mmdiff_core::net::DenoiserParams> = None;
    let mut total = 0usize;
    let t0 = Instant::now();
    for (i, &(steps, lr)) in stages.iter().enumerate() {
        let tc = TrainConfig { steps, batch_size: batch, learning_rate: lr, seed: 11 + i as u64, ..TrainConfig::default() };
        let (p, trace) = match params.take() {
            None => train(&rows, s, arch, &tc).unwrap(),
            Some(p) => train_from(p, &rows, s, &tc).unwrap(),
        };
        total += steps;
        let late = trace[trace.len().saturating_sub(100)..].iter().sum::<f64>() / 100f64.min(trace.len() as f64);
        let cons = eval_consistency(ds, &p, s, 12);
        println!("[{label}] w={width} d={depth} b={batch} total={total} lr={lr}: loss_tail {late:.4}, consistency {cons:.3}, elapsed {:?}", t0.elapsed());
        params = Some(p);
    }
}

fn main() {
    let s = NoiseSchedule::linear(100, 1e-3, 0.2).unwrap();
    // learnability trajectory at 8x8 first
    let small_cfg = GrainDataConfig { h: 8, w: 8, grains: 3, train_count: 4096, val_count: 64, train_seed: 101, val_seed: 900101, aux_variant: AuxVariant::Minimal };
    let small = generate_grain_dataset(&small_cfg).unwrap();
    staged("8x8", &small, &s, 256, 3, 32, &[(4000, 1e-3), (4000, 1e-3), (4000, 5e-4), (4000, 2e-4)]);

    let cfg = GrainDataConfig::default();
    let ds = generate_grain_dataset(&cfg).unwrap();
    staged("16x16", &ds, &s, 384, 3, 32, &[(4000, 1e-3), (4000, 1e-3), (4000, 5e-4), (4000, 2e-4), (4000, 1e-4)]);
}
