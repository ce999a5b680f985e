use mmdiff_core::net::{DenoiserParams, NetConfig, StabilizedDenoiser};
use mmdiff_core::pipeline::median;
use mmdiff_core::rng::{derive_seed, rng_from_seed};
use mmdiff_core::schedule::NoiseSchedule;
use mmdiff_core::train::{train, train_from, TrainConfig};
use mmdiff_core::diffusion::sample_unconditional;
use rand::Rng;
use std::f64::consts::TAU;

fn main() {
    let s = NoiseSchedule::linear(100, 1e-3, 0.2).unwrap();
    let mut rng = rng_from_seed(900);
    let rows: Vec<Vec<f64>> = (0..4096).map(|_| {
        let t = rng.random::<f64>() * TAU;
        vec![t.cos(), t.sin(), (2.0*t).cos(), (2.0*t).sin()]
    }).collect();
    let d = 4;
    for width in [16usize, 32, 64] {
        let arch = NetConfig { input_dim: d, hidden_layers: 2, hidden_width: width, time_freqs: 16 };
        let mut params: Option<DenoiserParams> = None;
        let mut total = 0;
        for (i, &(steps, lr)) in [(3000usize, 1e-3f64), (3000, 5e-4)].iter().enumerate() {
            let tc = TrainConfig { steps, batch_size: 64, learning_rate: lr, seed: 21 + i as u64, ..TrainConfig::default() };
            let (p, trace) = match params.take() {
                None => train(&rows, &s, arch, &tc).unwrap(),
                Some(p) => train_from(p, &rows, &s, &tc).unwrap(),
            };
            total += steps;
            let est = StabilizedDenoiser::new(&p, &s);
            let mut cons = Vec::new();
            for k in 0..48u64 {
                let x = sample_unconditional(&est, d, &s, derive_seed(7_000, k)).unwrap();
                let theta = x[1].atan2(x[0]);
                let pred = [ (2.0*theta).cos(), (2.0*theta).sin() ];
                let num = ((x[2]-pred[0]).powi(2) + (x[3]-pred[1]).powi(2)).sqrt();
                let den = (x[2]*x[2]+x[3]*x[3]).sqrt().max(1e-9);
                cons.push(num/den);
            }
            println!("w={width} total={total}: loss {:.4} consistency {:.3}",
                trace[trace.len()-50..].iter().sum::<f64>()/50.0, median(&cons));
            params = Some(p);
        }
    }
}
