use std::time::Instant;
use mmdiff_core::diffusion::{forward_noise, ancestral_step, EpsProvider};
use mmdiff_core::field::JointField;
use mmdiff_core::net::{DenoiserParams, NetConfig, StabilizedDenoiser};
use mmdiff_core::pipeline::*;
use mmdiff_core::rng::{rng_from_seed, standard_normal_vec};
use mmdiff_core::schedule::NoiseSchedule;
use mmdiff_core::train::{train_from, TrainConfig};
use mmdiff_core::multimodal::consistency_check;

fn partial_reverse(ds: &GrainDataset, params: &DenoiserParams, s: &NoiseSchedule, t_start: usize) -> f64 {
    let est = StabilizedDenoiser::new(params, s);
    let d = ds.layout.joint_len();
    let x0 = ds.val[0].flatten();
    let mut rng = rng_from_seed(77);
    let z = standard_normal_vec(&mut rng, d);
    let mut x = forward_noise(&x0, t_start, s, &z).unwrap();
    for t in (1..=t_start).rev() {
        let eps = est.eps(&x, t);
        let zz = standard_normal_vec(&mut rng, d);
        x = ancestral_step(&x, t, &eps, s, &zz).unwrap();
    }
    let jf = JointField::from_flat(&ds.layout, &x, ds.train[0].channel_names.clone()).unwrap();
    consistency_check(&ds.normalized_forward(), &jf).unwrap()
}

fn main() {
    let s = NoiseSchedule::linear(100, 1e-3, 0.2).unwrap();
    let cfg = GrainDataConfig { h: 8, w: 8, grains: 3, train_count: 4096, val_count: 64, train_seed: 101, val_seed: 900101, aux_variant: AuxVariant::Minimal };
    let ds = generate_grain_dataset(&cfg).unwrap();
    let rows = ds.joint_rows();
    let layout = ds.layout;
    let groups: Vec<Vec<usize>> = (0..layout.pixels()).map(|p| {
        let mut g: Vec<usize> = (0..layout.c_main).map(|c| p*layout.c_main + c).collect();
        g.extend((0..layout.c_aux).map(|c| layout.main_len() + p*layout.c_aux + c));
        g
    }).collect();
    let arch = NetConfig { input_dim: layout.joint_len(), hidden_layers: 3, hidden_width: 512, time_freqs: 16 };
    let mut rng = rng_from_seed(777);
    let mut params = DenoiserParams::init_localized(arch, &groups, &mut rng);
    let stages = [(4000usize, 1e-3f64), (4000, 1e-3), (4000, 5e-4), (4000, 5e-4), (4000, 2e-4)];
    let mut total = 0;
    let t0 = Instant::now();
    let forward = ds.normalized_forward();
    for (i, &(steps, lr)) in stages.iter().enumerate() {
        let tc = TrainConfig { steps, batch_size: 32, learning_rate: lr, seed: 11 + i as u64, ..TrainConfig::default() };
        let (p, trace) = train_from(params, &rows, &s, &tc).unwrap();
        total += steps;
        let tail = trace[trace.len()-100..].iter().sum::<f64>() / 100.0;
        let cons = median(&consistency_errors(&ds, &p, &s, &forward, 12, 999).unwrap());
        let pr30 = partial_reverse(&ds, &p, &s, 30);
        println!("loc-grain total={total} lr={lr}: loss {tail:.4} consistency {cons:.3} partial30 {pr30:.3} ({:?})", t0.elapsed());
        params = p;
    }
}
