use std::time::Instant;
use mmdiff_core::net::NetConfig;
use mmdiff_core::pipeline::*;
use mmdiff_core::schedule::NoiseSchedule;
use mmdiff_core::train::{train, TrainConfig};

fn main() {
    let t0 = Instant::now();
    let cfg = GrainDataConfig::default(); // 16x16, 4 grains, 4096 train
    let ds = generate_grain_dataset(&cfg).unwrap();
    println!("dataset: {:?}", t0.elapsed());

    let schedule = NoiseSchedule::linear(100, 1e-3, 0.2).unwrap();
    let joint_arch = NetConfig { input_dim: ds.layout.joint_len(), hidden_layers: 3, hidden_width: 256, time_freqs: 16 };
    let tc = TrainConfig { steps: 2000, batch_size: 128, seed: 11, ..TrainConfig::default() };

    let t1 = Instant::now();
    let rows = ds.joint_rows();
    let (joint, trace) = train(&rows, &schedule, joint_arch, &tc).unwrap();
    println!("joint train {} steps: {:?}  loss {:.4} -> {:.4}", tc.steps, t1.elapsed(), trace[0], trace.last().unwrap());

    let t2 = Instant::now();
    let forward = ds.normalized_forward();
    let errs = consistency_errors(&ds, &joint, &schedule, &forward, 40, 999).unwrap();
    println!("consistency median over 40: {:.4}  ({:?})", median(&errs), t2.elapsed());

    // mini paired sweep at 2%
    let t3 = Instant::now();
    let main_arch = NetConfig { input_dim: ds.layout.main_len(), hidden_layers: 3, hidden_width: 256, time_freqs: 16 };
    let (uni, utrace) = train(&ds.main_rows(), &schedule, main_arch, &tc).unwrap();
    println!("uni train: {:?} loss {:.4} -> {:.4}", t3.elapsed(), utrace[0], utrace.last().unwrap());

    let t4 = Instant::now();
    let trial_cfg = TrialConfig { particles: 64, n_out: 2, ..TrialConfig::default() };
    let rows = paired_sweep(&ds, &joint, &uni, &schedule, &[0.02], &[0.0], 6, &trial_cfg, 2222).unwrap();
    let mut m_sum = 0.0; let mut u_sum = 0.0; let mut n = 0.0;
    for r in &rows {
        if r.model == "multimodal" { m_sum += r.error_deg; n += 1.0; } else { u_sum += r.error_deg; }
        println!("  {} f={} trial={} err={:.2}", r.model, r.fraction, r.trial, r.error_deg);
    }
    println!("sweep at 2%: multi {:.2} vs uni {:.2} deg ({:?})", m_sum / n, u_sum / n, t4.elapsed());
}
