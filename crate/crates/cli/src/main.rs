//! Command-line harness wiring dataset generation, training, reconstruction
//! and the experiment sweeps into config-driven, reproducible runs.

mod config;
mod dataset;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mmdiff_core::checkpoint::{load_checkpoint, save_checkpoint};
use mmdiff_core::diffusion::sample_unconditional;
use mmdiff_core::field::{read_joint_fields, write_joint_fields, JointField};
use mmdiff_core::metrics::{mean_field_disorientation, relative_l2, SymmetryGroup};
use mmdiff_core::multimodal::consistency_check;
use mmdiff_core::net::{DenoiserParams, StabilizedDenoiser};
use mmdiff_core::pipeline::{
    consistency_errors, generate_grain_dataset, median, paired_sweep, run_trial,
    uncertainty_at_fraction, GrainDataset, ReconMethod, TrialConfig,
};
use mmdiff_core::rng::derive_seed;
use mmdiff_core::train::train;

use config::ExperimentConfig;
use dataset::{dataset_dir, load_dataset, save_dataset};

#[derive(Debug)]
pub enum CliError {
    /// Bad configuration or flags; exit code 1.
    Config(String),
    /// Runtime failure; exit code 2.
    Runtime(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "config error: {msg}"),
            CliError::Runtime(msg) => write!(f, "runtime error: {msg}"),
        }
    }
}

impl From<mmdiff_core::Error> for CliError {
    fn from(e: mmdiff_core::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

#[derive(Parser)]
#[command(
    name = "mmdiff",
    about = "Multimodal diffusion priors and SMC inpainting on a synthetic microstructure benchmark",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Path to the experiment config JSON.
    #[arg(long, default_value = "config.json")]
    config: PathBuf,
    /// Override the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the command's primary seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic dataset (manifest + field containers).
    GenData {
        #[command(flatten)]
        common: Common,
    },
    /// Train a denoiser on the generated dataset.
    Train {
        #[command(flatten)]
        common: Common,
        /// Train on the joint (main + aux) channels.
        #[arg(long, conflicts_with = "unimodal")]
        multimodal: bool,
        /// Train on the main channels only.
        #[arg(long)]
        unimodal: bool,
    },
    /// Draw unconditional samples from a checkpoint.
    Sample {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(short = 'n', long, default_value_t = 16)]
        count: usize,
    },
    /// Reconstruct one validation field from sparse observations.
    Reconstruct {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Fraction of observed main-modality pixels.
        #[arg(long)]
        fraction: f64,
        /// Noise level on the auxiliary observations.
        #[arg(long, default_value_t = 0.0)]
        sigma: f64,
        /// Use the main-only model and mask-only observations.
        #[arg(long)]
        unimodal: bool,
        /// Override the solver's particle count.
        #[arg(long)]
        particles: Option<usize>,
    },
    /// Paired unimodal/multimodal error curves over fractions and sigmas.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        multimodal_checkpoint: PathBuf,
        #[arg(long)]
        unimodal_checkpoint: PathBuf,
        #[arg(long)]
        particles: Option<usize>,
    },
    /// Consistency of generated aux blocks against the forward model.
    Consistency {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(short = 'n', long, default_value_t = 100)]
        count: usize,
    },
    /// Reconstruction-error dispersion across repeated posterior samples.
    Uncertainty {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Posterior samples per observation; must be at least 2.
        #[arg(long, default_value_t = 20)]
        n_out: usize,
        #[arg(long)]
        particles: Option<usize>,
    },
    /// Metrics between a reconstruction container and a truth container.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        recon: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Cyclic symmetry order for the disorientation metric.
        #[arg(long, default_value_t = 1)]
        group_order: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ CliError::Config(_)) => {
            eprintln!("{e}");
            ExitCode::from(1)
        }
        Err(e @ CliError::Runtime(_)) => {
            eprintln!("{e}");
            ExitCode::from(2)
        }
    }
}

struct Ctx {
    config: ExperimentConfig,
    out_dir: PathBuf,
}

impl Ctx {
    fn new(common: &Common) -> Result<Self, CliError> {
        let mut config = ExperimentConfig::load(&common.config)?;
        if let Some(out) = &common.out {
            config.out_dir = out.clone();
        }
        let out_dir = config.out_dir.clone();
        std::fs::create_dir_all(&out_dir)?;
        // echo the resolved config for auditability
        let text = serde_json::to_string_pretty(&config)
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        std::fs::write(out_dir.join("resolved_config.json"), text)?;
        Ok(Self { config, out_dir })
    }

    fn dataset(&self) -> Result<GrainDataset, CliError> {
        load_dataset(&dataset_dir(&self.out_dir))
    }

    fn metadata_line(&self, seed: u64) -> String {
        format!("# config={} seed={}", self.config.hash(), seed)
    }

    fn trial_config(&self, particles: Option<usize>, n_out: usize) -> TrialConfig {
        TrialConfig {
            particles: particles.unwrap_or(self.config.solver.particles),
            n_out,
            noise_floor: self.config.solver.noise_floor,
        }
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::GenData { common } => {
            let ctx = Ctx::new(&common)?;
            let mut data_cfg = ctx.config.data.clone();
            if let Some(seed) = common.seed {
                data_cfg.train_seed = seed;
                data_cfg.val_seed = derive_seed(seed, 0x5eed);
            }
            let dataset = generate_grain_dataset(&data_cfg)?;
            let dir = dataset_dir(&ctx.out_dir);
            save_dataset(&dataset, &dir)?;
            println!(
                "wrote {} train + {} validation fields to {}",
                dataset.train.len(),
                dataset.val.len(),
                dir.display()
            );
            Ok(())
        }
        Command::Train {
            common,
            multimodal,
            unimodal,
        } => {
            if multimodal == unimodal {
                return Err(CliError::Config(
                    "pass exactly one of --multimodal or --unimodal".into(),
                ));
            }
            let ctx = Ctx::new(&common)?;
            let dataset = ctx.dataset()?;
            let schedule = ctx.config.noise_schedule()?;
            let mut train_cfg = ctx.config.train_config();
            if let Some(seed) = common.seed {
                train_cfg.seed = seed;
            }
            let (mode, rows, dim) = if multimodal {
                (
                    "multimodal",
                    dataset.joint_rows(),
                    dataset.layout.joint_len(),
                )
            } else {
                ("unimodal", dataset.main_rows(), dataset.layout.main_len())
            };
            let arch = ctx.config.net_config(dim);
            let (params, trace) = train(&rows, &schedule, arch, &train_cfg)?;
            let ckpt_path = ctx.out_dir.join(format!("{mode}.ckpt"));
            save_checkpoint(&params, &train_cfg, &ckpt_path)?;
            let mut csv = String::new();
            csv.push_str(&ctx.metadata_line(train_cfg.seed));
            csv.push_str("\nstep,loss\n");
            for (step, loss) in trace.iter().enumerate() {
                csv.push_str(&format!("{step},{loss}\n"));
            }
            let loss_path = ctx.out_dir.join(format!("loss_{mode}.csv"));
            std::fs::write(&loss_path, csv)?;
            println!(
                "trained {mode} model ({} params): {} and {}",
                params.param_count(),
                ckpt_path.display(),
                loss_path.display()
            );
            Ok(())
        }
        Command::Sample {
            common,
            checkpoint,
            count,
        } => {
            let ctx = Ctx::new(&common)?;
            let dataset = ctx.dataset()?;
            let schedule = ctx.config.noise_schedule()?;
            let (params, _) = load_checkpoint(&checkpoint)?;
            expect_dim(&params, dataset.layout.joint_len(), "multimodal")?;
            let seed = common.seed.unwrap_or(4242);
            let estimator = StabilizedDenoiser::new(&params, &schedule);
            let samples: Vec<JointField> = (0..count)
                .map(|i| {
                    let flat = sample_unconditional(
                        &estimator,
                        dataset.layout.joint_len(),
                        &schedule,
                        derive_seed(seed, i as u64),
                    )?;
                    JointField::from_flat(
                        &dataset.layout,
                        &flat,
                        dataset.train[0].channel_names.clone(),
                    )
                })
                .collect::<mmdiff_core::Result<_>>()?;
            let path = ctx.out_dir.join("samples.jfld");
            write_joint_fields(&path, &samples)?;
            println!("wrote {count} samples to {}", path.display());
            Ok(())
        }
        Command::Reconstruct {
            common,
            checkpoint,
            fraction,
            sigma,
            unimodal,
            particles,
        } => {
            if !(0.0..=1.0).contains(&fraction) {
                return Err(CliError::Config(format!(
                    "fraction {fraction} outside [0, 1]"
                )));
            }
            if sigma < 0.0 {
                return Err(CliError::Config(format!("sigma {sigma} must be >= 0")));
            }
            let ctx = Ctx::new(&common)?;
            let dataset = ctx.dataset()?;
            let schedule = ctx.config.noise_schedule()?;
            let (params, _) = load_checkpoint(&checkpoint)?;
            let method = if unimodal {
                expect_dim(&params, dataset.layout.main_len(), "unimodal")?;
                ReconMethod::UnimodalSmc
            } else {
                expect_dim(&params, dataset.layout.joint_len(), "multimodal")?;
                ReconMethod::MultimodalSmc
            };
            let seed = common.seed.unwrap_or(1);
            let trial_cfg = ctx.trial_config(particles, ctx.config.solver.n_out);
            let outcome = run_trial(
                &dataset, &params, &schedule, method, fraction, sigma, &trial_cfg, seed,
            )?;
            let mode = if unimodal { "unimodal" } else { "multimodal" };
            let mut csv = String::new();
            csv.push_str(&ctx.metadata_line(seed));
            csv.push_str("\nexperiment,fraction,sigma,metric,value\n");
            csv.push_str(&format!(
                "reconstruct-{mode},{fraction},{sigma},mean_disorientation_deg,{}\n",
                outcome.mean_error_deg()
            ));
            for (i, e) in outcome.sample_errors_deg.iter().enumerate() {
                csv.push_str(&format!(
                    "reconstruct-{mode},{fraction},{sigma},sample{i}_disorientation_deg,{e}\n"
                ));
            }
            std::fs::write(ctx.out_dir.join("reconstruct_metrics.csv"), csv)?;
            println!(
                "reconstructed validation field {} at fraction {fraction}: mean disorientation {:.3} deg",
                outcome.field_index,
                outcome.mean_error_deg()
            );
            Ok(())
        }
        Command::Sweep {
            common,
            multimodal_checkpoint,
            unimodal_checkpoint,
            particles,
        } => {
            let ctx = Ctx::new(&common)?;
            let dataset = ctx.dataset()?;
            let schedule = ctx.config.noise_schedule()?;
            let (joint, _) = load_checkpoint(&multimodal_checkpoint)?;
            let (main, _) = load_checkpoint(&unimodal_checkpoint)?;
            expect_dim(&joint, dataset.layout.joint_len(), "multimodal")?;
            expect_dim(&main, dataset.layout.main_len(), "unimodal")?;
            let seed = common.seed.unwrap_or(ctx.config.sweep.seed);
            let trial_cfg = ctx.trial_config(particles, ctx.config.solver.n_out);
            let rows = paired_sweep(
                &dataset,
                &joint,
                &main,
                &schedule,
                &ctx.config.sweep.fractions,
                &ctx.config.sweep.sigmas,
                ctx.config.sweep.trials,
                &trial_cfg,
                seed,
            )?;
            let mut trials_csv = String::new();
            trials_csv.push_str(&ctx.metadata_line(seed));
            trials_csv.push_str("\nmodel,fraction,sigma,trial,disorientation_deg\n");
            for r in &rows {
                trials_csv.push_str(&format!(
                    "{},{},{},{},{}\n",
                    r.model, r.fraction, r.sigma, r.trial, r.error_deg
                ));
            }
            std::fs::write(ctx.out_dir.join("sweep_trials.csv"), trials_csv)?;

            // aggregated curve: mean +- std per (model, fraction, sigma)
            let mut curve_csv = String::new();
            curve_csv.push_str(&ctx.metadata_line(seed));
            curve_csv.push_str(
                "\nmodel,fraction,sigma,mean_disorientation_deg,std_disorientation_deg,trials\n",
            );
            for model in ["multimodal", "unimodal"] {
                for &fraction in &ctx.config.sweep.fractions {
                    for &sigma in &ctx.config.sweep.sigmas {
                        let errs: Vec<f64> = rows
                            .iter()
                            .filter(|r| {
                                r.model == model && r.fraction == fraction && r.sigma == sigma
                            })
                            .map(|r| r.error_deg)
                            .collect();
                        let n = errs.len() as f64;
                        let mean = errs.iter().sum::<f64>() / n;
                        let std = (errs.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>()
                            / (n - 1.0).max(1.0))
                        .sqrt();
                        curve_csv.push_str(&format!(
                            "{model},{fraction},{sigma},{mean},{std},{}\n",
                            errs.len()
                        ));
                    }
                }
            }
            std::fs::write(ctx.out_dir.join("sweep_curve.csv"), curve_csv)?;
            println!(
                "sweep complete: {} trial rows over {} fractions x {} sigmas",
                rows.len(),
                ctx.config.sweep.fractions.len(),
                ctx.config.sweep.sigmas.len()
            );
            Ok(())
        }
        Command::Consistency {
            common,
            checkpoint,
            count,
        } => {
            let ctx = Ctx::new(&common)?;
            let dataset = ctx.dataset()?;
            let schedule = ctx.config.noise_schedule()?;
            let (params, _) = load_checkpoint(&checkpoint)?;
            expect_dim(&params, dataset.layout.joint_len(), "multimodal")?;
            let seed = common.seed.unwrap_or(31337);
            let forward = dataset.normalized_forward();
            let errs = if count == 0 {
                Vec::new()
            } else {
                consistency_errors(&dataset, &params, &schedule, &forward, count, seed)?
            };
            let mut csv = String::new();
            csv.push_str(&ctx.metadata_line(seed));
            csv.push_str("\nsample,relative_l2\n");
            for (i, e) in errs.iter().enumerate() {
                csv.push_str(&format!("{i},{e}\n"));
            }
            std::fs::write(ctx.out_dir.join("consistency.csv"), csv)?;
            if errs.is_empty() {
                println!("wrote empty consistency table");
            } else {
                println!(
                    "consistency over {count} samples: median {:.4}",
                    median(&errs)
                );
            }
            Ok(())
        }
        Command::Uncertainty {
            common,
            checkpoint,
            n_out,
            particles,
        } => {
            if n_out < 2 {
                return Err(CliError::Config(
                    "uncertainty needs at least 2 posterior samples".into(),
                ));
            }
            let ctx = Ctx::new(&common)?;
            let dataset = ctx.dataset()?;
            let schedule = ctx.config.noise_schedule()?;
            let (params, _) = load_checkpoint(&checkpoint)?;
            expect_dim(&params, dataset.layout.joint_len(), "multimodal")?;
            let seed = common.seed.unwrap_or(515);
            let particles = particles.unwrap_or(ctx.config.solver.particles.max(n_out));
            let mut csv = String::new();
            csv.push_str(&ctx.metadata_line(seed));
            csv.push_str("\nfraction,mean_disorientation_deg,std_disorientation_deg,samples\n");
            for &fraction in &ctx.config.sweep.fractions {
                let (mean, std) = uncertainty_at_fraction(
                    &dataset, &params, &schedule, fraction, n_out, particles, seed,
                )?;
                csv.push_str(&format!("{fraction},{mean},{std},{n_out}\n"));
            }
            std::fs::write(ctx.out_dir.join("uncertainty.csv"), csv)?;
            println!(
                "wrote uncertainty table over {} fractions",
                ctx.config.sweep.fractions.len()
            );
            Ok(())
        }
        Command::Eval {
            common,
            recon,
            truth,
            group_order,
        } => {
            let ctx = Ctx::new(&common)?;
            let dataset = ctx.dataset()?;
            let group = SymmetryGroup::new(group_order)?;
            let recon_fields = read_joint_fields(&recon)?;
            let truth_fields = read_joint_fields(&truth)?;
            if recon_fields.is_empty() || truth_fields.len() != 1 {
                return Err(CliError::Config(
                    "eval expects >= 1 reconstruction and exactly 1 truth field".into(),
                ));
            }
            let forward = dataset.normalized_forward();
            let truth_theta = dataset.decode_theta(&truth_fields[0].main)?;
            let mut csv = String::new();
            csv.push_str(&ctx.metadata_line(0));
            csv.push_str("\nexperiment,fraction,sigma,metric,value\n");
            for (i, jf) in recon_fields.iter().enumerate() {
                let theta = dataset.decode_theta(&jf.main)?;
                let dis = mean_field_disorientation(&theta, &truth_theta, group)?;
                csv.push_str(&format!("eval,,,sample{i}_disorientation_deg,{dis}\n"));
                let rel = relative_l2(&jf.aux.data, &truth_fields[0].aux.data)?;
                csv.push_str(&format!("eval,,,sample{i}_aux_relative_l2,{rel}\n"));
                let cons = consistency_check(&forward, jf)?;
                csv.push_str(&format!("eval,,,sample{i}_consistency_rel_l2,{cons}\n"));
            }
            std::fs::write(ctx.out_dir.join("eval.csv"), csv)?;
            println!("wrote eval metrics for {} samples", recon_fields.len());
            Ok(())
        }
    }
}

fn expect_dim(params: &DenoiserParams, dim: usize, mode: &str) -> Result<(), CliError> {
    if params.arch.input_dim != dim {
        return Err(CliError::Config(format!(
            "checkpoint input dim {} does not match the {mode} problem dim {dim}",
            params.arch.input_dim
        )));
    }
    Ok(())
}
