//! End-to-end experiment wiring over the synthetic grain benchmark: dataset
//! assembly with preprocessing, training-row extraction, reconstruction
//! trials, paired sweeps, consistency and uncertainty evaluations.
//!
//! Everything here is deterministic in its seeds; trials run in parallel and
//! merge positionally, so results do not depend on thread scheduling.

use rayon::prelude::*;

use crate::diffusion::sample_unconditional;
use crate::error::{Error, Result};
use crate::field::{Field, JointField, JointLayout};
use crate::metrics::{ensemble_error_stats, mean_field_disorientation, SymmetryGroup};
use crate::multimodal::{
    build_joint_dataset, consistency_check, observe_main, reconstruct, BlackBoxForward,
    ObservationSpec,
};
use crate::net::{DenoiserParams, StabilizedDenoiser};
use crate::normalize::ChannelNormalizer;
use crate::pca::{pca_apply_field, pca_fit, PcaModel};
use crate::rng::{derive_seed, rng_from_seed, standard_normal_vec};
use crate::schedule::NoiseSchedule;
use crate::solver::{replacement_inpaint_sample, LinearObservation, Operator, SmcConfig};
use crate::synthetic::{
    channels_to_orientation, orientation_to_channels, random_mask, sample_grain_field,
    widen_aux_channels, PlLikeForward,
};

/// How the auxiliary modality is produced from the raw forward model.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum AuxVariant {
    /// The two-channel angle-doubling output as is.
    Minimal,
    /// Redundant noisy channel copies appended, then reduced back down by
    /// principal components; exercises the channel-reduction pipeline.
    Redundant {
        extra_channels: usize,
        copy_noise_std: f64,
        pca_k: usize,
    },
}

/// Synthetic dataset dimensions and seeds.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct GrainDataConfig {
    pub h: usize,
    pub w: usize,
    pub grains: usize,
    pub train_count: usize,
    pub val_count: usize,
    pub train_seed: u64,
    /// Validation fields come from a disjoint seed stream.
    pub val_seed: u64,
    pub aux_variant: AuxVariant,
}

impl Default for GrainDataConfig {
    fn default() -> Self {
        Self {
            h: 16,
            w: 16,
            grains: 4,
            train_count: 4096,
            val_count: 256,
            train_seed: 101,
            val_seed: 900_101,
            aux_variant: AuxVariant::Minimal,
        }
    }
}

/// A preprocessed grain dataset: normalized joint fields plus everything
/// needed to map between model space and raw orientations.
pub struct GrainDataset {
    pub config: GrainDataConfig,
    pub layout: JointLayout,
    /// Normalized training fields.
    pub train: Vec<JointField>,
    /// Normalized validation fields.
    pub val: Vec<JointField>,
    /// Ground-truth orientation angles of the validation fields.
    pub val_theta: Vec<Vec<f64>>,
    pub main_norm: ChannelNormalizer,
    pub aux_norm: ChannelNormalizer,
    pub pca: Option<PcaModel>,
}

/// The effective black box in model coordinates: un-normalize the main block,
/// run the raw forward model, reduce and re-normalize the aux block.
pub struct NormalizedForward<F> {
    raw: F,
    id: String,
    main_norm: ChannelNormalizer,
    aux_norm: ChannelNormalizer,
    pca: Option<PcaModel>,
    extra_channels: usize,
}

impl<F: BlackBoxForward> BlackBoxForward for NormalizedForward<F> {
    fn id(&self) -> &str {
        &self.id
    }

    fn eval(&self, main: &Field) -> Result<Field> {
        let raw_main = self.main_norm.invert(main)?;
        let raw_aux = self.raw.eval(&raw_main)?;
        let widened = if self.extra_channels > 0 {
            // deterministic skeleton of the widening: exact channel copies
            widen_aux_channels(&raw_aux, self.extra_channels, 0.0, 0)
        } else {
            raw_aux
        };
        let reduced = match &self.pca {
            Some(model) => pca_apply_field(model, &widened)?,
            None => widened,
        };
        self.aux_norm.apply(&reduced)
    }
}

impl GrainDataset {
    /// The model-space forward map for consistency evaluation.
    pub fn normalized_forward(&self) -> NormalizedForward<PlLikeForward> {
        NormalizedForward {
            raw: PlLikeForward,
            id: "normalized(angle-doubling)".to_string(),
            main_norm: self.main_norm.clone(),
            aux_norm: self.aux_norm.clone(),
            pca: self.pca.clone(),
            extra_channels: match self.config.aux_variant {
                AuxVariant::Minimal => 0,
                AuxVariant::Redundant { extra_channels, .. } => extra_channels,
            },
        }
    }

    /// Flattened joint rows for multimodal training.
    pub fn joint_rows(&self) -> Vec<Vec<f64>> {
        self.train.iter().map(|jf| jf.flatten()).collect()
    }

    /// Main-block-only rows for unimodal training.
    pub fn main_rows(&self) -> Vec<Vec<f64>> {
        self.train.iter().map(|jf| jf.main.data.clone()).collect()
    }

    /// Decode a normalized main field back to orientation angles.
    pub fn decode_theta(&self, main_normalized: &Field) -> Result<Vec<f64>> {
        let raw = self.main_norm.invert(main_normalized)?;
        channels_to_orientation(&raw)
    }
}

/// Generate, preprocess and normalize the synthetic dataset.
pub fn generate_grain_dataset(config: &GrainDataConfig) -> Result<GrainDataset> {
    if config.val_count == 0 || config.train_count == 0 {
        return Err(Error::InvalidArgument(
            "train and validation counts must be >= 1".into(),
        ));
    }
    let raw = PlLikeForward;
    let sampler = |h: usize, w: usize, k: usize| {
        move |seed: u64| {
            let gf = sample_grain_field(h, w, k, seed);
            orientation_to_channels(&gf.theta, h, w).expect("shape fixed by construction")
        }
    };
    let train_raw = build_joint_dataset(
        sampler(config.h, config.w, config.grains),
        &raw,
        config.train_count,
        0.0,
        config.train_seed,
    )?;
    let val_raw = build_joint_dataset(
        sampler(config.h, config.w, config.grains),
        &raw,
        config.val_count,
        0.0,
        config.val_seed,
    )?;
    let val_theta: Vec<Vec<f64>> = val_raw
        .iter()
        .map(|jf| channels_to_orientation(&jf.main))
        .collect::<Result<_>>()?;

    // optional widening + channel reduction of the aux block
    let (train_aux, val_aux, pca) = match config.aux_variant {
        AuxVariant::Minimal => (
            train_raw.iter().map(|jf| jf.aux.clone()).collect::<Vec<_>>(),
            val_raw.iter().map(|jf| jf.aux.clone()).collect::<Vec<_>>(),
            None,
        ),
        AuxVariant::Redundant {
            extra_channels,
            copy_noise_std,
            pca_k,
        } => {
            let widen = |fields: &[JointField], base: u64| -> Vec<Field> {
                fields
                    .iter()
                    .enumerate()
                    .map(|(i, jf)| {
                        widen_aux_channels(
                            &jf.aux,
                            extra_channels,
                            copy_noise_std,
                            derive_seed(base, i as u64),
                        )
                    })
                    .collect()
            };
            let train_wide = widen(&train_raw, derive_seed(config.train_seed, 77));
            let val_wide = widen(&val_raw, derive_seed(config.val_seed, 77));
            let pixel_rows: Vec<Vec<f64>> = train_wide
                .iter()
                .flat_map(|f| (0..f.pixels()).map(|p| f.pixel(p).to_vec()))
                .collect();
            let model = pca_fit(&pixel_rows, pca_k)?;
            let reduce = |fields: Vec<Field>| -> Result<Vec<Field>> {
                fields.iter().map(|f| pca_apply_field(&model, f)).collect()
            };
            (reduce(train_wide)?, reduce(val_wide)?, Some(model))
        }
    };

    let train_main: Vec<Field> = train_raw.iter().map(|jf| jf.main.clone()).collect();
    let val_main: Vec<Field> = val_raw.iter().map(|jf| jf.main.clone()).collect();
    let main_norm = ChannelNormalizer::fit(&train_main)?;
    let aux_norm = ChannelNormalizer::fit(&train_aux)?;

    let assemble = |mains: Vec<Field>, auxes: Vec<Field>| -> Result<Vec<JointField>> {
        mains
            .into_iter()
            .zip(auxes)
            .map(|(m, a)| {
                JointField::with_default_names(main_norm.apply(&m)?, aux_norm.apply(&a)?)
            })
            .collect()
    };
    let train = assemble(train_main, train_aux)?;
    let val = assemble(val_main, val_aux)?;
    let layout = train[0].layout();
    Ok(GrainDataset {
        config: config.clone(),
        layout,
        train,
        val,
        val_theta,
        main_norm,
        aux_norm,
        pca,
    })
}

/// Which reconstruction arm to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReconMethod {
    /// Joint model, masked main plus fully observed aux, SMC solver.
    MultimodalSmc,
    /// Joint model, masked main only (aux unobserved), SMC solver.
    MultimodalSmcNoAux,
    /// Main-only model, masked main, SMC solver.
    UnimodalSmc,
    /// Main-only model, masked main, replacement-inpainting baseline.
    UnimodalReplacement,
}

/// Solver and trial sizing shared across experiment runners.
#[derive(Debug, Clone)]
pub struct TrialConfig {
    pub particles: usize,
    pub n_out: usize,
    pub noise_floor: f64,
}

impl Default for TrialConfig {
    fn default() -> Self {
        Self {
            particles: 256,
            n_out: 1,
            noise_floor: crate::solver::DEFAULT_NOISE_FLOOR,
        }
    }
}

/// Result of one reconstruction trial.
#[derive(Debug, Clone)]
pub struct TrialOutcome {
    /// Index of the validation field used as ground truth.
    pub field_index: usize,
    /// Per-sample mean disorientation against the truth, degrees.
    pub sample_errors_deg: Vec<f64>,
    /// Decoded orientation fields of every returned sample.
    pub sample_thetas: Vec<Vec<f64>>,
}

impl TrialOutcome {
    pub fn mean_error_deg(&self) -> f64 {
        self.sample_errors_deg.iter().sum::<f64>() / self.sample_errors_deg.len() as f64
    }
}

/// Run one seeded reconstruction trial.
///
/// The truth field, mask, observation noise and solver randomness all derive
/// from `trial_seed`, so arms sharing a seed see identical observations.
#[allow(clippy::too_many_arguments)]
pub fn run_trial(
    dataset: &GrainDataset,
    model: &DenoiserParams,
    schedule: &NoiseSchedule,
    method: ReconMethod,
    fraction: f64,
    sigma: f64,
    trial: &TrialConfig,
    trial_seed: u64,
) -> Result<TrialOutcome> {
    let layout = dataset.layout;
    let field_index = (derive_seed(trial_seed, 0) % dataset.val.len() as u64) as usize;
    let truth = &dataset.val[field_index];
    let truth_theta = &dataset.val_theta[field_index];
    let mask = random_mask(layout.h, layout.w, fraction, derive_seed(trial_seed, 1))?;
    let group = SymmetryGroup::trivial();
    let estimator = StabilizedDenoiser::new(model, schedule);

    let thetas: Vec<Vec<f64>> = match method {
        ReconMethod::MultimodalSmc | ReconMethod::MultimodalSmcNoAux => {
            let aux_observed = matches!(method, ReconMethod::MultimodalSmc);
            let spec = ObservationSpec::pixels(mask, aux_observed, sigma);
            let y_main = observe_main(&truth.main, &spec)?;
            let y_aux = if aux_observed {
                let mut aux = truth.aux.clone();
                if sigma > 0.0 {
                    let mut rng = rng_from_seed(derive_seed(trial_seed, 2));
                    let z = standard_normal_vec(&mut rng, aux.len());
                    for (v, n) in aux.data.iter_mut().zip(z) {
                        *v += sigma * n;
                    }
                }
                Some(aux)
            } else {
                None
            };
            let smc = SmcConfig {
                n_particles: trial.particles,
                n_out: trial.n_out,
                noise_floor: trial.noise_floor,
            };
            let samples = reconstruct(
                &y_main,
                &spec,
                y_aux.as_ref(),
                &estimator,
                &layout,
                schedule,
                &smc,
                derive_seed(trial_seed, 3),
            )?;
            samples
                .iter()
                .map(|jf| dataset.decode_theta(&jf.main))
                .collect::<Result<_>>()?
        }
        ReconMethod::UnimodalSmc | ReconMethod::UnimodalReplacement => {
            let spec = ObservationSpec::pixels(mask.clone(), false, 0.0);
            let y_main = observe_main(&truth.main, &spec)?;
            let indices: Vec<usize> = mask
                .iter()
                .flat_map(|&p| (0..layout.c_main).map(move |c| p * layout.c_main + c))
                .collect();
            let obs = LinearObservation::new(
                Operator::Mask(indices),
                y_main,
                vec![0.0; mask.len() * layout.c_main],
            )?;
            let dim = layout.main_len();
            let flats: Vec<Vec<f64>> = match method {
                ReconMethod::UnimodalSmc => {
                    let smc = SmcConfig {
                        n_particles: trial.particles,
                        n_out: trial.n_out,
                        noise_floor: trial.noise_floor,
                    };
                    crate::solver::smc_posterior_sample(
                        &obs,
                        &estimator,
                        dim,
                        schedule,
                        &smc,
                        derive_seed(trial_seed, 3),
                    )?
                }
                _ => (0..trial.n_out)
                    .map(|i| {
                        replacement_inpaint_sample(
                            &obs,
                            &estimator,
                            dim,
                            schedule,
                            derive_seed(trial_seed, 16 + i as u64),
                        )
                    })
                    .collect::<Result<_>>()?,
            };
            flats
                .iter()
                .map(|flat| {
                    let field =
                        Field::from_data(layout.h, layout.w, layout.c_main, flat.clone())?;
                    dataset.decode_theta(&field)
                })
                .collect::<Result<_>>()?
        }
    };

    let sample_errors_deg = thetas
        .iter()
        .map(|t| mean_field_disorientation(t, truth_theta, group))
        .collect::<Result<Vec<f64>>>()?;
    Ok(TrialOutcome {
        field_index,
        sample_errors_deg,
        sample_thetas: thetas,
    })
}

/// One row of a sweep: a single trial of one arm at one operating point.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub model: &'static str,
    pub fraction: f64,
    pub sigma: f64,
    pub trial: usize,
    pub error_deg: f64,
}

/// Paired sweep over observation fractions and aux noise levels.
///
/// Within a (fraction, trial) cell both arms share the truth field, the mask
/// and the solver seed; the unimodal arm is independent of sigma, so its
/// result is computed once per cell and replicated across the sigma list.
/// Rows come back sorted by fraction, then sigma, then trial.
#[allow(clippy::too_many_arguments)]
pub fn paired_sweep(
    dataset: &GrainDataset,
    joint_model: &DenoiserParams,
    main_model: &DenoiserParams,
    schedule: &NoiseSchedule,
    fractions: &[f64],
    sigmas: &[f64],
    trials: usize,
    trial_cfg: &TrialConfig,
    base_seed: u64,
) -> Result<Vec<SweepRow>> {
    if fractions.is_empty() || sigmas.is_empty() || trials == 0 {
        return Err(Error::InvalidArgument(
            "sweep needs nonempty fractions, sigmas and a positive trial count".into(),
        ));
    }
    let mut cells: Vec<(usize, usize)> = Vec::new();
    for fi in 0..fractions.len() {
        for trial in 0..trials {
            cells.push((fi, trial));
        }
    }
    let results: Vec<Result<Vec<SweepRow>>> = cells
        .par_iter()
        .map(|&(fi, trial)| {
            let fraction = fractions[fi];
            let trial_seed = derive_seed(base_seed, (fi as u64) << 32 | trial as u64);
            let mut rows = Vec::new();
            let uni = run_trial(
                dataset,
                main_model,
                schedule,
                ReconMethod::UnimodalSmc,
                fraction,
                0.0,
                trial_cfg,
                trial_seed,
            )?;
            for &sigma in sigmas {
                let multi = run_trial(
                    dataset,
                    joint_model,
                    schedule,
                    ReconMethod::MultimodalSmc,
                    fraction,
                    sigma,
                    trial_cfg,
                    trial_seed,
                )?;
                rows.push(SweepRow {
                    model: "multimodal",
                    fraction,
                    sigma,
                    trial,
                    error_deg: multi.mean_error_deg(),
                });
                rows.push(SweepRow {
                    model: "unimodal",
                    fraction,
                    sigma,
                    trial,
                    error_deg: uni.mean_error_deg(),
                });
            }
            Ok(rows)
        })
        .collect();
    let mut rows = Vec::new();
    for r in results {
        rows.extend(r?);
    }
    rows.sort_by(|a, b| {
        a.fraction
            .total_cmp(&b.fraction)
            .then(a.sigma.total_cmp(&b.sigma))
            .then(a.trial.cmp(&b.trial))
            .then(a.model.cmp(b.model))
    });
    Ok(rows)
}

/// Relative l2 consistency errors of `n` unconditionally generated joint
/// samples against the model-space forward map.
pub fn consistency_errors(
    dataset: &GrainDataset,
    model: &DenoiserParams,
    schedule: &NoiseSchedule,
    forward: &dyn BlackBoxForward,
    n: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let layout = dataset.layout;
    let estimator = StabilizedDenoiser::new(model, schedule);
    (0..n)
        .into_par_iter()
        .map(|i| {
            let flat = sample_unconditional(
                &estimator,
                layout.joint_len(),
                schedule,
                derive_seed(seed, i as u64),
            )?;
            let jf = JointField::from_flat(
                &layout,
                &flat,
                dataset.train[0].channel_names.clone(),
            )?;
            consistency_check(forward, &jf)
        })
        .collect()
}

/// Mean and dispersion of the reconstruction-error ensemble from one fixed
/// observation at each fraction.
pub fn uncertainty_at_fraction(
    dataset: &GrainDataset,
    joint_model: &DenoiserParams,
    schedule: &NoiseSchedule,
    fraction: f64,
    n_out: usize,
    particles: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if n_out < 2 {
        return Err(Error::NotEnoughSamples {
            needed: 2,
            got: n_out,
        });
    }
    let trial_cfg = TrialConfig {
        particles,
        n_out,
        noise_floor: crate::solver::DEFAULT_NOISE_FLOOR,
    };
    let outcome = run_trial(
        dataset,
        joint_model,
        schedule,
        ReconMethod::MultimodalSmc,
        fraction,
        0.0,
        &trial_cfg,
        seed,
    )?;
    let truth = &dataset.val_theta[outcome.field_index];
    let stats = ensemble_error_stats(&outcome.sample_thetas, truth, SymmetryGroup::trivial())?;
    Ok((stats.mean_error_deg, stats.std_error_deg))
}

/// Median of a sample; the spec of the consistency experiment reports medians.
pub fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}
