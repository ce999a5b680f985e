//! Joint-modality assembly: the black-box forward interface, joint dataset
//! construction, augmented inpainting masks and the end-to-end reconstruction
//! entry point.
//!
//! The central contract: reconstruction consumes observations of the joint
//! field only and never touches the forward model. [`reconstruct`] does not
//! even take one as an argument; [`CountingForward`] exists so tests can
//! assert the call count stays frozen across reconstructions.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::diffusion::EpsProvider;
use crate::error::{Error, Result};
use crate::field::{Field, JointField, JointLayout};
use crate::rng::{derive_seed, rng_from_seed, standard_normal_vec};
use crate::schedule::NoiseSchedule;
use crate::solver::{smc_posterior_sample, LinearObservation, Operator, SmcConfig};

/// A deterministic map from a main-modality field to an auxiliary field,
/// accessible only through evaluation.
pub trait BlackBoxForward: Sync {
    /// Stable identifier for error messages and manifests.
    fn id(&self) -> &str;

    /// Evaluate the model. Same input must produce the same output.
    fn eval(&self, main: &Field) -> Result<Field>;
}

/// Wrapper counting evaluations of the inner forward model.
pub struct CountingForward<F> {
    inner: F,
    count: AtomicU64,
}

impl<F: BlackBoxForward> CountingForward<F> {
    pub fn new(inner: F) -> Self {
        Self {
            inner,
            count: AtomicU64::new(0),
        }
    }

    pub fn evaluations(&self) -> u64 {
        self.count.load(Ordering::SeqCst)
    }
}

impl<F: BlackBoxForward> BlackBoxForward for CountingForward<F> {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn eval(&self, main: &Field) -> Result<Field> {
        self.count.fetch_add(1, Ordering::SeqCst);
        self.inner.eval(main)
    }
}

impl<F: BlackBoxForward + ?Sized> BlackBoxForward for &F {
    fn id(&self) -> &str {
        (**self).id()
    }

    fn eval(&self, main: &Field) -> Result<Field> {
        (**self).eval(main)
    }
}

/// Whether a mask index selects a whole pixel (all its main channels) or a
/// single scalar entry of the main block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskGranularity {
    Pixel,
    Entry,
}

/// Which parts of the joint field are observed, and how noisy the aux block is.
#[derive(Debug, Clone)]
pub struct ObservationSpec {
    /// Observed main-modality indices: pixel indices under
    /// [`MaskGranularity::Pixel`], flat main-block indices under `Entry`.
    pub omega: Vec<usize>,
    pub granularity: MaskGranularity,
    pub aux_observed: bool,
    /// Noise standard deviation on the aux block (normalized units).
    pub aux_noise_std: f64,
}

impl ObservationSpec {
    pub fn pixels(omega: Vec<usize>, aux_observed: bool, aux_noise_std: f64) -> Self {
        Self {
            omega,
            granularity: MaskGranularity::Pixel,
            aux_observed,
            aux_noise_std,
        }
    }
}

/// Expand an observation spec into joint-space mask indices and their noise
/// levels: zero on every main coordinate, sigma on every aux coordinate.
pub fn augmented_mask(spec: &ObservationSpec, layout: &JointLayout) -> Result<(Vec<usize>, Vec<f64>)> {
    if spec.aux_noise_std < 0.0 || !spec.aux_noise_std.is_finite() {
        return Err(Error::InvalidArgument(
            "aux noise std must be finite and nonnegative".into(),
        ));
    }
    let mut indices = Vec::new();
    match spec.granularity {
        MaskGranularity::Pixel => {
            for &p in &spec.omega {
                if p >= layout.pixels() {
                    return Err(Error::IndexOutOfRange {
                        index: p,
                        dim: layout.pixels(),
                    });
                }
                for c in 0..layout.c_main {
                    indices.push(p * layout.c_main + c);
                }
            }
        }
        MaskGranularity::Entry => {
            for &i in &spec.omega {
                if i >= layout.main_len() {
                    return Err(Error::IndexOutOfRange {
                        index: i,
                        dim: layout.main_len(),
                    });
                }
                indices.push(i);
            }
        }
    }
    let mut noise = vec![0.0; indices.len()];
    if spec.aux_observed {
        let offset = layout.main_len();
        indices.extend(offset..offset + layout.aux_len());
        noise.extend(std::iter::repeat_n(spec.aux_noise_std, layout.aux_len()));
    }
    Ok((indices, noise))
}

/// Values of the true main field at the spec's observed coordinates, in the
/// same order [`augmented_mask`] emits them.
pub fn observe_main(main: &Field, spec: &ObservationSpec) -> Result<Vec<f64>> {
    match spec.granularity {
        MaskGranularity::Pixel => {
            let mut out = Vec::with_capacity(spec.omega.len() * main.c);
            for &p in &spec.omega {
                if p >= main.pixels() {
                    return Err(Error::IndexOutOfRange {
                        index: p,
                        dim: main.pixels(),
                    });
                }
                out.extend_from_slice(main.pixel(p));
            }
            Ok(out)
        }
        MaskGranularity::Entry => spec
            .omega
            .iter()
            .map(|&i| {
                main.data.get(i).copied().ok_or(Error::IndexOutOfRange {
                    index: i,
                    dim: main.len(),
                })
            })
            .collect(),
    }
}

/// Run the forward model over prior samples and merge the modalities:
/// each item carries `aux = f(main) + noise_std * z`. Deterministic per seed.
pub fn build_joint_dataset(
    mut prior_sampler: impl FnMut(u64) -> Field,
    forward: &dyn BlackBoxForward,
    n: usize,
    noise_std: f64,
    seed: u64,
) -> Result<Vec<JointField>> {
    if n == 0 {
        return Err(Error::InvalidArgument(
            "dataset size must be >= 1".into(),
        ));
    }
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let main = prior_sampler(derive_seed(seed, i as u64));
        let mut aux = forward.eval(&main).map_err(|e| Error::ForwardModel {
            id: forward.id().to_string(),
            index: i,
            source: Box::new(e),
        })?;
        if noise_std > 0.0 {
            let mut rng = rng_from_seed(derive_seed(seed, (i as u64) | (1 << 62)));
            let z = standard_normal_vec(&mut rng, aux.len());
            for (a, n) in aux.data.iter_mut().zip(z) {
                *a += noise_std * n;
            }
        }
        out.push(JointField::with_default_names(main, aux)?);
    }
    Ok(out)
}

/// Posterior reconstruction of the joint field from masked main observations
/// and (optionally) the fully observed aux block.
///
/// Builds the augmented linear observation, runs the SMC solver over the joint
/// space, and splits every returned sample back into modalities. The forward
/// model is not an input: reconstruction cannot touch it.
pub fn reconstruct(
    y_main: &[f64],
    spec: &ObservationSpec,
    y_aux: Option<&Field>,
    provider: &dyn EpsProvider,
    layout: &JointLayout,
    schedule: &NoiseSchedule,
    smc: &SmcConfig,
    seed: u64,
) -> Result<Vec<JointField>> {
    if spec.aux_observed != y_aux.is_some() {
        return Err(Error::InvalidArgument(
            "y_aux must be present exactly when the spec observes the aux block".into(),
        ));
    }
    let (indices, noise_std) = augmented_mask(spec, layout)?;
    let main_obs_len = indices.len() - if spec.aux_observed { layout.aux_len() } else { 0 };
    if y_main.len() != main_obs_len {
        return Err(Error::DimensionMismatch {
            expected: main_obs_len,
            got: y_main.len(),
        });
    }
    let mut y = Vec::with_capacity(indices.len());
    y.extend_from_slice(y_main);
    if let Some(aux) = y_aux {
        if aux.len() != layout.aux_len() {
            return Err(Error::DimensionMismatch {
                expected: layout.aux_len(),
                got: aux.len(),
            });
        }
        y.extend_from_slice(&aux.data);
    }
    let obs = LinearObservation::new(Operator::Mask(indices), y, noise_std)?;
    let samples = smc_posterior_sample(&obs, provider, layout.joint_len(), schedule, smc, seed)?;
    samples
        .into_iter()
        .map(|flat| JointField::from_flat(layout, &flat, default_names(layout)))
        .collect()
}

fn default_names(layout: &JointLayout) -> Vec<String> {
    (0..layout.c_main)
        .map(|i| format!("main{i}"))
        .chain((0..layout.c_aux).map(|i| format!("aux{i}")))
        .collect()
}

/// Relative l2 error between `f(main)` and the stored aux block:
/// `||f(main) - aux|| / ||aux||`.
pub fn consistency_check(forward: &dyn BlackBoxForward, generated: &JointField) -> Result<f64> {
    let predicted = forward.eval(&generated.main)?;
    if predicted.len() != generated.aux.len() {
        return Err(Error::DimensionMismatch {
            expected: generated.aux.len(),
            got: predicted.len(),
        });
    }
    let norm: f64 = generated.aux.data.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::ZeroNormReference);
    }
    let err: f64 = predicted
        .data
        .iter()
        .zip(&generated.aux.data)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    Ok(err / norm)
}
