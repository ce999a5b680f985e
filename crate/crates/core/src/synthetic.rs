//! Synthetic grain-structured orientation fields: the expensive main modality
//! stand-in, plus the cheap lossy auxiliary forward model and random masks.
//!
//! A grain field is a Voronoi tessellation of K seed points, each grain
//! carrying one orientation angle. Orientations embed into unit vectors
//! `(cos t, sin t)`; the auxiliary model doubles the angle, so orientations
//! t and t + pi become indistinguishable in the aux modality.

use std::f64::consts::TAU;

use rand::Rng;

use crate::error::{Error, Result};
use crate::field::Field;
use crate::multimodal::BlackBoxForward;
use crate::rng::rng_from_seed;

/// A gridded orientation field segmented into grains.
#[derive(Debug, Clone)]
pub struct GrainField {
    pub h: usize,
    pub w: usize,
    /// Orientation angle in [0, 2pi) per pixel, constant within a grain.
    pub theta: Vec<f64>,
    /// Grain label per pixel (index into `seeds`).
    pub grain_id: Vec<usize>,
    /// Generator points as (x, y, angle).
    pub seeds: Vec<(f64, f64, f64)>,
}

/// Voronoi tessellation of `k` uniformly placed seeds with uniform per-grain
/// angles. Ties in the nearest-seed assignment break toward the lowest seed
/// index. Deterministic per seed.
pub fn sample_grain_field(h: usize, w: usize, k: usize, seed: u64) -> GrainField {
    assert!(h >= 1 && w >= 1 && k >= 1, "degenerate grain field shape");
    let mut rng = rng_from_seed(seed);
    let seeds: Vec<(f64, f64, f64)> = (0..k)
        .map(|_| {
            let x: f64 = rng.random::<f64>() * w as f64;
            let y: f64 = rng.random::<f64>() * h as f64;
            let angle: f64 = rng.random::<f64>() * TAU;
            (x, y, angle)
        })
        .collect();
    let mut theta = vec![0.0; h * w];
    let mut grain_id = vec![0usize; h * w];
    for py in 0..h {
        for px in 0..w {
            let cx = px as f64 + 0.5;
            let cy = py as f64 + 0.5;
            let mut best = 0usize;
            let mut best_d = f64::INFINITY;
            for (i, &(sx, sy, _)) in seeds.iter().enumerate() {
                let d = (cx - sx) * (cx - sx) + (cy - sy) * (cy - sy);
                if d < best_d {
                    best_d = d;
                    best = i;
                }
            }
            let p = py * w + px;
            grain_id[p] = best;
            theta[p] = seeds[best].2;
        }
    }
    GrainField {
        h,
        w,
        theta,
        grain_id,
        seeds,
    }
}

/// Embed orientations as per-pixel unit vectors `(cos t, sin t)`.
pub fn orientation_to_channels(theta: &[f64], h: usize, w: usize) -> Result<Field> {
    if theta.len() != h * w {
        return Err(Error::DimensionMismatch {
            expected: h * w,
            got: theta.len(),
        });
    }
    let mut field = Field::zeros(h, w, 2);
    for (p, &t) in theta.iter().enumerate() {
        field.data[2 * p] = t.cos();
        field.data[2 * p + 1] = t.sin();
    }
    Ok(field)
}

/// Decode per-pixel angles from a two-channel orientation field, wrapping into
/// [0, 2pi). Norm-invariant: only the vector direction matters.
pub fn channels_to_orientation(field: &Field) -> Result<Vec<f64>> {
    if field.c != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            got: field.c,
        });
    }
    Ok((0..field.pixels())
        .map(|p| {
            let v = field.pixel(p);
            let mut t = v[1].atan2(v[0]);
            if t < 0.0 {
                t += TAU;
            }
            t
        })
        .collect())
}

/// Minimum squared norm below which an orientation vector is rejected as
/// carrying no direction information.
const DEGENERATE_NORM_SQ: f64 = 1e-12;

/// The lossy auxiliary forward model: per pixel, the angle-doubling map
/// `(cos t, sin t) -> (cos 2t, sin 2t)`, evaluated norm-invariantly as
/// `(c^2 - s^2, 2 c s) / (c^2 + s^2)`. Orientations t and t + pi collapse to
/// the same output. Pixels whose vector norm is below tolerance are rejected.
pub struct PlLikeForward;

impl BlackBoxForward for PlLikeForward {
    fn id(&self) -> &str {
        "angle-doubling"
    }

    fn eval(&self, main: &Field) -> Result<Field> {
        if main.c != 2 {
            return Err(Error::DimensionMismatch {
                expected: 2,
                got: main.c,
            });
        }
        let mut aux = Field::zeros(main.h, main.w, 2);
        for p in 0..main.pixels() {
            let v = main.pixel(p);
            let (c, s) = (v[0], v[1]);
            let norm_sq = c * c + s * s;
            if norm_sq < DEGENERATE_NORM_SQ {
                return Err(Error::DegenerateOrientation { pixel: p });
            }
            aux.data[2 * p] = (c * c - s * s) / norm_sq;
            aux.data[2 * p + 1] = 2.0 * c * s / norm_sq;
        }
        Ok(aux)
    }
}

/// Uniform sample without replacement of `round(fraction * H * W)` pixel
/// positions; deterministic per seed, returned sorted.
pub fn random_mask(h: usize, w: usize, fraction: f64, seed: u64) -> Result<Vec<usize>> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::InvalidArgument(format!(
            "mask fraction {fraction} outside [0, 1]"
        )));
    }
    let total = h * w;
    let count = (fraction * total as f64).round() as usize;
    let mut rng = rng_from_seed(seed);
    // partial Fisher-Yates over the pixel index range
    let mut indices: Vec<usize> = (0..total).collect();
    for i in 0..count.min(total) {
        let j = rng.random_range(i..total);
        indices.swap(i, j);
    }
    let mut picked: Vec<usize> = indices[..count].to_vec();
    picked.sort_unstable();
    Ok(picked)
}

/// Append `extra` redundant noisy copies of the aux channels; used to exercise
/// the channel-reduction pipeline on a field whose minimal form needs none.
pub fn widen_aux_channels(aux: &Field, extra: usize, noise_std: f64, seed: u64) -> Field {
    let mut rng = rng_from_seed(seed);
    let c_out = aux.c + extra;
    let mut out = Field::zeros(aux.h, aux.w, c_out);
    for p in 0..aux.pixels() {
        let src = aux.pixel(p);
        for c in 0..c_out {
            let base = src[c % aux.c];
            let v = if c < aux.c {
                base
            } else {
                base + noise_std * crate::rng::standard_normal(&mut rng)
            };
            out.data[p * c_out + c] = v;
        }
    }
    out
}

/// Wrap an angle into [0, 2pi).
pub fn wrap_angle(t: f64) -> f64 {
    let mut r = t % TAU;
    if r < 0.0 {
        r += TAU;
    }
    r
}

/// Convenience: the angle-doubling aux field computed straight from angles.
pub fn doubled_angle_field(theta: &[f64], h: usize, w: usize) -> Result<Field> {
    let doubled: Vec<f64> = theta.iter().map(|&t| wrap_angle(2.0 * t)).collect();
    orientation_to_channels(&doubled, h, w)
}
