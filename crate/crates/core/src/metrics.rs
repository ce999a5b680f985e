//! Reconstruction error and uncertainty metrics: symmetry-aware planar
//! disorientation, relative l2 error, and ensemble dispersion statistics.

use std::f64::consts::TAU;

use crate::error::{Error, Result};

/// The planar cyclic symmetry group of order m, acting by rotations of 2pi/m.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SymmetryGroup {
    order: usize,
}

impl SymmetryGroup {
    pub fn new(order: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::InvalidArgument(
                "symmetry order must be >= 1".into(),
            ));
        }
        Ok(Self { order })
    }

    /// Trivial group: full 360-degree distinction.
    pub fn trivial() -> Self {
        Self { order: 1 }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Fundamental period of the quotient circle, `2pi / m`.
    pub fn period(&self) -> f64 {
        TAU / self.order as f64
    }
}

/// Minimal angular distance between two orientations over the symmetry group,
/// in degrees; range `[0, 180/m]`.
pub fn disorientation(theta1: f64, theta2: f64, group: SymmetryGroup) -> f64 {
    let period = group.period();
    let mut diff = (theta1 - theta2) % period;
    if diff < 0.0 {
        diff += period;
    }
    diff.min(period - diff).to_degrees()
}

/// Pixelwise disorientation averaged over the grid, in degrees.
pub fn mean_field_disorientation(
    field1: &[f64],
    field2: &[f64],
    group: SymmetryGroup,
) -> Result<f64> {
    if field1.len() != field2.len() || field1.is_empty() {
        return Err(Error::DimensionMismatch {
            expected: field1.len(),
            got: field2.len(),
        });
    }
    let sum: f64 = field1
        .iter()
        .zip(field2)
        .map(|(&a, &b)| disorientation(a, b, group))
        .sum();
    Ok(sum / field1.len() as f64)
}

/// Relative l2 error `||a - b|| / ||b||`.
pub fn relative_l2(a: &[f64], b_reference: &[f64]) -> Result<f64> {
    if a.len() != b_reference.len() {
        return Err(Error::DimensionMismatch {
            expected: b_reference.len(),
            got: a.len(),
        });
    }
    let norm: f64 = b_reference.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::ZeroNormReference);
    }
    let err: f64 = a
        .iter()
        .zip(b_reference)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    Ok(err / norm)
}

/// Dispersion of an ensemble of reconstructions around the truth.
#[derive(Debug, Clone)]
pub struct EnsembleErrorStats {
    /// Mean over samples of the per-sample mean disorientation, degrees.
    pub mean_error_deg: f64,
    /// Sample standard deviation of the per-sample mean disorientation.
    pub std_error_deg: f64,
    /// Pixelwise circular standard deviation of orientation across samples,
    /// degrees on the quotient circle.
    pub pixel_std_deg: Vec<f64>,
}

/// Per-sample error statistics plus pixelwise circular dispersion.
///
/// The circular standard deviation maps angles to the quotient circle (angle
/// times m), takes the resultant length R of the unit-vector mean, and reports
/// `sqrt(-2 ln R) / m` in degrees.
pub fn ensemble_error_stats(
    samples: &[Vec<f64>],
    truth: &[f64],
    group: SymmetryGroup,
) -> Result<EnsembleErrorStats> {
    if samples.len() < 2 {
        return Err(Error::NotEnoughSamples {
            needed: 2,
            got: samples.len(),
        });
    }
    let errors: Vec<f64> = samples
        .iter()
        .map(|s| mean_field_disorientation(s, truth, group))
        .collect::<Result<_>>()?;
    let n = errors.len() as f64;
    let mean = errors.iter().sum::<f64>() / n;
    let var = errors.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / (n - 1.0);

    let m = group.order() as f64;
    let pixels = truth.len();
    let mut pixel_std = Vec::with_capacity(pixels);
    for p in 0..pixels {
        let (mut sx, mut sy) = (0.0, 0.0);
        for s in samples {
            let quotient = s[p] * m;
            sx += quotient.cos();
            sy += quotient.sin();
        }
        let resultant = (sx * sx + sy * sy).sqrt() / n;
        let std_rad = if resultant >= 1.0 {
            0.0
        } else {
            (-2.0 * resultant.max(1e-300).ln()).sqrt() / m
        };
        pixel_std.push(std_rad.to_degrees());
    }
    Ok(EnsembleErrorStats {
        mean_error_deg: mean,
        std_error_deg: var.sqrt(),
        pixel_std_deg: pixel_std,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{rng_from_seed, standard_normal};
    use rand::Rng;

    #[test]
    fn identical_orientations_have_zero_disorientation() {
        let g = SymmetryGroup::trivial();
        assert_eq!(disorientation(1.3, 1.3, g), 0.0);
    }

    #[test]
    fn wraps_across_zero() {
        // m = 1: 10 deg vs 350 deg -> 20 deg
        let g = SymmetryGroup::trivial();
        let d = disorientation(10f64.to_radians(), 350f64.to_radians(), g);
        assert!((d - 20.0).abs() < 1e-10);
    }

    #[test]
    fn symmetry_reduces_range() {
        // m = 4: 0 vs 89 deg -> 1 deg
        let g = SymmetryGroup::new(4).unwrap();
        let d = disorientation(0.0, 89f64.to_radians(), g);
        assert!((d - 1.0).abs() < 1e-10);
    }

    #[test]
    fn matches_brute_force_over_group_and_wrap() {
        let mut rng = rng_from_seed(3);
        for &m in &[1usize, 2, 4] {
            let g = SymmetryGroup::new(m).unwrap();
            for _ in 0..200 {
                let a: f64 = rng.random::<f64>() * TAU * 2.0 - TAU;
                let b: f64 = rng.random::<f64>() * TAU * 2.0 - TAU;
                let d = disorientation(a, b, g);
                // brute force over group elements and integer wraps
                let mut best = f64::INFINITY;
                for k in 0..m {
                    let shifted = b + TAU * k as f64 / m as f64;
                    for wrap in -3i32..=3 {
                        let cand = (a - shifted + TAU * wrap as f64).abs();
                        best = best.min(cand);
                    }
                }
                assert!((d - best.to_degrees()).abs() < 1e-8, "m={m} a={a} b={b}");
            }
        }
    }

    #[test]
    fn range_bound_holds() {
        let mut rng = rng_from_seed(5);
        for &m in &[1usize, 2, 4] {
            let g = SymmetryGroup::new(m).unwrap();
            let bound = 180.0 / m as f64;
            for _ in 0..100_000 {
                let a: f64 = rng.random::<f64>() * 4.0 * TAU - 2.0 * TAU;
                let b: f64 = rng.random::<f64>() * 4.0 * TAU - 2.0 * TAU;
                let d = disorientation(a, b, g);
                assert!((0.0..=bound + 1e-9).contains(&d));
            }
        }
    }

    #[test]
    fn metric_properties_on_the_quotient() {
        let mut rng = rng_from_seed(7);
        let g = SymmetryGroup::new(2).unwrap();
        for _ in 0..500 {
            let a = rng.random::<f64>() * TAU;
            let b = rng.random::<f64>() * TAU;
            let c = rng.random::<f64>() * TAU;
            // symmetry
            assert!((disorientation(a, b, g) - disorientation(b, a, g)).abs() < 1e-10);
            // group invariance on either argument
            let shifted = disorientation(a + g.period(), b, g);
            assert!((disorientation(a, b, g) - shifted).abs() < 1e-8);
            // triangle inequality
            assert!(
                disorientation(a, c, g)
                    <= disorientation(a, b, g) + disorientation(b, c, g) + 1e-9
            );
        }
    }

    #[test]
    fn mean_field_examples() {
        let g = SymmetryGroup::new(4).unwrap();
        let f1 = vec![0.1, 1.0, 2.0, 3.0];
        assert_eq!(mean_field_disorientation(&f1, &f1, g).unwrap(), 0.0);
        // constant offset of one period is invisible
        let shifted: Vec<f64> = f1.iter().map(|&t| t + g.period()).collect();
        assert!(mean_field_disorientation(&f1, &shifted, g).unwrap() < 1e-9);
        // m = 1 matches the exhaustive per-pixel oracle
        let g1 = SymmetryGroup::trivial();
        let mut rng = rng_from_seed(9);
        let a: Vec<f64> = (0..64).map(|_| rng.random::<f64>() * TAU).collect();
        let b: Vec<f64> = (0..64).map(|_| rng.random::<f64>() * TAU).collect();
        let mean = mean_field_disorientation(&a, &b, g1).unwrap();
        let oracle: f64 = a
            .iter()
            .zip(&b)
            .map(|(&x, &y)| {
                let mut d = (x - y).abs() % TAU;
                if d > TAU / 2.0 {
                    d = TAU - d;
                }
                d.to_degrees()
            })
            .sum::<f64>()
            / 64.0;
        assert!((mean - oracle).abs() < 1e-9);
        assert!(mean_field_disorientation(&a, &b[..10], g1).is_err());
    }

    #[test]
    fn relative_l2_examples() {
        let b = vec![1.0, -2.0, 2.0];
        assert_eq!(relative_l2(&b, &b).unwrap(), 0.0);
        let doubled: Vec<f64> = b.iter().map(|v| 2.0 * v).collect();
        assert!((relative_l2(&doubled, &b).unwrap() - 1.0).abs() < 1e-12);
        assert!((relative_l2(&[0.0, 0.0, 0.0], &b).unwrap() - 1.0).abs() < 1e-12);
        assert!(relative_l2(&b, &[0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn ensemble_stats_two_point_example() {
        let g = SymmetryGroup::trivial();
        // two samples with mean errors 2 and 4 degrees
        let truth = vec![0.0; 4];
        let s1 = vec![2f64.to_radians(); 4];
        let s2 = vec![4f64.to_radians(); 4];
        let stats = ensemble_error_stats(&[s1, s2], &truth, g).unwrap();
        assert!((stats.mean_error_deg - 3.0).abs() < 1e-9);
        assert!((stats.std_error_deg - 2f64.sqrt()).abs() < 1e-9);
        assert!(ensemble_error_stats(&[truth.clone()], &truth, g).is_err());
    }

    #[test]
    fn identical_samples_have_zero_dispersion() {
        let g = SymmetryGroup::trivial();
        let truth = vec![0.4, 1.0];
        let s = vec![0.9, 2.0];
        let stats = ensemble_error_stats(&[s.clone(), s.clone(), s], &truth, g).unwrap();
        assert!(stats.std_error_deg < 1e-9);
        assert!(stats.pixel_std_deg.iter().all(|&v| v < 1e-5));
    }

    #[test]
    fn pixel_std_tracks_scatter() {
        let g = SymmetryGroup::trivial();
        let truth = vec![0.0; 2];
        let mut rng = rng_from_seed(11);
        // pixel 0 scatters tightly, pixel 1 widely
        let samples: Vec<Vec<f64>> = (0..400)
            .map(|_| {
                vec![
                    0.02 * standard_normal(&mut rng),
                    0.6 * standard_normal(&mut rng),
                ]
            })
            .collect();
        let stats = ensemble_error_stats(&samples, &truth, g).unwrap();
        assert!((stats.pixel_std_deg[0] - 0.02f64.to_degrees()).abs() < 0.3);
        assert!((stats.pixel_std_deg[1] - 0.6f64.to_degrees()).abs() < 3.0);
        assert!(stats.pixel_std_deg[1] > 10.0 * stats.pixel_std_deg[0]);
    }
}
