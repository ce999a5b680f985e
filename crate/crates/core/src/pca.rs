//! Principal component analysis for per-pixel channel reduction.
//!
//! Channels counts here are single digits, so the eigendecomposition is a
//! plain cyclic Jacobi sweep on the covariance matrix; no linear algebra
//! dependency needed.

use crate::error::{Error, Result};
use crate::field::Field;

/// A fitted channel-reduction model: per-channel standardization followed by
/// projection onto the top-k covariance eigenvectors.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct PcaModel {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    /// k x C projection matrix, rows are orthonormal components.
    pub components: Vec<Vec<f64>>,
    /// Fraction of total variance explained per component, nonincreasing.
    pub explained_variance: Vec<f64>,
    /// Channels whose variance was zero; they carry no signal and are dropped
    /// from the projection (their means still restore on inversion).
    pub dropped_channels: Vec<usize>,
}

impl PcaModel {
    pub fn input_channels(&self) -> usize {
        self.means.len()
    }

    pub fn output_channels(&self) -> usize {
        self.components.len()
    }
}

/// Fit on a dataset of C-channel pixel vectors, keeping the top `k` components.
pub fn pca_fit(rows: &[Vec<f64>], k: usize) -> Result<PcaModel> {
    if rows.is_empty() {
        return Err(Error::NotEnoughSamples { needed: 1, got: 0 });
    }
    let c = rows[0].len();
    if rows.len() < c {
        return Err(Error::NotEnoughSamples {
            needed: c,
            got: rows.len(),
        });
    }
    if k > c || k == 0 {
        return Err(Error::InvalidArgument(format!(
            "component count {k} must lie in 1..={c}"
        )));
    }
    if rows.iter().any(|r| r.len() != c) {
        return Err(Error::InvalidArgument("ragged pixel rows".into()));
    }
    let n = rows.len() as f64;
    let mut means = vec![0.0; c];
    for row in rows {
        for (m, v) in means.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in means.iter_mut() {
        *m /= n;
    }
    let mut vars = vec![0.0; c];
    for row in rows {
        for i in 0..c {
            let d = row[i] - means[i];
            vars[i] += d * d;
        }
    }
    for v in vars.iter_mut() {
        *v /= n;
    }
    let dropped_channels: Vec<usize> = (0..c).filter(|&i| vars[i] == 0.0).collect();
    if !dropped_channels.is_empty() {
        eprintln!(
            "warning: dropping zero-variance channels {dropped_channels:?} from the projection"
        );
    }
    let stds: Vec<f64> = vars
        .iter()
        .map(|&v| if v == 0.0 { 1.0 } else { v.sqrt() })
        .collect();

    // covariance of the standardized data
    let mut cov = vec![0.0; c * c];
    for row in rows {
        for i in 0..c {
            let a = (row[i] - means[i]) / stds[i];
            for j in i..c {
                let b = (row[j] - means[j]) / stds[j];
                cov[i * c + j] += a * b;
            }
        }
    }
    for i in 0..c {
        for j in i..c {
            let v = cov[i * c + j] / n;
            cov[i * c + j] = v;
            cov[j * c + i] = v;
        }
    }

    let (eigvals, eigvecs) = jacobi_eigen(&cov, c);
    let mut order: Vec<usize> = (0..c).collect();
    order.sort_by(|&a, &b| eigvals[b].partial_cmp(&eigvals[a]).unwrap());
    let total: f64 = eigvals.iter().map(|v| v.max(0.0)).sum();
    let components: Vec<Vec<f64>> = order[..k]
        .iter()
        .map(|&i| (0..c).map(|r| eigvecs[r * c + i]).collect())
        .collect();
    let explained_variance: Vec<f64> = order[..k]
        .iter()
        .map(|&i| {
            if total > 0.0 {
                eigvals[i].max(0.0) / total
            } else {
                0.0
            }
        })
        .collect();
    Ok(PcaModel {
        means,
        stds,
        components,
        explained_variance,
        dropped_channels,
    })
}

/// Project one pixel vector to component scores.
pub fn pca_apply(model: &PcaModel, row: &[f64]) -> Result<Vec<f64>> {
    let c = model.input_channels();
    if row.len() != c {
        return Err(Error::DimensionMismatch {
            expected: c,
            got: row.len(),
        });
    }
    Ok(model
        .components
        .iter()
        .map(|comp| {
            comp.iter()
                .enumerate()
                .map(|(i, &w)| w * (row[i] - model.means[i]) / model.stds[i])
                .sum()
        })
        .collect())
}

/// Reconstruct a pixel vector from component scores: transpose-project, then
/// de-standardize.
pub fn pca_invert(model: &PcaModel, scores: &[f64]) -> Result<Vec<f64>> {
    if scores.len() != model.output_channels() {
        return Err(Error::DimensionMismatch {
            expected: model.output_channels(),
            got: scores.len(),
        });
    }
    let c = model.input_channels();
    let mut standardized = vec![0.0; c];
    for (comp, &s) in model.components.iter().zip(scores) {
        for i in 0..c {
            standardized[i] += comp[i] * s;
        }
    }
    Ok((0..c)
        .map(|i| standardized[i] * model.stds[i] + model.means[i])
        .collect())
}

/// Apply the projection to every pixel of a field.
pub fn pca_apply_field(model: &PcaModel, field: &Field) -> Result<Field> {
    if field.c != model.input_channels() {
        return Err(Error::DimensionMismatch {
            expected: model.input_channels(),
            got: field.c,
        });
    }
    let k = model.output_channels();
    let mut out = Field::zeros(field.h, field.w, k);
    for p in 0..field.pixels() {
        let scores = pca_apply(model, field.pixel(p))?;
        out.data[p * k..(p + 1) * k].copy_from_slice(&scores);
    }
    Ok(out)
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix; returns
/// (eigenvalues, column eigenvectors).
fn jacobi_eigen(matrix: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut a = matrix.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                off += a[i * n + j] * a[i * n + j];
            }
        }
        if off < 1e-24 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq.abs() < 1e-18 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for i in 0..n {
                    let aip = a[i * n + p];
                    let aiq = a[i * n + q];
                    a[i * n + p] = c * aip - s * aiq;
                    a[i * n + q] = s * aip + c * aiq;
                }
                for i in 0..n {
                    let api = a[p * n + i];
                    let aqi = a[q * n + i];
                    a[p * n + i] = c * api - s * aqi;
                    a[q * n + i] = s * api + c * aqi;
                }
                for i in 0..n {
                    let vip = v[i * n + p];
                    let viq = v[i * n + q];
                    v[i * n + p] = c * vip - s * viq;
                    v[i * n + q] = s * vip + c * viq;
                }
            }
        }
    }
    let eigvals = (0..n).map(|i| a[i * n + i]).collect();
    (eigvals, v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{rng_from_seed, standard_normal};

    #[test]
    fn full_rank_round_trip() {
        let mut rng = rng_from_seed(2);
        let rows: Vec<Vec<f64>> = (0..200)
            .map(|_| {
                let a = standard_normal(&mut rng);
                let b = standard_normal(&mut rng);
                vec![a + 1.0, 2.0 * b - 0.5, 0.3 * a + b]
            })
            .collect();
        let model = pca_fit(&rows, 3).unwrap();
        for row in rows.iter().take(20) {
            let back = pca_invert(&model, &pca_apply(&model, row).unwrap()).unwrap();
            for (x, y) in back.iter().zip(row) {
                assert!((x - y).abs() < 1e-8, "{x} vs {y}");
            }
        }
    }

    #[test]
    fn line_data_is_one_dimensional() {
        let rows: Vec<Vec<f64>> = (0..100).map(|i| {
            let a = i as f64 / 10.0 - 5.0;
            vec![a, a]
        }).collect();
        let model = pca_fit(&rows, 1).unwrap();
        // component proportional to (1, 1)/sqrt(2) up to sign
        let comp = &model.components[0];
        let target = 1.0 / 2.0f64.sqrt();
        assert!((comp[0].abs() - target).abs() < 1e-8);
        assert!((comp[1].abs() - target).abs() < 1e-8);
        assert!((comp[0] - comp[1]).abs() < 1e-8, "same sign");
        // perfect reconstruction from one component
        for row in rows.iter().step_by(13) {
            let back = pca_invert(&model, &pca_apply(&model, row).unwrap()).unwrap();
            for (x, y) in back.iter().zip(row) {
                assert!((x - y).abs() < 1e-8);
            }
        }
        assert!((model.explained_variance[0] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn components_are_orthonormal_and_variance_fractions_behave() {
        let mut rng = rng_from_seed(4);
        let rows: Vec<Vec<f64>> = (0..500)
            .map(|_| {
                let a = standard_normal(&mut rng);
                let b = 0.2 * standard_normal(&mut rng);
                let c = 0.05 * standard_normal(&mut rng);
                vec![a, a + b, b + c, c]
            })
            .collect();
        let model = pca_fit(&rows, 4).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let dot: f64 = model.components[i]
                    .iter()
                    .zip(&model.components[j])
                    .map(|(x, y)| x * y)
                    .sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-8, "dot({i},{j}) = {dot}");
            }
        }
        let total: f64 = model.explained_variance.iter().sum();
        assert!(total <= 1.0 + 1e-9);
        for w in model.explained_variance.windows(2) {
            assert!(w[0] >= w[1] - 1e-12);
        }
    }

    #[test]
    fn reconstruction_error_nonincreasing_in_k() {
        let mut rng = rng_from_seed(6);
        let rows: Vec<Vec<f64>> = (0..300)
            .map(|_| {
                let a = standard_normal(&mut rng);
                let b = standard_normal(&mut rng);
                vec![a, b, a - b, 0.1 * standard_normal(&mut rng)]
            })
            .collect();
        let mut prev = f64::INFINITY;
        for k in 1..=4 {
            let model = pca_fit(&rows, k).unwrap();
            let err: f64 = rows
                .iter()
                .map(|row| {
                    let back = pca_invert(&model, &pca_apply(&model, row).unwrap()).unwrap();
                    back.iter()
                        .zip(row)
                        .map(|(x, y)| (x - y) * (x - y))
                        .sum::<f64>()
                })
                .sum();
            assert!(err <= prev + 1e-9, "k={k}: {err} > {prev}");
            prev = err;
        }
    }

    #[test]
    fn zero_variance_channel_dropped_with_mean_restored() {
        let mut rng = rng_from_seed(8);
        let rows: Vec<Vec<f64>> = (0..50)
            .map(|_| vec![standard_normal(&mut rng), 7.5])
            .collect();
        let model = pca_fit(&rows, 1).unwrap();
        assert_eq!(model.dropped_channels, vec![1]);
        let back = pca_invert(&model, &pca_apply(&model, &rows[0]).unwrap()).unwrap();
        assert!((back[1] - 7.5).abs() < 1e-9);
        assert!((back[0] - rows[0][0]).abs() < 1e-8);
    }

    #[test]
    fn rejects_undersized_inputs() {
        assert!(pca_fit(&[], 1).is_err());
        let rows = vec![vec![1.0, 2.0, 3.0]];
        assert!(pca_fit(&rows, 1).is_err()); // fewer rows than channels
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 1.0]).collect();
        assert!(pca_fit(&rows, 3).is_err());
        assert!(pca_fit(&rows, 0).is_err());
    }
}
