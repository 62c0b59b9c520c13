//! Per-layer Gaussian statistics and the distance features built from them.
//!
//! For layer `l` the fit keeps the empirical mean `c_l` and a Cholesky factor of
//! the unbiased covariance plus a scale-relative ridge,
//! `Σ_l + λ·(tr Σ_l / d)·I`. The Mahalanobis feature of a sample is
//! `M_l(x) = (f_l(x) - c_l)ᵀ Σ_l⁻¹ (f_l(x) - c_l)`, evaluated with a triangular
//! solve against the factor.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};
use crate::features::FeatureMatrix;
use crate::linalg;
use crate::store::EmbeddingSet;

pub const DEFAULT_LAMBDA: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerStats {
    /// 1-based layer index, bottom to top.
    pub layer_index: usize,
    pub mean: Vec<f64>,
    /// Row-major lower-triangular factor of the regularized covariance.
    pub chol: Vec<f64>,
    pub lambda: f64,
    pub n_fit: usize,
}

impl LayerStats {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// The regularized covariance `chol · cholᵀ`, row-major.
    pub fn covariance(&self) -> Vec<f64> {
        let d = self.dim();
        let mut out = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..=i {
                let s = linalg::dot(&self.chol[i * d..i * d + j + 1], &self.chol[j * d..j * d + j + 1]);
                out[i * d + j] = s;
                out[j * d + i] = s;
            }
        }
        out
    }

    /// Builds stats from a known mean and row-major covariance, adding the
    /// ridge `λ·(tr Σ / d)·I` before factoring. `n_fit` is left at 0.
    pub fn from_mean_and_covariance(layer_index: usize, mean: Vec<f64>, covariance: &[f64], lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            bail!(Config, "lambda must be a finite nonnegative number, got {lambda}");
        }
        let d = mean.len();
        if covariance.len() != d * d {
            bail!(Shape, "covariance has {} entries, expected {}", covariance.len(), d * d);
        }
        let mut cov = covariance.to_vec();
        let trace: f64 = (0..d).map(|i| cov[i * d + i]).sum();
        let scale = if trace > 0.0 { trace / d as f64 } else { 1.0 };
        for i in 0..d {
            cov[i * d + i] += lambda * scale;
        }
        let chol = linalg::cholesky(&cov, d)?;
        Ok(Self {
            layer_index,
            mean,
            chol,
            lambda,
            n_fit: 0,
        })
    }

    /// Squared Mahalanobis distance of `x` to the fitted Gaussian.
    pub fn mahalanobis<T: Copy + Into<f64>>(&self, x: &[T]) -> Result<f64> {
        let d = self.dim();
        if x.len() != d {
            bail!(Shape, "vector has dimension {}, stats expect {d}", x.len());
        }
        let mut z: Vec<f64> = x.iter().zip(&self.mean).map(|(&v, m)| v.into() - m).collect();
        linalg::forward_substitute(&self.chol, d, &mut z);
        Ok(z.iter().map(|v| v * v).sum())
    }
}

/// Fits mean and regularized covariance of `layer` (1-based) over every sample.
pub fn fit_layer_stats(embeddings: &EmbeddingSet, layer: usize, lambda: f64) -> Result<LayerStats> {
    if layer == 0 || layer > embeddings.layers() {
        bail!(
            Config,
            "layer {layer} out of range 1..={}",
            embeddings.layers()
        );
    }
    let rows: Vec<&[f32]> = (0..embeddings.len()).map(|i| embeddings.vector(i, layer)).collect();
    fit_gaussian(&rows, layer, lambda)
}

/// Fits statistics for every layer, in layer order.
pub fn fit_all_layers(embeddings: &EmbeddingSet, lambda: f64) -> Result<Vec<LayerStats>> {
    (1..=embeddings.layers())
        .into_par_iter()
        .map(|l| fit_layer_stats(embeddings, l, lambda))
        .collect()
}

pub(crate) fn fit_gaussian<T: Copy + Into<f64> + Sync>(
    rows: &[&[T]],
    layer_index: usize,
    lambda: f64,
) -> Result<LayerStats> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        bail!(Config, "lambda must be a finite nonnegative number, got {lambda}");
    }
    let n = rows.len();
    if n == 0 {
        bail!(Data, "cannot fit statistics on zero samples");
    }
    if n < 2 && lambda == 0.0 {
        bail!(Data, "covariance needs at least 2 samples when lambda = 0 (got {n})");
    }
    let d = rows[0].len();
    let mean = mean_of(rows, d);
    let mut cov = scatter(rows, &mean);
    let denom = if n > 1 { (n - 1) as f64 } else { 1.0 };
    cov.iter_mut().for_each(|v| *v /= denom);

    let mut stats = LayerStats::from_mean_and_covariance(layer_index, mean, &cov, lambda)?;
    stats.n_fit = n;
    Ok(stats)
}

/// Fits a single Gaussian to plain `f64` rows, reported as layer 1.
pub fn fit_rows<R: AsRef<[f64]> + Sync>(rows: &[R], lambda: f64) -> Result<LayerStats> {
    let views: Vec<&[f64]> = rows.iter().map(AsRef::as_ref).collect();
    if let Some(first) = views.first() {
        if views.iter().any(|r| r.len() != first.len()) {
            bail!(Shape, "rows have differing lengths");
        }
        if views.iter().flat_map(|r| r.iter()).any(|v| !v.is_finite()) {
            bail!(Invariant, "rows contain non-finite values");
        }
    }
    fit_gaussian(&views, 1, lambda)
}

fn mean_of<T: Copy + Into<f64>>(rows: &[&[T]], d: usize) -> Vec<f64> {
    let mut mean = vec![0.0; d];
    for row in rows {
        for (m, &v) in mean.iter_mut().zip(row.iter()) {
            *m += v.into();
        }
    }
    let n = rows.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    mean
}

/// Centered scatter matrix `Σ (x - mean)(x - mean)ᵀ`, full symmetric, row-major.
fn scatter<T: Copy + Into<f64> + Sync>(rows: &[&[T]], mean: &[f64]) -> Vec<f64> {
    let d = mean.len();
    let centered: Vec<f64> = rows
        .iter()
        .flat_map(|row| row.iter().zip(mean).map(|(&v, m)| v.into() - m))
        .collect();
    let mut out = vec![0.0; d * d];
    out.par_chunks_mut(d).enumerate().for_each(|(i, out_row)| {
        for sample in centered.chunks_exact(d) {
            let xi = sample[i];
            if xi == 0.0 {
                continue;
            }
            for (o, &xj) in out_row[..=i].iter_mut().zip(sample) {
                *o += xi * xj;
            }
        }
    });
    for i in 0..d {
        for j in 0..i {
            out[j * d + i] = out[i * d + j];
        }
    }
    out
}

/// `n x L` matrix of per-layer squared Mahalanobis distances.
pub fn mdf_features(all_stats: &[LayerStats], embeddings: &EmbeddingSet) -> Result<FeatureMatrix> {
    check_layers(all_stats.len(), embeddings)?;
    for s in all_stats {
        if s.dim() != embeddings.dim() {
            bail!(
                Shape,
                "layer {} stats have dimension {}, embeddings have {}",
                s.layer_index,
                s.dim(),
                embeddings.dim()
            );
        }
    }
    let layers = embeddings.layers();
    let data = per_sample(embeddings, layers, |i, out| {
        for (l, s) in all_stats.iter().enumerate() {
            out[l] = s.mahalanobis(embeddings.vector(i, l + 1))?;
        }
        Ok(())
    })?;
    FeatureMatrix::new(embeddings.ids().to_vec(), layers, data)
}

/// `n x L` matrix of per-layer squared Euclidean distances to the layer means.
pub fn edf_features(all_means: &[Vec<f64>], embeddings: &EmbeddingSet) -> Result<FeatureMatrix> {
    check_layers(all_means.len(), embeddings)?;
    if let Some(m) = all_means.iter().find(|m| m.len() != embeddings.dim()) {
        bail!(
            Shape,
            "mean has dimension {}, embeddings have {}",
            m.len(),
            embeddings.dim()
        );
    }
    let layers = embeddings.layers();
    let data = per_sample(embeddings, layers, |i, out| {
        for (l, mean) in all_means.iter().enumerate() {
            out[l] = embeddings
                .vector(i, l + 1)
                .iter()
                .zip(mean)
                .map(|(&v, m)| (f64::from(v) - m).powi(2))
                .sum();
        }
        Ok(())
    })?;
    FeatureMatrix::new(embeddings.ids().to_vec(), layers, data)
}

fn check_layers(count: usize, embeddings: &EmbeddingSet) -> Result<()> {
    if count != embeddings.layers() {
        bail!(
            Shape,
            "have statistics for {count} layers, embeddings have {}",
            embeddings.layers()
        );
    }
    Ok(())
}

fn per_sample<F>(embeddings: &EmbeddingSet, width: usize, f: F) -> Result<Vec<f64>>
where
    F: Fn(usize, &mut [f64]) -> Result<()> + Sync,
{
    let mut data = vec![0.0; embeddings.len() * width];
    data.par_chunks_mut(width)
        .enumerate()
        .try_for_each(|(i, out)| f(i, out))?;
    Ok(data)
}
