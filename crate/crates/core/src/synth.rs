//! Seeded multi-layer Gaussian embeddings with out-of-domain signal confined to
//! chosen layers.
//!
//! Layer `l` of an in-domain sample is `μ_l + diag(σ_l) z`, `z ~ N(0, I)`, with
//! `σ_l` log-uniform in `[1, anisotropy]`. Out-of-domain samples are drawn the
//! same way, except that on each signal layer the mean moves by
//! `shift · mean(σ_l)` along a random unit direction.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};
use crate::store::{Domain, EmbeddingSet, LabelSet, Pooling};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    /// In-domain training samples.
    pub n_train: usize,
    /// Held-out in-domain test samples.
    pub n_in: usize,
    pub n_out: usize,
    pub layers: usize,
    pub dim: usize,
    /// 1-based layers whose mean moves for out-of-domain samples.
    pub signal_layers: Vec<usize>,
    /// Mean displacement in units of the layer's average stddev.
    pub shift: f64,
    pub anisotropy: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_train: 600,
            n_in: 300,
            n_out: 300,
            layers: 12,
            dim: 16,
            signal_layers: vec![3, 9],
            shift: 2.5,
            anisotropy: 8.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_train == 0 || self.n_in + self.n_out == 0 {
            bail!(Config, "need at least one training and one test sample");
        }
        if self.layers == 0 || self.dim == 0 {
            bail!(Config, "layers and dim must be >= 1");
        }
        if let Some(l) = self.signal_layers.iter().find(|&&l| l == 0 || l > self.layers) {
            bail!(Config, "signal layer {l} outside 1..={}", self.layers);
        }
        if !(self.shift >= 0.0) || !self.shift.is_finite() {
            bail!(Config, "shift must be finite and >= 0, got {}", self.shift);
        }
        if !(self.anisotropy >= 1.0) || !self.anisotropy.is_finite() {
            bail!(Config, "anisotropy must be finite and >= 1, got {}", self.anisotropy);
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub train: EmbeddingSet,
    pub test: EmbeddingSet,
    pub labels: LabelSet,
}

struct LayerModel {
    mean: Vec<f64>,
    scale: Vec<f64>,
    ood_offset: Vec<f64>,
}

pub fn generate(config: &SynthConfig) -> Result<SynthData> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let d = config.dim;
    let log_aniso = config.anisotropy.ln();

    let models: Vec<LayerModel> = (1..=config.layers)
        .map(|layer| {
            let mean: Vec<f64> = (0..d).map(|_| 2.0 * normal(&mut rng)).collect();
            let scale: Vec<f64> = (0..d).map(|_| (rng.random::<f64>() * log_aniso).exp()).collect();
            let mut dir: Vec<f64> = (0..d).map(|_| normal(&mut rng)).collect();
            let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
            let magnitude = if config.signal_layers.contains(&layer) {
                config.shift * scale.iter().sum::<f64>() / d as f64
            } else {
                0.0
            };
            dir.iter_mut().for_each(|v| *v *= magnitude / norm);
            LayerModel {
                mean,
                scale,
                ood_offset: dir,
            }
        })
        .collect();

    let draw = |out: bool, rng: &mut ChaCha8Rng, data: &mut Vec<f32>| {
        for m in &models {
            for k in 0..d {
                let mut v = m.mean[k] + m.scale[k] * normal(rng);
                if out {
                    v += m.ood_offset[k];
                }
                data.push(v as f32);
            }
        }
    };

    let mut train = Vec::with_capacity(config.n_train * config.layers * d);
    for _ in 0..config.n_train {
        draw(false, &mut rng, &mut train);
    }
    let train_ids = (0..config.n_train).map(|i| format!("train-{i:06}")).collect();

    let mut kinds: Vec<Domain> = std::iter::repeat_n(Domain::In, config.n_in)
        .chain(std::iter::repeat_n(Domain::Out, config.n_out))
        .collect();
    kinds.shuffle(&mut rng);
    let mut test = Vec::with_capacity(kinds.len() * config.layers * d);
    let mut labels = LabelSet::new();
    let mut test_ids = Vec::with_capacity(kinds.len());
    for (i, &kind) in kinds.iter().enumerate() {
        draw(kind == Domain::Out, &mut rng, &mut test);
        let id = format!("test-{i:06}");
        labels.insert(id.clone(), kind, None)?;
        test_ids.push(id);
    }

    Ok(SynthData {
        train: EmbeddingSet::new(train_ids, config.layers, d, Pooling::Avg, train)?,
        test: EmbeddingSet::new(test_ids, config.layers, d, Pooling::Avg, test)?,
        labels,
    })
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig {
            n_train: 20,
            n_in: 5,
            n_out: 7,
            layers: 3,
            dim: 4,
            signal_layers: vec![2],
            shift: 10.0,
            anisotropy: 4.0,
            seed: 9,
        }
    }

    #[test]
    fn shapes_and_labels() {
        let s = generate(&small()).unwrap();
        assert_eq!((s.train.len(), s.train.layers(), s.train.dim()), (20, 3, 4));
        assert_eq!(s.test.len(), 12);
        assert_eq!(s.labels.len(), 12);
        let outs = s.labels.iter().filter(|(_, e)| e.label == Domain::Out).count();
        assert_eq!(outs, 7);
        for id in s.test.ids() {
            assert!(s.labels.get(id).is_some());
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.test, b.test);
        assert_eq!(a.labels, b.labels);
        let c = generate(&SynthConfig { seed: 10, ..small() }).unwrap();
        assert_ne!(a.train, c.train);
    }

    #[test]
    fn validation() {
        assert!(SynthConfig { signal_layers: vec![4], ..small() }.validate().is_err());
        assert!(SynthConfig { anisotropy: 0.5, ..small() }.validate().is_err());
        assert!(SynthConfig { shift: -1.0, ..small() }.validate().is_err());
        assert!(SynthConfig { dim: 0, ..small() }.validate().is_err());
    }
}
