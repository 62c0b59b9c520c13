//! Fixtures shared by the benchmarks.

use ood_core::{synth, FeatureMatrix, LabeledScores, SynthConfig, SynthData};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Synthetic embeddings with `layers` layers of width `dim`.
pub fn embeddings(layers: usize, dim: usize, n_train: usize) -> SynthData {
    synth::generate(&SynthConfig {
        n_train,
        n_in: n_train / 2,
        n_out: n_train / 2,
        layers,
        dim,
        signal_layers: vec![layers.div_ceil(2)],
        ..SynthConfig::default()
    })
    .expect("valid synth config")
}

/// Uniform random feature rows in `[0, 1)`.
pub fn features(rows: usize, cols: usize, seed: u64) -> FeatureMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..rows * cols).map(|_| rng.random::<f64>()).collect();
    let ids = (0..rows).map(|i| i.to_string()).collect();
    FeatureMatrix::new(ids, cols, data).expect("consistent shape")
}

/// Scores with shifted out-of-domain values.
pub fn labeled_scores(n: usize, seed: u64) -> LabeledScores {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ins = (0..n).map(|_| rng.random::<f64>()).collect();
    let outs = (0..n).map(|_| rng.random::<f64>() + 0.3).collect();
    LabeledScores::new(ins, outs).expect("non-empty")
}
