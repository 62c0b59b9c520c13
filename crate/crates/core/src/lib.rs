//! Out-of-domain detection from unlabeled in-domain data using layer-wise
//! transformer embeddings.
//!
//! The main detector fits a Gaussian (mean and regularized covariance) to every
//! layer of the in-domain embeddings, turns each sample into the vector of its
//! per-layer squared Mahalanobis distances, and fits a linear one-class SVM on
//! those vectors. Baselines (single layer, pooled layers, Euclidean distances,
//! TF-IDF + SVD, maximum softmax probability) and ranking metrics (AUROC,
//! DTACC, AUIN, AUOUT) live alongside it.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod detectors;
pub mod error;
pub mod features;
pub mod linalg;
pub mod metrics;
pub mod ocsvm;
pub mod stats;
pub mod store;
pub mod synth;
pub mod tfidf;

pub use detectors::{
    fit_detector, fit_text_detector, load_model, msp_scores, save_model, sweep_layers, DetectorModel,
    DetectorSpec, LayerSweepRow, Method,
};
pub use error::{Error, Result};
pub use features::{FeatureMatrix, Standardize, Standardizer};
pub use metrics::{EvalReport, LabeledScores};
pub use ocsvm::{Kernel, OcSvmModel, ResolvedKernel, SolverConfig};
pub use stats::{edf_features, fit_all_layers, fit_layer_stats, fit_rows, mdf_features, LayerStats};
pub use store::{
    read_embeddings, read_labels, read_logits, read_scores, write_embeddings, write_labels, write_logits,
    write_scores, Domain, EmbeddingSet, LabelSet, LogitSet, Pooling, ScoreSet,
};
pub use synth::{SynthConfig, SynthData};
