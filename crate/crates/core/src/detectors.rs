//! Named detectors: a feature construction followed by a one-class SVM, plus
//! the MSP score over classifier logits. Also owns model persistence.
//!
//! Score orientation is "higher = more out-of-domain" for every method. For the
//! distance-feature methods (`mdf`, `edf`) the score is
//! `I(x) = <w, M(x)> - R²` with `w = w_std >= 0` and `R² = rho`, i.e. the
//! one-class SVM decision value: a larger distance on any layer with positive
//! weight raises the score. Methods on raw embeddings or TF-IDF projections use
//! the usual outlier score `rho - Σ α_i k(x_i, x)`.

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{bail, Error, Result};
use crate::features::{FeatureMatrix, Standardize};
use crate::metrics::{self, EvalReport, LabeledScores};
use crate::ocsvm::{self, Kernel, OcSvmModel, SolverConfig};
use crate::stats::{self, LayerStats, DEFAULT_LAMBDA};
use crate::store::{Domain, EmbeddingSet, LabelSet, LogitSet, ScoreSet};
use crate::tfidf::{self, SvdProjection, Vocabulary};

pub const MODEL_VERSION: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Per-layer squared Mahalanobis distances (`n x L`).
    Mdf,
    /// Per-layer squared Euclidean distances to the layer mean (`n x L`).
    Edf,
    /// Raw vectors of one 1-based layer (`n x d`).
    SingleLayer(usize),
    /// Element-wise mean over layers (`n x d`).
    MeanPool,
    /// Element-wise maximum over layers (`n x d`).
    MaxPool,
    /// All layers concatenated (`n x L·d`).
    Concat,
    /// TF-IDF of raw text reduced to `k` SVD components.
    TfidfSvd(usize),
}

impl Method {
    fn is_distance(self) -> bool {
        matches!(self, Method::Mdf | Method::Edf)
    }

    pub fn name(self) -> String {
        match self {
            Method::Mdf => "mdf".into(),
            Method::Edf => "edf".into(),
            Method::SingleLayer(l) => format!("single_layer({l})"),
            Method::MeanPool => "mean_pool".into(),
            Method::MaxPool => "max_pool".into(),
            Method::Concat => "concat".into(),
            Method::TfidfSvd(k) => format!("tfidf_svd({k})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSpec {
    pub method: Method,
    pub solver: SolverConfig,
    /// Covariance ridge, relative to the mean per-dimension variance.
    pub lambda: f64,
}

impl DetectorSpec {
    /// Method defaults: distance features get a linear kernel with per-column
    /// scaling, everything else an RBF kernel with automatic bandwidth.
    pub fn new(method: Method) -> Self {
        let solver = if method.is_distance() {
            SolverConfig {
                standardize: Standardize::Scale,
                ..SolverConfig::linear(ocsvm::DEFAULT_NU)
            }
        } else {
            SolverConfig::rbf(ocsvm::DEFAULT_NU, None)
        };
        Self {
            method,
            solver,
            lambda: DEFAULT_LAMBDA,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.solver.validate()?;
        match self.method {
            Method::SingleLayer(0) => bail!(Config, "single_layer index is 1-based"),
            Method::TfidfSvd(0) => bail!(Config, "tfidf_svd needs k >= 1"),
            _ => {}
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            bail!(Config, "lambda must be finite and >= 0, got {}", self.lambda);
        }
        Ok(())
    }
}

/// Per-layer statistics as stored in the model file; `chol` is absent for EDF.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredLayer {
    pub layer_index: usize,
    pub mean: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chol: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    pub n_fit: usize,
}

impl From<LayerStats> for StoredLayer {
    fn from(s: LayerStats) -> Self {
        Self {
            layer_index: s.layer_index,
            mean: s.mean,
            chol: Some(s.chol),
            lambda: Some(s.lambda),
            n_fit: s.n_fit,
        }
    }
}

impl StoredLayer {
    fn to_stats(&self) -> Result<LayerStats> {
        let d = self.mean.len();
        let chol = self
            .chol
            .clone()
            .ok_or_else(|| Error::Format(format!("layer {} has no covariance factor", self.layer_index)))?;
        if chol.len() != d * d {
            bail!(Format, "layer {} factor has {} entries, expected {}", self.layer_index, chol.len(), d * d);
        }
        if (0..d).any(|i| !(chol[i * d + i] > 0.0)) {
            bail!(Format, "layer {} factor has a nonpositive diagonal", self.layer_index);
        }
        Ok(LayerStats {
            layer_index: self.layer_index,
            mean: self.mean.clone(),
            chol,
            lambda: self.lambda.unwrap_or(0.0),
            n_fit: self.n_fit,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputShape {
    pub layers: usize,
    pub dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextProjection {
    pub vocabulary: Vocabulary,
    #[serde(flatten)]
    pub projection: SvdProjection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorModel {
    pub version: u64,
    pub spec: DetectorSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<InputShape>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub layers: Vec<StoredLayer>,
    pub ocsvm: OcSvmModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub svd: Option<TextProjection>,
}

fn slice_features(emb: &EmbeddingSet, width: usize, f: impl Fn(usize, &mut [f64]) + Sync) -> Result<FeatureMatrix> {
    let mut data = vec![0.0; emb.len() * width];
    data.par_chunks_mut(width).enumerate().for_each(|(i, out)| f(i, out));
    FeatureMatrix::new(emb.ids().to_vec(), width, data)
}

fn embedding_features(method: Method, layers: &[StoredLayer], emb: &EmbeddingSet) -> Result<FeatureMatrix> {
    let (l_count, d) = (emb.layers(), emb.dim());
    match method {
        Method::Mdf => {
            let stats: Vec<LayerStats> = layers.iter().map(StoredLayer::to_stats).collect::<Result<_>>()?;
            stats::mdf_features(&stats, emb)
        }
        Method::Edf => {
            let means: Vec<Vec<f64>> = layers.iter().map(|l| l.mean.clone()).collect();
            stats::edf_features(&means, emb)
        }
        Method::SingleLayer(layer) => {
            if layer == 0 || layer > l_count {
                bail!(Config, "layer {layer} outside 1..={l_count}");
            }
            slice_features(emb, d, |i, out| {
                for (o, &v) in out.iter_mut().zip(emb.vector(i, layer)) {
                    *o = f64::from(v);
                }
            })
        }
        Method::MeanPool => slice_features(emb, d, |i, out| {
            for l in 1..=l_count {
                for (o, &v) in out.iter_mut().zip(emb.vector(i, l)) {
                    *o += f64::from(v);
                }
            }
            out.iter_mut().for_each(|o| *o /= l_count as f64);
        }),
        Method::MaxPool => slice_features(emb, d, |i, out| {
            out.fill(f64::NEG_INFINITY);
            for l in 1..=l_count {
                for (o, &v) in out.iter_mut().zip(emb.vector(i, l)) {
                    *o = o.max(f64::from(v));
                }
            }
        }),
        Method::Concat => slice_features(emb, l_count * d, |i, out| {
            for (o, &v) in out.iter_mut().zip(emb.sample(i)) {
                *o = f64::from(v);
            }
        }),
        Method::TfidfSvd(_) => bail!(Config, "tfidf_svd detectors take raw text, not embeddings"),
    }
}

/// Fits a detector on in-domain embeddings.
pub fn fit_detector(train: &EmbeddingSet, spec: &DetectorSpec) -> Result<DetectorModel> {
    spec.validate()?;
    let layers: Vec<StoredLayer> = match spec.method {
        Method::Mdf => stats::fit_all_layers(train, spec.lambda)?
            .into_iter()
            .map(StoredLayer::from)
            .collect(),
        Method::Edf => (1..=train.layers())
            .map(|l| {
                let rows: Vec<&[f32]> = (0..train.len()).map(|i| train.vector(i, l)).collect();
                StoredLayer {
                    layer_index: l,
                    mean: column_mean(&rows),
                    chol: None,
                    lambda: None,
                    n_fit: train.len(),
                }
            })
            .collect(),
        _ => Vec::new(),
    };
    let features = embedding_features(spec.method, &layers, train)?;
    let ocsvm = ocsvm::fit(&features, &spec.solver)?;
    Ok(DetectorModel {
        version: MODEL_VERSION,
        spec: spec.clone(),
        input: Some(InputShape {
            layers: train.layers(),
            dim: train.dim(),
        }),
        layers,
        ocsvm,
        svd: None,
    })
}

fn column_mean(rows: &[&[f32]]) -> Vec<f64> {
    let d = rows[0].len();
    let mut mean = vec![0.0; d];
    for r in rows {
        for (m, &v) in mean.iter_mut().zip(r.iter()) {
            *m += f64::from(v);
        }
    }
    mean.iter_mut().for_each(|m| *m /= rows.len() as f64);
    mean
}

/// Fits the TF-IDF + SVD baseline on in-domain documents.
pub fn fit_text_detector<S: AsRef<str> + Sync>(ids: &[String], texts: &[S], spec: &DetectorSpec) -> Result<DetectorModel> {
    spec.validate()?;
    let Method::TfidfSvd(k) = spec.method else {
        bail!(Config, "text detectors require the tfidf_svd method");
    };
    if ids.len() != texts.len() {
        bail!(Shape, "{} ids for {} documents", ids.len(), texts.len());
    }
    let vocabulary = tfidf::fit_tfidf(texts)?;
    let matrix = vocabulary.transform(texts);
    let projection = tfidf::fit_svd(&matrix, k)?;
    let features = projection.project(&matrix, ids.to_vec())?;
    let ocsvm = ocsvm::fit(&features, &spec.solver)?;
    Ok(DetectorModel {
        version: MODEL_VERSION,
        spec: spec.clone(),
        input: None,
        layers: Vec::new(),
        ocsvm,
        svd: Some(TextProjection { vocabulary, projection }),
    })
}

impl DetectorModel {
    fn check_version(&self) -> Result<()> {
        if self.version != MODEL_VERSION {
            return Err(Error::UnsupportedVersion(self.version));
        }
        Ok(())
    }

    fn score_features(&self, features: &FeatureMatrix) -> Result<ScoreSet> {
        let distance = self.spec.method.is_distance();
        let scores: Vec<f64> = (0..features.rows())
            .into_par_iter()
            .map(|i| {
                let row = features.row(i);
                if distance {
                    self.ocsvm.decision(row)
                } else {
                    self.ocsvm.anomaly_score(row)
                }
            })
            .collect::<Result<_>>()?;
        ScoreSet::from_pairs(features.ids().iter().cloned().zip(scores))
    }

    /// Anomaly score per test sample; higher is more out-of-domain.
    pub fn score_all(&self, test: &EmbeddingSet) -> Result<ScoreSet> {
        self.check_version()?;
        let Some(shape) = self.input else {
            bail!(Config, "{} model scores raw text, not embeddings", self.spec.method.name());
        };
        if test.layers() != shape.layers || test.dim() != shape.dim {
            bail!(
                Shape,
                "model expects L={} d={}, embeddings have L={} d={}",
                shape.layers,
                shape.dim,
                test.layers(),
                test.dim()
            );
        }
        let features = embedding_features(self.spec.method, &self.layers, test)?;
        self.score_features(&features)
    }

    pub fn score_texts<S: AsRef<str> + Sync>(&self, ids: &[String], texts: &[S]) -> Result<ScoreSet> {
        self.check_version()?;
        let Some(svd) = &self.svd else {
            bail!(Config, "{} model scores embeddings, not raw text", self.spec.method.name());
        };
        if ids.len() != texts.len() {
            bail!(Shape, "{} ids for {} documents", ids.len(), texts.len());
        }
        let matrix = svd.vocabulary.transform(texts);
        let features = svd.projection.project(&matrix, ids.to_vec())?;
        self.score_features(&features)
    }
}

pub fn save_model<W: Write>(model: &DetectorModel, mut sink: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut sink, model)?;
    sink.write_all(b"\n")?;
    sink.flush()?;
    Ok(())
}

pub fn load_model<R: Read>(source: R) -> Result<DetectorModel> {
    let value: serde_json::Value = serde_json::from_reader(source)?;
    match value.get("version").and_then(serde_json::Value::as_u64) {
        Some(MODEL_VERSION) => {}
        Some(v) => return Err(Error::UnsupportedVersion(v)),
        None => bail!(Format, "model file has no numeric \"version\""),
    }
    let mut model: DetectorModel = serde_json::from_value(value)?;
    if let Some(svd) = &mut model.svd {
        svd.vocabulary.reindex();
    }
    validate_loaded(&model)?;
    Ok(model)
}

fn validate_loaded(model: &DetectorModel) -> Result<()> {
    model.spec.validate()?;
    let svm = &model.ocsvm;
    let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
    if !svm.rho.is_finite()
        || !finite(&svm.alphas)
        || !svm.support.iter().all(|r| finite(r))
        || !svm.w_std.as_deref().is_none_or(finite)
        || svm.support_indices.iter().any(|&i| i >= svm.alphas.len())
        || svm.support.len() != svm.support_indices.len()
    {
        bail!(Format, "corrupted one-class SVM fields");
    }
    match (model.spec.method, &model.input, &model.svd) {
        (Method::TfidfSvd(_), None, Some(_)) => {}
        (Method::TfidfSvd(_), _, _) => bail!(Format, "tfidf_svd model needs an svd block and no input shape"),
        (m, Some(shape), None) => {
            let need_layers = m.is_distance();
            if need_layers && model.layers.len() != shape.layers {
                bail!(Format, "expected {} layer entries, found {}", shape.layers, model.layers.len());
            }
            if model.layers.iter().any(|l| l.mean.len() != shape.dim || !finite(&l.mean)) {
                bail!(Format, "corrupted layer means");
            }
            if m == Method::Mdf {
                for l in &model.layers {
                    let s = l.to_stats()?;
                    if !finite(&s.chol) {
                        bail!(Format, "corrupted covariance factor");
                    }
                }
            }
        }
        _ => bail!(Format, "embedding model needs an input shape and no svd block"),
    }
    Ok(())
}

/// `-max_i softmax(h / T)_i`, so that higher means more out-of-domain.
pub fn msp_score(logits: &[f64], temperature: f64) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let denom: f64 = logits.iter().map(|h| ((h - max) / temperature).exp()).sum();
    -1.0 / denom
}

pub fn msp_scores(logits: &LogitSet, temperature: f64) -> Result<ScoreSet> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        bail!(Config, "temperature must be a positive finite number, got {temperature}");
    }
    ScoreSet::from_pairs(logits.iter().map(|(id, h)| (id, msp_score(h, temperature))))
}

impl DetectorModel {
    pub fn decide(&self, scores: &ScoreSet, epsilon: f64) -> Vec<(String, Domain)> {
        scores
            .iter()
            .map(|(id, s)| (id.to_owned(), ocsvm::decide(s, epsilon)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSweepRow {
    pub layer: usize,
    pub auroc: f64,
    pub dtacc: f64,
    pub auin: f64,
    pub auout: f64,
}

/// Fits and evaluates a `single_layer(l)` detector for every layer, bottom to top.
pub fn sweep_layers(
    train: &EmbeddingSet,
    test: &EmbeddingSet,
    labels: &LabelSet,
    solver: &SolverConfig,
) -> Result<Vec<LayerSweepRow>> {
    (1..=train.layers())
        .map(|layer| {
            let spec = DetectorSpec {
                method: Method::SingleLayer(layer),
                solver: solver.clone(),
                lambda: DEFAULT_LAMBDA,
            };
            let model = fit_detector(train, &spec)?;
            let scores = model.score_all(test)?;
            let ls = LabeledScores::join(&scores, labels)?;
            Ok(LayerSweepRow {
                layer,
                auroc: metrics::auroc(&ls),
                dtacc: metrics::dtacc(&ls),
                auin: metrics::aupr(&ls, Domain::In),
                auout: metrics::aupr(&ls, Domain::Out),
            })
        })
        .collect()
}

/// Scores `test` with `model` and evaluates against `labels`.
pub fn evaluate(model: &DetectorModel, test: &EmbeddingSet, labels: &LabelSet, bins: usize) -> Result<EvalReport> {
    let scores = model.score_all(test)?;
    EvalReport::compute(&LabeledScores::join(&scores, labels)?, bins)
}

impl Default for DetectorSpec {
    fn default() -> Self {
        Self::new(Method::Mdf)
    }
}

impl DetectorSpec {
    pub fn with_kernel(mut self, kernel: Kernel) -> Self {
        self.solver.kernel = kernel;
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::Pooling;

    fn emb(layers: usize, dim: usize, rows: &[Vec<f32>]) -> EmbeddingSet {
        let ids = (0..rows.len()).map(|i| format!("s{i}")).collect();
        EmbeddingSet::new(ids, layers, dim, Pooling::Cls, rows.concat()).unwrap()
    }

    #[test]
    fn pooling_features() {
        let e = emb(2, 2, &[vec![1.0, 5.0, 3.0, 2.0]]);
        let max = embedding_features(Method::MaxPool, &[], &e).unwrap();
        assert_eq!(max.row(0), &[3.0, 5.0]);
        let mean = embedding_features(Method::MeanPool, &[], &e).unwrap();
        assert_eq!(mean.row(0), &[2.0, 3.5]);
        let cat = embedding_features(Method::Concat, &[], &e).unwrap();
        assert_eq!(cat.row(0), &[1.0, 5.0, 3.0, 2.0]);
        let single = embedding_features(Method::SingleLayer(2), &[], &e).unwrap();
        assert_eq!(single.row(0), &[3.0, 2.0]);
        assert!(embedding_features(Method::SingleLayer(3), &[], &e).is_err());
    }

    #[test]
    fn identical_layers_pool_to_any_layer() {
        let row = vec![0.5, -1.0, 2.0, 0.5, -1.0, 2.0, 0.5, -1.0, 2.0];
        let e = emb(3, 3, &[row]);
        let single = embedding_features(Method::SingleLayer(2), &[], &e).unwrap();
        assert_eq!(embedding_features(Method::MeanPool, &[], &e).unwrap().data(), single.data());
        assert_eq!(embedding_features(Method::MaxPool, &[], &e).unwrap().data(), single.data());
    }

    #[test]
    fn one_layer_reductions_agree() {
        let e = emb(1, 3, &[vec![0.5, -1.0, 2.0], vec![4.0, 0.0, -3.0]]);
        let single = embedding_features(Method::SingleLayer(1), &[], &e).unwrap();
        for method in [Method::MeanPool, Method::MaxPool, Method::Concat] {
            assert_eq!(embedding_features(method, &[], &e).unwrap().data(), single.data(), "{}", method.name());
        }
    }

    #[test]
    fn msp_hand_values() {
        assert_eq!(msp_score(&[0.0, 0.0], 1.0), -0.5);
        let e = std::f64::consts::E;
        assert!((msp_score(&[2.0, 0.0], 2.0) - (-e / (e + 1.0))).abs() < 1e-15);
        assert!((msp_score(&[2.0, 0.0], 2.0) + 0.731_058_578_6).abs() < 1e-9);
        assert!((msp_score(&[3.0, -7.0, 1.0], 1e9) + 1.0 / 3.0).abs() < 1e-6);
        let mut set = LogitSet::new();
        set.insert("a", vec![1.0, 2.0]).unwrap();
        assert!(msp_scores(&set, 0.0).is_err());
        assert!(msp_scores(&set, -1.0).is_err());
    }

    #[test]
    fn spec_validation() {
        assert!(DetectorSpec::new(Method::SingleLayer(0)).validate().is_err());
        assert!(DetectorSpec::new(Method::TfidfSvd(0)).validate().is_err());
        assert!(DetectorSpec { lambda: -1.0, ..DetectorSpec::default() }.validate().is_err());
        assert_eq!(DetectorSpec::new(Method::Mdf).solver.kernel, Kernel::Linear);
        assert_eq!(DetectorSpec::new(Method::MeanPool).solver.kernel, Kernel::Rbf { gamma: None });
    }

    #[test]
    fn method_json_shape() {
        assert_eq!(serde_json::to_string(&Method::Mdf).unwrap(), "\"mdf\"");
        assert_eq!(serde_json::to_string(&Method::SingleLayer(3)).unwrap(), "{\"single_layer\":3}");
    }
}
