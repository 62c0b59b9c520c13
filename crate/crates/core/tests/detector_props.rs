mod common;

use std::io::Cursor;

use ood_core::detectors::{fit_text_detector, msp_scores};
use ood_core::metrics::{self, LabeledScores};
use ood_core::ocsvm::{self, SolverConfig};
use ood_core::synth::{self, SynthData};
use ood_core::*;
use rand::Rng;

fn small_synth(seed: u64) -> SynthData {
    synth::generate(&SynthConfig {
        n_train: 200,
        n_in: 60,
        n_out: 60,
        layers: 4,
        dim: 6,
        signal_layers: vec![2],
        shift: 3.0,
        anisotropy: 6.0,
        seed,
    })
    .unwrap()
}

fn auroc(scores: &ScoreSet, labels: &LabelSet) -> f64 {
    metrics::auroc(&LabeledScores::join(scores, labels).unwrap())
}

#[test]
fn shifting_test_samples_raises_mdf_scores() {
    let data = small_synth(1);
    let model = fit_detector(&data.train, &DetectorSpec::new(Method::Mdf)).unwrap();
    let base = model.score_all(&data.test).unwrap();
    let moved = data.test.map_values(|v| v + 25.0).unwrap();
    let after = model.score_all(&moved).unwrap();
    let mean = |s: &ScoreSet| s.values().sum::<f64>() / s.len() as f64;
    assert!(mean(&after) > mean(&base));
}

#[test]
fn mdf_scores_ignore_global_rescaling() {
    let data = small_synth(2);
    let spec = DetectorSpec::new(Method::Mdf);
    let a = fit_detector(&data.train, &spec).unwrap().score_all(&data.test).unwrap();
    let scale = |v: f32| v * 8.0;
    let train = data.train.map_values(scale).unwrap();
    let test = data.test.map_values(scale).unwrap();
    let b = fit_detector(&train, &spec).unwrap().score_all(&test).unwrap();
    for ((_, x), (_, y)) in a.iter().zip(b.iter()) {
        assert!((x - y).abs() <= 1e-6 * (1.0 + x.abs()), "{x} vs {y}");
    }
}

#[test]
fn positive_feature_scaling_keeps_linear_rankings() {
    let mut r = common::rng(5);
    let rows: Vec<Vec<f64>> = (0..80)
        .map(|_| (0..4).map(|_| common::normal(&mut r).abs() + 1.0).collect())
        .collect();
    let scales = [0.1, 3.0, 7.5, 1.0];
    let scaled: Vec<Vec<f64>> = rows.iter().map(|x| x.iter().zip(&scales).map(|(a, b)| a * b).collect()).collect();
    let config = SolverConfig {
        standardize: Standardize::Scale,
        ..SolverConfig::linear(0.2)
    };
    let m1 = ocsvm::fit(&FeatureMatrix::from_rows(&rows).unwrap(), &config).unwrap();
    let m2 = ocsvm::fit(&FeatureMatrix::from_rows(&scaled).unwrap(), &config).unwrap();
    for (x, y) in rows.iter().zip(&scaled) {
        let (a, b) = (m1.decision(x).unwrap(), m2.decision(y).unwrap());
        assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
    }
}

#[test]
fn mdf_beats_euclidean_on_anisotropic_layers() {
    let data = small_synth(3);
    let mdf = fit_detector(&data.train, &DetectorSpec::new(Method::Mdf)).unwrap();
    let edf = fit_detector(&data.train, &DetectorSpec::new(Method::Edf)).unwrap();
    let a = auroc(&mdf.score_all(&data.test).unwrap(), &data.labels);
    let b = auroc(&edf.score_all(&data.test).unwrap(), &data.labels);
    assert!(a > 0.7, "{a}");
    assert!(a > b, "{a} vs {b}");
}

#[test]
fn every_embedding_method_round_trips_through_json() {
    let data = small_synth(4);
    let methods = [
        Method::Mdf,
        Method::Edf,
        Method::SingleLayer(2),
        Method::MeanPool,
        Method::MaxPool,
        Method::Concat,
    ];
    for method in methods {
        let model = fit_detector(&data.train, &DetectorSpec::new(method)).unwrap();
        let mut buf = Vec::new();
        save_model(&model, &mut buf).unwrap();
        let back = load_model(Cursor::new(&buf)).unwrap();
        assert_eq!(back, model, "{}", method.name());
        let a = model.score_all(&data.test).unwrap();
        let b = back.score_all(&data.test).unwrap();
        for ((_, x), (_, y)) in a.iter().zip(b.iter()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        let mut again = Vec::new();
        save_model(&back, &mut again).unwrap();
        assert_eq!(buf, again);
    }
}

#[test]
fn model_loading_rejects_bad_files() {
    let data = small_synth(5);
    let model = fit_detector(&data.train, &DetectorSpec::new(Method::Mdf)).unwrap();
    let mut buf = Vec::new();
    save_model(&model, &mut buf).unwrap();
    let mut value: serde_json::Value = serde_json::from_slice(&buf).unwrap();
    value["version"] = 99.into();
    let err = load_model(Cursor::new(value.to_string())).unwrap_err();
    assert!(matches!(err, Error::UnsupportedVersion(99)));
    let mut value: serde_json::Value = serde_json::from_slice(&buf).unwrap();
    value["layers"][0]["chol"][0] = (-1.0).into();
    assert!(load_model(Cursor::new(value.to_string())).is_err());
    assert!(load_model(Cursor::new("{\"version\":1}")).is_err());
    assert!(load_model(Cursor::new("not json")).is_err());
}

#[test]
fn shape_mismatch_is_an_error() {
    let data = small_synth(6);
    let model = fit_detector(&data.train, &DetectorSpec::new(Method::Mdf)).unwrap();
    let other = synth::generate(&SynthConfig {
        n_train: 20,
        n_in: 3,
        n_out: 3,
        layers: 4,
        dim: 5,
        signal_layers: vec![],
        ..SynthConfig::default()
    })
    .unwrap();
    assert!(matches!(model.score_all(&other.test), Err(Error::Shape(_))));
}

#[test]
fn fitting_is_deterministic() {
    let data = small_synth(7);
    for method in [Method::Mdf, Method::MeanPool] {
        let spec = DetectorSpec::new(method);
        let a = fit_detector(&data.train, &spec).unwrap();
        let b = fit_detector(&data.train, &spec).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn layer_sweep_returns_one_row_per_layer() {
    let data = small_synth(8);
    let rows = sweep_layers(&data.train, &data.test, &data.labels, &DetectorSpec::new(Method::SingleLayer(1)).solver).unwrap();
    assert_eq!(rows.iter().map(|r| r.layer).collect::<Vec<_>>(), vec![1, 2, 3, 4]);
    let best = rows.iter().max_by(|a, b| a.auroc.total_cmp(&b.auroc)).unwrap();
    assert_eq!(best.layer, 2);
}

#[test]
fn binary_msp_rankings_ignore_temperature() {
    let mut r = common::rng(9);
    let mut logits = LogitSet::new();
    let mut labels = LabelSet::new();
    for i in 0..100 {
        let out = i % 3 == 0;
        let margin = if out { 0.5 } else { 3.0 };
        let h = vec![margin * common::normal(&mut r), common::normal(&mut r)];
        logits.insert(format!("q{i}"), h).unwrap();
        labels.insert(format!("q{i}"), if out { Domain::Out } else { Domain::In }, None).unwrap();
    }
    let reference = auroc(&msp_scores(&logits, 1.0).unwrap(), &labels);
    for t in [0.5, 10.0, 1e6] {
        let a = auroc(&msp_scores(&logits, t).unwrap(), &labels);
        assert!((a - reference).abs() <= 1e-12, "T={t}: {a} vs {reference}");
    }
}

fn sentence(r: &mut impl Rng, words: &[&str]) -> String {
    (0..8).map(|_| words[r.random_range(0..words.len())]).collect::<Vec<_>>().join(" ")
}

#[test]
fn tfidf_detector_separates_topics() {
    let travel = ["flight", "hotel", "booking", "airport", "seat", "luggage", "trip", "gate"];
    let bank = ["account", "balance", "transfer", "deposit", "card", "loan", "credit", "fee"];
    let mut r = common::rng(10);
    let train: Vec<String> = (0..60).map(|_| sentence(&mut r, &travel)).collect();
    let ids: Vec<String> = (0..60).map(|i| format!("t{i}")).collect();
    let model = fit_text_detector(&ids, &train, &DetectorSpec::new(Method::TfidfSvd(4))).unwrap();
    let mut test = Vec::new();
    let mut test_ids = Vec::new();
    let mut labels = LabelSet::new();
    for i in 0..40 {
        let out = i % 2 == 1;
        test.push(sentence(&mut r, if out { &bank } else { &travel }));
        test_ids.push(format!("x{i}"));
        labels.insert(format!("x{i}"), if out { Domain::Out } else { Domain::In }, None).unwrap();
    }
    let scores = model.score_texts(&test_ids, &test).unwrap();
    assert!(auroc(&scores, &labels) > 0.95);
    let mut buf = Vec::new();
    save_model(&model, &mut buf).unwrap();
    let back = load_model(Cursor::new(&buf)).unwrap();
    let again = back.score_texts(&test_ids, &test).unwrap();
    assert_eq!(scores, again);
    assert!(model.score_all(&small_synth(0).test).is_err());
}
