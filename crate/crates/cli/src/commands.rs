use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use ood_core::detectors::{self, DetectorModel, DetectorSpec, Method};
use ood_core::metrics::{EvalReport, LabeledScores};
use ood_core::tfidf::{self, DEFAULT_COMPONENTS};
use ood_core::{
    read_embeddings, read_labels, read_logits, read_scores, write_embeddings, write_labels, write_scores,
    EmbeddingSet, Kernel, Pooling, SolverConfig, SynthConfig,
};
use serde_json::json;

use crate::args::{
    EvalArgs, FitArgs, KernelArg, MethodArg, MspArgs, ScoreArgs, SolverArgs, SweepArgs, SynthArgs, TfidfArgs,
};
use crate::config::FileConfig;
use crate::UsageError;

const DEFAULT_BINS: usize = 20;

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn open(path: &Path) -> Result<BufReader<File>> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Ok(BufReader::new(file))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn load_embeddings(path: &Path) -> Result<EmbeddingSet> {
    read_embeddings(open(path)?).with_context(|| format!("reading {}", path.display()))
}

fn save_embeddings(set: &EmbeddingSet, path: &Path) -> Result<()> {
    write_embeddings(set, create(path)?).with_context(|| format!("writing {}", path.display()))
}

/// One document per line, with ids from `ids` or 1-based line numbers.
fn load_texts(texts: &Path, ids: Option<&Path>) -> Result<(Vec<String>, Vec<String>)> {
    let read = |p: &Path| -> Result<Vec<String>> {
        let text = fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))?;
        Ok(text.lines().map(str::to_owned).collect())
    };
    let docs = read(texts)?;
    let ids = match ids {
        Some(p) => {
            let ids = read(p)?;
            if ids.len() != docs.len() {
                bail!("{} ids in {} for {} documents", ids.len(), p.display(), docs.len());
            }
            ids
        }
        None => (1..=docs.len()).map(|i| i.to_string()).collect(),
    };
    Ok((ids, docs))
}

fn emit(summary: serde_json::Value) {
    println!("{summary}");
}

/// Layers `flags` and then `cfg` over `base`.
fn solver_config(mut base: SolverConfig, flags: &SolverArgs, cfg: &FileConfig) -> Result<SolverConfig> {
    if let Some(nu) = flags.nu.or(cfg.nu) {
        base.nu = nu;
    }
    let gamma = flags.gamma.or(cfg.gamma);
    match flags.kernel.or(cfg.kernel) {
        Some(KernelArg::Linear) => base.kernel = Kernel::Linear,
        Some(KernelArg::Rbf) => base.kernel = Kernel::Rbf { gamma: None },
        None => {}
    }
    if let Some(g) = gamma {
        match base.kernel {
            Kernel::Rbf { .. } => base.kernel = Kernel::Rbf { gamma: Some(g) },
            Kernel::Linear => return Err(usage("--gamma requires --kernel rbf")),
        }
    }
    if let Some(tol) = flags.tol.or(cfg.tol) {
        base.tol = tol;
    }
    if let Some(cap) = flags.max_iter.or(cfg.max_iter) {
        base.max_iter = Some(cap);
    }
    if let Some(s) = flags.standardize.or(cfg.standardize) {
        base.standardize = s.into();
    }
    if let Some(seed) = flags.seed.or(cfg.seed) {
        base.seed = seed;
    }
    base.validate().map_err(|e| usage(e.to_string()))?;
    Ok(base)
}

fn kernel_json(model: &DetectorModel) -> serde_json::Value {
    match model.ocsvm.kernel {
        ood_core::ResolvedKernel::Linear => json!("linear"),
        ood_core::ResolvedKernel::Rbf { gamma } => json!({ "rbf": { "gamma": gamma } }),
    }
}

pub fn fit(args: FitArgs, cfg: &FileConfig) -> Result<()> {
    let method = match args.method.or(cfg.method).ok_or_else(|| usage("--method is required"))? {
        MethodArg::Mdf => Method::Mdf,
        MethodArg::Edf => Method::Edf,
        MethodArg::SingleLayer => Method::SingleLayer(
            args.layer
                .or(cfg.layer)
                .ok_or_else(|| usage("--method single-layer requires --layer"))?,
        ),
        MethodArg::MeanPool => Method::MeanPool,
        MethodArg::MaxPool => Method::MaxPool,
        MethodArg::Concat => Method::Concat,
        MethodArg::TfidfSvd => Method::TfidfSvd(args.k.or(cfg.k).unwrap_or(DEFAULT_COMPONENTS)),
    };
    let mut spec = DetectorSpec::new(method);
    if let Some(lambda) = args.lambda.or(cfg.lambda) {
        spec.lambda = lambda;
    }
    spec.solver = solver_config(spec.solver, &args.solver, cfg)?;
    spec.validate().map_err(|e| usage(e.to_string()))?;

    let is_text = matches!(method, Method::TfidfSvd(_));
    let (model, n, layers, dim) = match (is_text, &args.train, &args.texts) {
        (true, None, Some(texts)) => {
            let (ids, docs) = load_texts(texts, args.ids.as_deref())?;
            let model = detectors::fit_text_detector(&ids, &docs, &spec)?;
            let k = model.ocsvm.dim();
            (model, docs.len(), 1, k)
        }
        (true, _, _) => return Err(usage("--method tfidf-svd takes --texts and no --train")),
        (false, Some(train), None) => {
            if args.ids.is_some() {
                return Err(usage("--ids only applies with --texts"));
            }
            let train = load_embeddings(train)?;
            eprintln!(
                "fitting {} on {} samples (L={}, d={})",
                method.name(),
                train.len(),
                train.layers(),
                train.dim()
            );
            let model = detectors::fit_detector(&train, &spec)?;
            (model, train.len(), train.layers(), train.dim())
        }
        (false, _, _) => return Err(usage(format!("--method {} takes --train and no --texts", method.name()))),
    };
    if !model.ocsvm.converged {
        eprintln!("warning: solver hit its iteration cap before reaching tol {}", spec.solver.tol);
    }
    let mut sink = create(&args.out)?;
    detectors::save_model(&model, &mut sink)?;
    sink.flush()?;
    emit(json!({
        "command": "fit",
        "method": method.name(),
        "n": n,
        "L": layers,
        "d": dim,
        "nu": spec.solver.nu,
        "kernel": kernel_json(&model),
        "converged": model.ocsvm.converged,
        "iterations": model.ocsvm.iterations,
        "support_vectors": model.ocsvm.support_indices.len(),
        "rho": model.ocsvm.rho,
        "model": args.out.display().to_string(),
    }));
    Ok(())
}

pub fn score(args: ScoreArgs) -> Result<()> {
    if args.input.is_none() && args.texts.is_none() {
        return Err(usage("score needs --input or --texts"));
    }
    let model = detectors::load_model(open(&args.model)?).with_context(|| format!("reading {}", args.model.display()))?;
    let scores = match (&args.input, &args.texts) {
        (Some(input), _) => model.score_all(&load_embeddings(input)?)?,
        (None, Some(texts)) => {
            let (ids, docs) = load_texts(texts, args.ids.as_deref())?;
            model.score_texts(&ids, &docs)?
        }
        (None, None) => unreachable!("checked above"),
    };
    let mut sink = create(&args.out)?;
    write_scores(&scores, &mut sink)?;
    sink.flush()?;
    eprintln!("scored {} samples with {}", scores.len(), model.spec.method.name());
    emit(json!({
        "command": "score",
        "method": model.spec.method.name(),
        "n": scores.len(),
        "scores": args.out.display().to_string(),
    }));
    Ok(())
}

fn metrics_json(r: &EvalReport) -> serde_json::Value {
    json!({
        "auroc": r.auroc,
        "dtacc": r.dtacc,
        "auin": r.auin,
        "auout": r.auout,
        "n_in": r.n_in,
        "n_out": r.n_out,
    })
}

pub fn eval(args: EvalArgs, cfg: &FileConfig) -> Result<()> {
    let bins = args.bins.or(cfg.bins).unwrap_or(DEFAULT_BINS);
    if bins == 0 {
        return Err(usage("--bins must be >= 1"));
    }
    let scores = read_scores(open(&args.scores)?).with_context(|| format!("reading {}", args.scores.display()))?;
    let labels = read_labels(open(&args.labels)?).with_context(|| format!("reading {}", args.labels.display()))?;
    let joined = LabeledScores::join(&scores, &labels)?;
    let report = EvalReport::compute(&joined, bins)?;

    fs::create_dir_all(&args.out_dir).with_context(|| format!("cannot create {}", args.out_dir.display()))?;
    let metrics = metrics_json(&report);
    let mut sink = create(&args.out_dir.join("metrics.json"))?;
    serde_json::to_writer_pretty(&mut sink, &metrics)?;
    sink.write_all(b"\n")?;
    sink.flush()?;
    report.write_roc_csv(create(&args.out_dir.join("roc.csv"))?)?;
    report.write_histogram_csv(create(&args.out_dir.join("hist.csv"))?)?;
    eprintln!(
        "AUROC {:.4}  DTACC {:.4}  AUIN {:.4}  AUOUT {:.4}  ({} in, {} out)",
        report.auroc, report.dtacc, report.auin, report.auout, report.n_in, report.n_out
    );
    emit(metrics);
    Ok(())
}

pub fn sweep_layers(args: SweepArgs, cfg: &FileConfig) -> Result<()> {
    let base = DetectorSpec::new(Method::SingleLayer(1)).solver;
    let solver = solver_config(base, &args.solver, cfg)?;
    let train = load_embeddings(&args.train)?;
    let test = load_embeddings(&args.test)?;
    let labels = read_labels(open(&args.labels)?).with_context(|| format!("reading {}", args.labels.display()))?;
    let rows = detectors::sweep_layers(&train, &test, &labels, &solver)?;

    let mut writer = csv::Writer::from_writer(create(&args.out)?);
    for row in &rows {
        writer.serialize(row)?;
        eprintln!("layer {:>3}  AUROC {:.4}  DTACC {:.4}", row.layer, row.auroc, row.dtacc);
    }
    writer.flush()?;
    let best = rows
        .iter()
        .max_by(|a, b| a.auroc.total_cmp(&b.auroc).then(b.layer.cmp(&a.layer)))
        .context("no layers to sweep")?;
    emit(json!({
        "command": "sweep-layers",
        "layers": rows.len(),
        "best_layer": best.layer,
        "best_auroc": best.auroc,
        "table": args.out.display().to_string(),
    }));
    Ok(())
}

pub fn synth(args: SynthArgs, cfg: &FileConfig) -> Result<()> {
    let d = SynthConfig::default();
    let config = SynthConfig {
        n_train: args.n_train.or(cfg.n_train).unwrap_or(d.n_train),
        n_in: args.n_in.or(cfg.n_in).unwrap_or(d.n_in),
        n_out: args.n_out.or(cfg.n_out).unwrap_or(d.n_out),
        layers: args.layers.or(cfg.layers).unwrap_or(d.layers),
        dim: args.dim.or(cfg.dim).unwrap_or(d.dim),
        signal_layers: args.signal_layers.or_else(|| cfg.signal_layers.clone()).unwrap_or(d.signal_layers),
        shift: args.shift.or(cfg.shift).unwrap_or(d.shift),
        anisotropy: args.anisotropy.or(cfg.anisotropy).unwrap_or(d.anisotropy),
        seed: args.seed.or(cfg.seed).unwrap_or(d.seed),
    };
    config.validate().map_err(|e| usage(e.to_string()))?;
    let data = ood_core::synth::generate(&config)?;
    fs::create_dir_all(&args.out_dir).with_context(|| format!("cannot create {}", args.out_dir.display()))?;
    save_embeddings(&data.train, &args.out_dir.join("train.leb"))?;
    save_embeddings(&data.test, &args.out_dir.join("test.leb"))?;
    let mut sink = create(&args.out_dir.join("labels.jsonl"))?;
    write_labels(&data.labels, &mut sink)?;
    sink.flush()?;
    emit(json!({
        "command": "synth",
        "n_train": config.n_train,
        "n_in": config.n_in,
        "n_out": config.n_out,
        "L": config.layers,
        "d": config.dim,
        "signal_layers": config.signal_layers,
        "shift": config.shift,
        "anisotropy": config.anisotropy,
        "seed": config.seed,
        "out_dir": args.out_dir.display().to_string(),
    }));
    Ok(())
}

fn one_layer_set(ids: Vec<String>, features: &ood_core::FeatureMatrix) -> Result<EmbeddingSet> {
    let data = features.data().iter().map(|&v| v as f32).collect();
    Ok(EmbeddingSet::new(ids, 1, features.cols(), Pooling::Avg, data)?)
}

pub fn tfidf(args: TfidfArgs, cfg: &FileConfig) -> Result<()> {
    let k = args.k.or(cfg.k).unwrap_or(DEFAULT_COMPONENTS);
    if k == 0 {
        return Err(usage("--k must be >= 1"));
    }
    let (ids, docs) = load_texts(&args.texts, args.ids.as_deref())?;
    let vocab = tfidf::fit_tfidf(&docs)?;
    let matrix = vocab.transform(&docs);
    let svd = tfidf::fit_svd(&matrix, k)?;
    let fitted = svd.project(&matrix, ids.clone())?;
    save_embeddings(&one_layer_set(ids, &fitted)?, &args.out)?;
    let mut applied = None;
    if let (Some(apply), Some(apply_out)) = (&args.apply, &args.apply_out) {
        let (ids, docs) = load_texts(apply, args.apply_ids.as_deref())?;
        let features = svd.project(&vocab.transform(&docs), ids.clone())?;
        save_embeddings(&one_layer_set(ids, &features)?, apply_out)?;
        applied = Some(docs.len());
    }
    eprintln!("vocabulary {} terms, {} components", vocab.len(), k);
    emit(json!({
        "command": "tfidf",
        "n": docs.len(),
        "vocabulary": vocab.len(),
        "k": k,
        "singular_values": svd.singular_values,
        "applied": applied,
    }));
    Ok(())
}

pub fn msp(args: MspArgs, cfg: &FileConfig) -> Result<()> {
    let t = args.temperature.or(cfg.temperature).unwrap_or(1.0);
    if !(t > 0.0) || !t.is_finite() {
        return Err(usage(format!("--temperature must be a positive finite number, got {t}")));
    }
    let logits = read_logits(open(&args.logits)?).with_context(|| format!("reading {}", args.logits.display()))?;
    let scores = detectors::msp_scores(&logits, t)?;
    let mut sink = create(&args.out)?;
    write_scores(&scores, &mut sink)?;
    sink.flush()?;
    emit(json!({
        "command": "msp",
        "n": scores.len(),
        "classes": logits.classes(),
        "temperature": t,
        "scores": args.out.display().to_string(),
    }));
    Ok(())
}
