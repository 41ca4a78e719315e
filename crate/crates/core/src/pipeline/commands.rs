//! End-to-end commands behind the CLI.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::embfile::{load_embedding, save_embedding, save_labels};
use super::manifest::{Manifest, Split};
use super::synth::{write_dataset, SynthConfig};
use crate::error::{MeraError, Result};
use crate::merag::ExpertKind;
use crate::metrics::{
    calibration_report, evaluate, CalibrationPoint, CalibrationReport, EvalOptions, MetricReport,
};
use crate::model::{Model, Prediction, Prepared, Sample};
use crate::numcore::Matrix;
use crate::rmf::Modality;
use crate::store::{build_store, load_store, save_store, Store};
use crate::training::{load_checkpoint, save_checkpoint, train, Config, TrainOutcome};

/// Inference-time ablation switches.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Ablation {
    pub disable_modalities: Vec<Modality>,
    pub disable_experts: Vec<ExpertKind>,
}

impl Ablation {
    pub fn apply(&self, model: &mut Model) -> Result<()> {
        for m in &self.disable_modalities {
            model.disable_modality(*m)?;
        }
        for e in &self.disable_experts {
            model.disable_expert(e)?;
        }
        Ok(())
    }
}

pub fn load_model(checkpoint: &Path, ablation: &Ablation) -> Result<Model> {
    let mut model = Model::from_checkpoint(load_checkpoint(checkpoint)?)?;
    ablation.apply(&mut model)?;
    Ok(model)
}

fn load_optional_store(path: Option<&Path>) -> Result<Option<Store>> {
    path.map(load_store).transpose()
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| MeraError::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| MeraError::io(path, e))
}

/// `<path>.json`
pub fn json_sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// `<path>.labels`
pub fn labels_sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".labels");
    PathBuf::from(s)
}

pub fn cmd_synth(cfg: &SynthConfig, out_dir: &Path) -> Result<PathBuf> {
    let (path, proteins) = write_dataset(cfg, out_dir)?;
    log::info!("wrote {} proteins to {}", proteins.len(), path.display());
    Ok(path)
}

fn log_split_counts(manifest: &Manifest) {
    let counts = manifest.split_counts();
    let total: usize = counts.values().sum();
    let parts: Vec<String> = counts
        .iter()
        .map(|(s, n)| format!("{s}={n} ({:.1}%)", 100.0 * *n as f64 / total.max(1) as f64))
        .collect();
    log::info!("manifest splits: {}", parts.join(", "));
}

/// Builds a store from one split; every offending protein is listed.
pub fn cmd_build_db(manifest_path: &Path, split: Split, out: &Path) -> Result<Store> {
    let manifest = Manifest::load(manifest_path)?;
    log_split_counts(&manifest);
    let samples = manifest.load_split(split)?;
    if samples.is_empty() {
        return Err(MeraError::Build(format!("split `{split}` is empty")));
    }
    let mut records = Vec::with_capacity(samples.len());
    let mut offenders = Vec::new();
    for s in &samples {
        match s.to_record() {
            Ok(r) if r.active_indices().is_empty() => {
                offenders.push(format!("`{}`: no active sites", s.id))
            }
            Ok(r) => records.push(r),
            Err(e) => offenders.push(format!("`{}`: {e}", s.id)),
        }
    }
    if !offenders.is_empty() {
        return Err(MeraError::Build(format!(
            "{} record(s) rejected: {}",
            offenders.len(),
            offenders.join("; ")
        )));
    }
    let store = build_store(records)?;
    save_store(&store, out)?;
    Ok(store)
}

/// Fails when a non-train protein of the manifest sits in the store.
pub fn check_split_hygiene(manifest: &Manifest, store: &Store) -> Result<()> {
    let leaked: Vec<&str> = manifest
        .entries
        .iter()
        .filter(|e| e.split != Split::Train && store.contains(&e.id))
        .map(|e| e.id.as_str())
        .collect();
    if leaked.is_empty() {
        Ok(())
    } else {
        Err(MeraError::Ingestion(format!(
            "store holds non-train proteins: {}",
            leaked.join(", ")
        )))
    }
}

fn prepare_all(model: &Model, samples: &[Sample], store: Option<&Store>) -> Result<Vec<Prepared>> {
    let prepared = samples
        .iter()
        .map(|s| model.prepare(s, store))
        .collect::<Result<Vec<_>>>()?;
    let fallbacks = prepared.iter().filter(|p| p.retrieval_fallback).count();
    if fallbacks > 0 {
        log::warn!("{fallbacks} protein(s) had no eligible neighbor");
    }
    Ok(prepared)
}

/// Fills unset widths from the data and checks set ones.
pub fn resolve_dims(config: &mut Config, samples: &[Sample]) -> Result<()> {
    let first = samples
        .first()
        .ok_or_else(|| MeraError::Config("training split is empty".into()))?;
    if config.dim == 0 {
        config.dim = first.seq.cols();
    }
    if config.has(Modality::Text) && config.text_dim == 0 {
        config.text_dim = samples
            .iter()
            .find_map(|s| s.text.as_ref().map(Matrix::cols))
            .ok_or_else(|| {
                MeraError::Config("the text modality is active but no protein has text".into())
            })?;
    }
    Ok(())
}

pub struct TrainArgs<'a> {
    pub manifest: &'a Path,
    pub store: Option<&'a Path>,
    pub config: Config,
    pub checkpoint_out: &'a Path,
    pub log_out: Option<&'a Path>,
}

/// Trains, writes the best checkpoint and a JSON-lines epoch log.
pub fn cmd_train(args: TrainArgs<'_>) -> Result<TrainOutcome> {
    let manifest = Manifest::load(args.manifest)?;
    log_split_counts(&manifest);
    let store = load_optional_store(args.store)?;
    if let Some(s) = &store {
        check_split_hygiene(&manifest, s)?;
    }
    let train_samples = manifest.load_split(Split::Train)?;
    let valid_samples = manifest.load_split(Split::Valid)?;
    if valid_samples.is_empty() {
        return Err(MeraError::Config("validation split is empty".into()));
    }
    let mut config = args.config;
    resolve_dims(&mut config, &train_samples)?;
    let model = Model::init(config)?;
    let train_set = prepare_all(&model, &train_samples, store.as_ref())?;
    let valid_set = prepare_all(&model, &valid_samples, store.as_ref())?;

    let mut log_lines = String::new();
    let outcome = train(model, &train_set, &valid_set, |e| {
        log::info!(
            "epoch {} loss {:.6} (bce {:.6}, reliability {:.6}) valid auprc {:.6}{}",
            e.epoch,
            e.loss.total,
            e.loss.bce,
            e.loss.reliability,
            e.valid_auprc,
            if e.best { " *" } else { "" }
        );
        log_lines.push_str(&serde_json::to_string(e).expect("epoch log serializes"));
        log_lines.push('\n');
    })?;
    if let Some(dir) = args
        .checkpoint_out
        .parent()
        .filter(|d| !d.as_os_str().is_empty())
    {
        std::fs::create_dir_all(dir).map_err(|e| MeraError::io(dir, e))?;
    }
    save_checkpoint(&outcome.best.to_checkpoint(), args.checkpoint_out)?;
    if let Some(path) = args.log_out {
        write_file(path, log_lines.as_bytes())?;
    }
    Ok(outcome)
}

pub struct InferArgs<'a> {
    pub manifest: &'a Path,
    pub store: Option<&'a Path>,
    pub checkpoint: &'a Path,
    pub ablation: Ablation,
    /// `None` means every protein of the manifest.
    pub split: Option<Split>,
}

struct Loaded {
    model: Model,
    prepared: Vec<Prepared>,
}

fn load_for_inference(args: &InferArgs<'_>) -> Result<Loaded> {
    let manifest = Manifest::load(args.manifest)?;
    let model = load_model(args.checkpoint, &args.ablation)?;
    let store = load_optional_store(args.store)?;
    if let Some(s) = &store {
        check_split_hygiene(&manifest, s)?;
        if let Some(d) = s.dim().filter(|&d| d != model.config.dim) {
            return Err(MeraError::Dimension(format!(
                "store has width {d}, checkpoint expects {}",
                model.config.dim
            )));
        }
    }
    let samples = match args.split {
        Some(split) => manifest.load_split(split)?,
        None => manifest.load_all()?.into_iter().map(|(_, s)| s).collect(),
    };
    if samples.is_empty() {
        return Err(MeraError::Config(format!(
            "split `{}` is empty",
            args.split.map_or("all", Split::name)
        )));
    }
    let prepared = prepare_all(&model, &samples, store.as_ref())?;
    Ok(Loaded { model, prepared })
}

/// Metrics over one split; writes `out` (key = value) and `out.json`.
pub fn cmd_eval(
    args: &InferArgs<'_>,
    options: &EvalOptions,
    out: Option<&Path>,
) -> Result<MetricReport> {
    let l = load_for_inference(args)?;
    let report = evaluate(&l.model.eval_records(&l.prepared)?, options)?;
    if let Some(path) = out {
        write_file(path, report.to_text().as_bytes())?;
        write_file(&json_sidecar(path), report.to_json().as_bytes())?;
    }
    Ok(report)
}

/// Tab-separated per-residue scores.
pub fn format_predictions(preds: &[Prediction]) -> String {
    let mut s = String::from("# id\tindex\tscore\tu_seq\tu_rag\tu_text\n");
    for p in preds {
        let b = &p.bundle.modalities;
        for (i, prob) in p.bundle.probabilities.iter().enumerate() {
            let _ = write!(s, "{}\t{i}\t{prob}", p.id);
            for m in Modality::ALL {
                match b.column(m) {
                    Some(c) => {
                        let _ = write!(s, "\t{}", b.reliability.get(i, c));
                    }
                    None => s.push_str("\tNA"),
                }
            }
            s.push('\n');
        }
    }
    s
}

pub fn predict_all(model: &Model, prepared: &[Prepared]) -> Result<Vec<Prediction>> {
    prepared.iter().map(|p| model.predict(p)).collect()
}

/// Per-residue scores for manifest proteins.
pub fn cmd_predict(args: &InferArgs<'_>, out: &Path) -> Result<usize> {
    let l = load_for_inference(args)?;
    let preds = predict_all(&l.model, &l.prepared)?;
    write_file(out, format_predictions(&preds).as_bytes())?;
    Ok(preds.iter().map(|p| p.bundle.probabilities.len()).sum())
}

pub struct SingleInput<'a> {
    pub id: &'a str,
    pub seq: &'a Path,
    pub text: Option<&'a Path>,
}

/// Per-residue scores for one protein given as embedding files.
pub fn cmd_predict_single(
    input: &SingleInput<'_>,
    store: Option<&Path>,
    checkpoint: &Path,
    ablation: &Ablation,
    out: &Path,
) -> Result<usize> {
    let model = load_model(checkpoint, ablation)?;
    let store = load_optional_store(store)?;
    let seq = load_embedding(input.seq)?;
    let n = seq.rows();
    let mut sample = Sample::new(input.id, seq, vec![0; n])?;
    if let Some(t) = input.text {
        sample.text = Some(load_embedding(t)?);
    }
    let pred = model.predict(&model.prepare(&sample, store.as_ref())?)?;
    write_file(
        out,
        format_predictions(std::slice::from_ref(&pred)).as_bytes(),
    )?;
    Ok(n)
}

pub fn calibration_points(preds: &[Prediction], prepared: &[Prepared]) -> Vec<CalibrationPoint> {
    let mut points = Vec::new();
    for (pred, p) in preds.iter().zip(prepared) {
        let b = &pred.bundle.modalities;
        for (i, (&prob, &label)) in pred
            .bundle
            .probabilities
            .iter()
            .zip(&p.sample.labels)
            .enumerate()
        {
            points.push(CalibrationPoint {
                probability: prob,
                label,
                reliability: b
                    .modalities
                    .iter()
                    .enumerate()
                    .map(|(c, &m)| (m, b.reliability.get(i, c)))
                    .collect(),
            });
        }
    }
    points
}

/// Error rate per reliability bin for confident residues.
pub fn cmd_calibrate(
    args: &InferArgs<'_>,
    band: f64,
    bins: usize,
    out: Option<&Path>,
) -> Result<CalibrationReport> {
    if bins < 2 {
        return Err(MeraError::Parameter("bins must be at least 2".into()));
    }
    let l = load_for_inference(args)?;
    let preds = predict_all(&l.model, &l.prepared)?;
    let report = calibration_report(&calibration_points(&preds, &l.prepared), band, bins)?;
    if let Some(path) = out {
        let mut text = report.to_text();
        if report.confident_residues == 0 {
            text.push_str("# empty: no residue passed the confidence band\n");
        }
        write_file(path, text.as_bytes())?;
        write_file(
            &json_sidecar(path),
            serde_json::to_string_pretty(&report)
                .expect("report serializes")
                .as_bytes(),
        )?;
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbeddingKind {
    Seq,
    Rag,
    Text,
}

impl FromStr for EmbeddingKind {
    type Err = MeraError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "seq" => Ok(EmbeddingKind::Seq),
            "rag" => Ok(EmbeddingKind::Rag),
            "text" => Ok(EmbeddingKind::Text),
            other => Err(MeraError::Parameter(format!(
                "unknown embedding kind `{other}` (expected seq, rag or text)"
            ))),
        }
    }
}

/// Stacks per-residue representations of every selected protein into one
/// embedding file, with a one-byte-per-row label sidecar.
pub fn cmd_export_embeddings(
    args: &InferArgs<'_>,
    which: EmbeddingKind,
    out: &Path,
) -> Result<usize> {
    let l = load_for_inference(args)?;
    let mut blocks = Vec::with_capacity(l.prepared.len());
    let mut labels = Vec::new();
    for p in &l.prepared {
        let block = match which {
            EmbeddingKind::Seq => p.sample.seq.clone(),
            EmbeddingKind::Rag | EmbeddingKind::Text => {
                let pred = l.model.predict(p)?;
                let (m, name) = match which {
                    EmbeddingKind::Rag => (pred.h_rag, "rag"),
                    _ => (pred.h_text, "text"),
                };
                m.ok_or_else(|| {
                    MeraError::Config(format!(
                        "protein `{}` has no {name} representation under this model",
                        p.sample.id
                    ))
                })?
            }
        };
        labels.extend_from_slice(&p.sample.labels);
        blocks.push(block);
    }
    let refs: Vec<&Matrix> = blocks.iter().collect();
    let stacked = Matrix::concat_rows(&refs)?;
    let rows = stacked.rows();
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| MeraError::io(dir, e))?;
    }
    save_embedding(&stacked, out)?;
    save_labels(&labels, &labels_sidecar(out))?;
    Ok(rows)
}

/// Parses repeatable `name` flags into modalities.
pub fn parse_modalities(names: &[String]) -> Result<Vec<Modality>> {
    let mut seen = HashSet::new();
    names
        .iter()
        .map(|n| {
            let m = Modality::from_str(n)?;
            if !seen.insert(m) {
                return Err(MeraError::Config(format!("modality `{m}` given twice")));
            }
            Ok(m)
        })
        .collect()
}

pub fn parse_experts(names: &[String]) -> Result<Vec<ExpertKind>> {
    names.iter().map(|n| ExpertKind::from_str(n)).collect()
}
