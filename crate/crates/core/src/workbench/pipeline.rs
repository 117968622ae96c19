//! The end-to-end training pipeline and batch detection.
//!
//! Stages: ingest → split → token embedding → encoder training →
//! feature extraction → behavior slicing/encoding → clustering →
//! hypergraph construction → detector training → evaluation. The split
//! mask is computed once and shared by every stage, and everything
//! downstream of the manifest is a deterministic function of
//! (manifest, config, seed).
//!
//! The emitted report is fully reproducible; stage wall-clock timings
//! are kept on the in-memory report only and never serialized.

use super::{
    bundle_checksum, split_dataset, split_dataset_stratified, DatasetManifest, ManifestRecord,
    ModelBundle, PipelineConfig, WorkbenchError,
};
use crate::behavior_cluster::{build_hyperedges, kmeans, Centroids, HyperedgeSet};
use crate::detector::{
    detect, evaluate, forward, threshold_predictions, DetectorError, Metrics, Prediction, Split,
    SplitMask, TrainConfig,
};
use crate::graph_ingest::{load_cpg, parse_function, pdg_view, Cpg, Label};
use crate::hypergraph_core::{incidence, WeightDiag};
use crate::intra_encoder::{
    adam_beta1, encode_behavior, encode_function, epoch_lr, train_intra, Adam,
};
use crate::slicer::{behaviors_of, ApiList};
use crate::token_embed::{build_corpus, train_skipgram, SkipgramConfig};
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

pub const REPORT_FORMAT_VERSION: u32 = 1;
pub const PREDICTIONS_FORMAT: &str = "vulnhg-predictions";
pub const PREDICTIONS_VERSION: u32 = 1;

/// One ingested function: the manifest record resolved to a graph.
#[derive(Debug, Clone)]
pub struct IngestedFunction {
    pub id: String,
    pub label: Label,
    pub cpg: Cpg,
}

/// Resolves a record to its CPG: inline source is parsed with the
/// mini-C frontend, `cpg` paths load exchange documents. The manifest
/// record id and label always win over the document's own.
pub fn ingest_record(record: &ManifestRecord) -> Result<IngestedFunction, WorkbenchError> {
    let mut cpg = match (&record.source, &record.cpg) {
        (Some(source), None) => {
            parse_function(source).map_err(|e| WorkbenchError::Stage {
                stage: "ingest".into(),
                function_id: Some(record.id.clone()),
                message: e.to_string(),
            })?
        }
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path).map_err(|source| WorkbenchError::Io {
                path: path.clone(),
                source,
            })?;
            load_cpg(&text).map_err(|e| WorkbenchError::Stage {
                stage: "ingest".into(),
                function_id: Some(record.id.clone()),
                message: e.to_string(),
            })?
        }
        _ => {
            return Err(WorkbenchError::Record {
                id: record.id.clone(),
                message: "exactly one of `source` and `cpg` must be set".into(),
            })
        }
    };
    cpg.function_id = record.id.clone();
    Ok(IngestedFunction {
        id: record.id.clone(),
        label: record.label,
        cpg,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub records: usize,
    pub vulnerable: usize,
    pub clean: usize,
    pub behaviors: usize,
    pub hyperedges: usize,
    pub padded_singletons: usize,
}

/// Metrics and configuration echo of one pipeline run. Serialization
/// omits the stage timings so equal runs emit byte-identical reports.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub format_version: u32,
    pub config: PipelineConfig,
    pub dataset: DatasetSummary,
    pub split_sizes: SplitSizes,
    pub train: Metrics,
    pub val: Metrics,
    pub test: Metrics,
    /// Logistic regression on the same intra-function features without
    /// the hypergraph; the reference the multilateral features must beat.
    pub baseline_train: Metrics,
    pub baseline_val: Metrics,
    pub baseline_test: Metrics,
    pub bundle_checksum: String,
    #[serde(skip)]
    pub stage_timings_ms: BTreeMap<String, u128>,
}

fn stage_error(stage: &str, function_id: Option<&str>, message: impl ToString) -> WorkbenchError {
    WorkbenchError::Stage {
        stage: stage.to_string(),
        function_id: function_id.map(str::to_string),
        message: message.to_string(),
    }
}

fn resolve_api_list(config: &PipelineConfig) -> Result<ApiList, WorkbenchError> {
    match &config.api_list {
        None => Ok(ApiList::default_names()),
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| WorkbenchError::Io {
                path: path.clone(),
                source,
            })?;
            Ok(ApiList::parse(&text))
        }
    }
}

/// Logistic regression on the feature matrix alone (no hypergraph):
/// Adam on the train mask, parameters picked by validation F-measure.
/// Returns one probability per row.
pub fn train_logistic_baseline(
    x: &Array2<f64>,
    labels: &[bool],
    split: &SplitMask,
    config: &TrainConfig,
) -> Vec<f64> {
    let d = x.ncols();
    let n = x.nrows();
    let train_idx = split.indices_of(Split::Train);
    let val_idx = split.indices_of(Split::Val);
    let select_idx = if val_idx.is_empty() { &train_idx } else { &val_idx };

    let mut w = Array1::<f64>::zeros(d);
    let mut b = 0.0f64;
    let mut adam = Adam::new(d + 1, adam_beta1(config));
    let mut best: (Array1<f64>, f64, f64) = (w.clone(), b, f64::NEG_INFINITY);
    let sigmoid = |v: f64| 1.0 / (1.0 + (-v).exp());

    for epoch in 0..config.epochs {
        let mut grad_w = Array1::<f64>::zeros(d);
        let mut grad_b = 0.0;
        let m = train_idx.len() as f64;
        for &i in &train_idx {
            let logit = x.row(i).dot(&w) + b;
            let y = if labels[i] { 1.0 } else { 0.0 };
            let g = (sigmoid(logit) - y) / m;
            grad_w.scaled_add(g, &x.row(i));
            grad_b += g;
        }
        for (gw, pw) in grad_w.iter_mut().zip(w.iter()) {
            *gw += 2.0 * config.weight_decay * pw;
        }
        grad_b += 2.0 * config.weight_decay * b;

        let mut flat: Vec<f64> = w.to_vec();
        flat.push(b);
        let mut grads: Vec<f64> = grad_w.to_vec();
        grads.push(grad_b);
        adam.step(&mut flat, &grads, epoch_lr(config, epoch));
        b = flat.pop().unwrap();
        w = Array1::from_vec(flat);

        let preds: Vec<bool> = select_idx
            .iter()
            .map(|&i| x.row(i).dot(&w) + b >= 0.0)
            .collect();
        let truth: Vec<bool> = select_idx.iter().map(|&i| labels[i]).collect();
        let f = evaluate(&preds, &truth).map(|m| m.f_measure).unwrap_or(0.0);
        if f > best.2 {
            best = (w.clone(), b, f);
        }
    }
    if config.epochs > 0 {
        w = best.0;
        b = best.1;
    }
    (0..n).map(|i| sigmoid(x.row(i).dot(&w) + b)).collect()
}

fn split_metrics(
    probabilities: &[f64],
    labels: &[bool],
    split: &SplitMask,
    which: Split,
    tau: f64,
) -> Metrics {
    let idx = split.indices_of(which);
    let probs: Vec<f64> = idx.iter().map(|&i| probabilities[i]).collect();
    let preds = threshold_predictions(&probs, tau);
    let truth: Vec<bool> = idx.iter().map(|&i| labels[i]).collect();
    evaluate(&preds, &truth).expect("aligned by construction")
}

/// Runs the full training pipeline over a labeled manifest.
pub fn run_pipeline(
    manifest: &DatasetManifest,
    config: &PipelineConfig,
) -> Result<(ModelBundle, RunReport), WorkbenchError> {
    config.validate()?;
    manifest.validate(true)?;
    let mut timings: BTreeMap<String, u128> = BTreeMap::new();
    let api_list = resolve_api_list(config)?;

    // Ingest.
    let clock = Instant::now();
    let mut functions = Vec::with_capacity(manifest.records.len());
    for record in &manifest.records {
        functions.push(ingest_record(record)?);
    }
    let ids: Vec<String> = functions.iter().map(|f| f.id.clone()).collect();
    let labels: Vec<bool> = functions
        .iter()
        .map(|f| f.label == Label::Vulnerable)
        .collect();
    let cpgs: Vec<Cpg> = functions.into_iter().map(|f| f.cpg).collect();
    timings.insert("ingest".into(), clock.elapsed().as_millis());

    // Split, shared by all phases.
    let split = if config.stratified {
        split_dataset_stratified(manifest, config.split, config.stage_seed("split"))?
    } else {
        split_dataset(manifest, config.split, config.stage_seed("split"))?
    };

    // Token embedding.
    let clock = Instant::now();
    let skip_config = SkipgramConfig {
        dim: config.dim,
        seed: config.stage_seed("skipgram"),
        ..config.skipgram.clone()
    };
    let corpus = build_corpus(&cpgs);
    let (vocab, table) = train_skipgram(&corpus, &skip_config)
        .map_err(|e| stage_error("embed", None, e))?;
    timings.insert("embed".into(), clock.elapsed().as_millis());

    // Intra-function encoder.
    let clock = Instant::now();
    let intra_config = TrainConfig {
        seed: config.stage_seed("intra"),
        epochs: config.intra_epochs.unwrap_or(config.train.epochs),
        ..config.train.clone()
    };
    let encoder = train_intra(&cpgs, &labels, &split, &vocab, &table, config.steps, &intra_config)
        .map_err(|e| stage_error("intra", None, e))?;
    timings.insert("intra".into(), clock.elapsed().as_millis());

    // Per-function features.
    let clock = Instant::now();
    let mut intra_features = Array2::<f64>::zeros((cpgs.len(), config.dim));
    for (i, cpg) in cpgs.iter().enumerate() {
        let x = encode_function(cpg, &vocab, &table, &encoder)
            .map_err(|e| stage_error("features", Some(&ids[i]), e))?;
        intra_features.row_mut(i).assign(&x);
    }
    timings.insert("features".into(), clock.elapsed().as_millis());

    // Behavior slicing and encoding.
    let clock = Instant::now();
    let mut behavior_rows: Vec<Array1<f64>> = Vec::new();
    let mut behavior_owner: Vec<String> = Vec::new();
    for (i, cpg) in cpgs.iter().enumerate() {
        let pdg = pdg_view(cpg);
        for sub in behaviors_of(&pdg, cpg, &api_list) {
            let vector = encode_behavior(&sub, cpg, &vocab, &table, &encoder)
                .map_err(|e| stage_error("behaviors", Some(&ids[i]), e))?;
            behavior_rows.push(vector);
            behavior_owner.push(ids[i].clone());
        }
    }
    timings.insert("behaviors".into(), clock.elapsed().as_millis());

    // Common-behavior clustering into hyperedges.
    let clock = Instant::now();
    let (centroids, hyperedges) = if behavior_rows.is_empty() {
        (
            Centroids {
                matrix: Array2::zeros((0, config.dim)),
            },
            HyperedgeSet { edges: vec![] },
        )
    } else {
        let mut matrix = Array2::<f64>::zeros((behavior_rows.len(), config.dim));
        for (r, row) in behavior_rows.iter().enumerate() {
            matrix.row_mut(r).assign(row);
        }
        let (centroids, assignment) = kmeans(
            &matrix,
            &behavior_owner,
            config.hyperedges,
            config.stage_seed("kmeans"),
            config.kmeans_max_iters,
        );
        (centroids, build_hyperedges(&assignment, config.min_members))
    };
    let incidence_matrix =
        incidence(&hyperedges, &ids).map_err(|e| stage_error("hypergraph", None, e))?;
    let weights = WeightDiag::identity(incidence_matrix.n_hyperedges());
    timings.insert("cluster".into(), clock.elapsed().as_millis());

    // Hypergraph network training.
    let clock = Instant::now();
    let hgnn_config = TrainConfig {
        seed: config.stage_seed("hgnn"),
        ..config.train.clone()
    };
    let detector_params = crate::detector::train(
        &intra_features,
        &incidence_matrix,
        &weights,
        &labels,
        &split,
        config.layers,
        &hgnn_config,
    )
    .map_err(|e| stage_error("hgnn", None, e))?;
    timings.insert("hgnn".into(), clock.elapsed().as_millis());

    // Evaluation and the intra-only baseline.
    let clock = Instant::now();
    let probabilities = forward(&intra_features, &incidence_matrix, &weights, &detector_params)
        .map_err(|e| stage_error("evaluate", None, e))?;
    let baseline_config = TrainConfig {
        seed: config.stage_seed("baseline"),
        ..config.train.clone()
    };
    let baseline_probs =
        train_logistic_baseline(&intra_features, &labels, &split, &baseline_config);
    let tau = config.threshold;
    let metrics_for = |probs: &[f64], which: Split| split_metrics(probs, &labels, &split, which, tau);
    timings.insert("evaluate".into(), clock.elapsed().as_millis());

    let padded_singletons = incidence_matrix.n_hyperedges() - hyperedges.edges.len();
    let bundle = ModelBundle {
        config: config.clone(),
        vocab,
        table,
        encoder,
        centroids,
        incidence: incidence_matrix,
        hyperedge_weights: weights,
        intra_features,
        detector: detector_params,
        api_names: api_list.names().map(str::to_string).collect(),
    };
    let report = RunReport {
        format_version: REPORT_FORMAT_VERSION,
        config: config.clone(),
        dataset: DatasetSummary {
            records: manifest.records.len(),
            vulnerable: labels.iter().filter(|l| **l).count(),
            clean: labels.iter().filter(|l| !**l).count(),
            behaviors: behavior_owner.len(),
            hyperedges: hyperedges.edges.len(),
            padded_singletons,
        },
        split_sizes: SplitSizes {
            train: split.indices_of(Split::Train).len(),
            val: split.indices_of(Split::Val).len(),
            test: split.indices_of(Split::Test).len(),
        },
        train: metrics_for(&probabilities, Split::Train),
        val: metrics_for(&probabilities, Split::Val),
        test: metrics_for(&probabilities, Split::Test),
        baseline_train: metrics_for(&baseline_probs, Split::Train),
        baseline_val: metrics_for(&baseline_probs, Split::Val),
        baseline_test: metrics_for(&baseline_probs, Split::Test),
        bundle_checksum: bundle_checksum(&bundle),
        stage_timings_ms: timings,
    };
    Ok((bundle, report))
}

// ---------------------------------------------------------------------
// Detection over manifests
// ---------------------------------------------------------------------

/// A record that could not be scored; the batch continues without it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectFailure {
    pub id: String,
    pub stage: String,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct DetectOutcome {
    pub predictions: Vec<Prediction>,
    pub failures: Vec<DetectFailure>,
}

/// Scores every record of a manifest against a trained bundle. Records
/// that fail to parse or load are reported individually.
pub fn detect_manifest(
    manifest: &DatasetManifest,
    bundle: &ModelBundle,
    tau: f64,
) -> Result<DetectOutcome, WorkbenchError> {
    manifest.validate(false)?;
    let mut parsed: Vec<(String, Cpg)> = Vec::new();
    let mut failures = Vec::new();
    for record in &manifest.records {
        match ingest_record(record) {
            Ok(f) => parsed.push((f.id, f.cpg)),
            Err(e) => failures.push(DetectFailure {
                id: record.id.clone(),
                stage: "ingest".into(),
                message: e.to_string(),
            }),
        }
    }
    let model = bundle.to_model();
    let predictions = detect(&parsed, &model, tau).map_err(|e: DetectorError| {
        stage_error("detect", None, e)
    })?;
    Ok(DetectOutcome {
        predictions,
        failures,
    })
}

/// Line-delimited prediction records with a header line.
pub fn serialize_predictions(predictions: &[Prediction]) -> String {
    let mut out = format!(
        "{{\"format\":\"{PREDICTIONS_FORMAT}\",\"version\":{PREDICTIONS_VERSION}}}"
    );
    for p in predictions {
        out.push('\n');
        out.push_str(&serde_json::to_string(p).expect("prediction serializes"));
    }
    out.push('\n');
    out
}

pub fn parse_predictions(text: &str) -> Result<Vec<Prediction>, WorkbenchError> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| WorkbenchError::Format {
        context: "empty predictions file".into(),
    })?;
    let value: serde_json::Value =
        serde_json::from_str(header).map_err(|e| WorkbenchError::Format {
            context: format!("predictions header: {e}"),
        })?;
    if value.get("format").and_then(|v| v.as_str()) != Some(PREDICTIONS_FORMAT) {
        return Err(WorkbenchError::Version {
            found: header.chars().take(60).collect(),
            expected: PREDICTIONS_FORMAT.into(),
        });
    }
    lines
        .map(|l| {
            serde_json::from_str(l).map_err(|e| WorkbenchError::Format {
                context: format!("prediction record: {e}"),
            })
        })
        .collect()
}

// ---------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------

/// Canonical report document (timings excluded by construction).
pub fn serialize_report(report: &RunReport) -> String {
    let mut text = serde_json::to_string_pretty(report).expect("report serializes");
    text.push('\n');
    text
}

pub fn emit_report(report: &RunReport, path: &Path) -> Result<(), WorkbenchError> {
    std::fs::write(path, serialize_report(report)).map_err(|source| WorkbenchError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_report(path: &Path) -> Result<RunReport, WorkbenchError> {
    let text = std::fs::read_to_string(path).map_err(|source| WorkbenchError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let report: RunReport = serde_json::from_str(&text).map_err(|e| WorkbenchError::Format {
        context: format!("report: {e}"),
    })?;
    if report.format_version != REPORT_FORMAT_VERSION {
        return Err(WorkbenchError::Version {
            found: report.format_version.to_string(),
            expected: REPORT_FORMAT_VERSION.to_string(),
        });
    }
    Ok(report)
}
