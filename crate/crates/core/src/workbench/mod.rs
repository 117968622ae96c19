//! Orchestration: dataset manifests, splits, the end-to-end training
//! pipeline, model bundles and run reports.

mod bundle;
mod manifest;
mod pipeline;
pub mod synthetic;

pub use bundle::{bundle_checksum, load_bundle, save_bundle, ModelBundle, BUNDLE_MAGIC};
pub use manifest::{
    load_manifest, parse_manifest, serialize_manifest, DatasetManifest, ManifestRecord,
};
pub use pipeline::{
    detect_manifest, emit_report, ingest_record, load_report, parse_predictions, run_pipeline,
    serialize_predictions, serialize_report, train_logistic_baseline, DatasetSummary,
    DetectFailure, DetectOutcome, IngestedFunction, RunReport, SplitSizes,
};

use crate::detector::{Split, SplitMask, TrainConfig};
use crate::graph_ingest::Label;
use crate::rng::Rng;
use crate::token_embed::SkipgramConfig;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum WorkbenchError {
    #[error("manifest needs at least 10 records to split, found {0}")]
    TooFewRecords(usize),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("format error: {context}")]
    Format { context: String },
    #[error("unsupported format version: found `{found}`, expected `{expected}`")]
    Version { found: String, expected: String },
    #[error("duplicate function id `{0}`")]
    DuplicateId(String),
    #[error("record `{id}`: {message}")]
    Record { id: String, message: String },
    #[error("stage `{stage}` failed{}: {message}", function_id.as_ref().map(|f| format!(" on function `{f}`")).unwrap_or_default())]
    Stage {
        stage: String,
        function_id: Option<String>,
        message: String,
    },
}

/// All pipeline hyperparameters. Defaults follow the pinned recipe:
/// dimension 256, 1000 hyperedges, 2 convolution layers, 8:1:1 split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub format_version: u32,
    /// Feature dimension `d` for token vectors and all features.
    pub dim: usize,
    /// GGNN propagation steps `T`.
    pub steps: usize,
    /// Hyperedge count `K` for clustering.
    pub hyperedges: usize,
    /// Hyperedge convolution layers `L`.
    pub layers: usize,
    pub skipgram: SkipgramConfig,
    /// Optional path to a sensitive-API list; the built-in default set
    /// applies when absent.
    pub api_list: Option<PathBuf>,
    /// Minimum distinct functions per hyperedge; smaller ones are
    /// filtered out.
    pub min_members: usize,
    pub train: TrainConfig,
    /// Epoch budget for the encoder stage; the shared budget applies
    /// when unset. The two training phases are separate in the pipeline
    /// and often want different budgets.
    pub intra_epochs: Option<usize>,
    /// Master seed; per-stage seeds are forked from it.
    pub seed: u64,
    /// Train/validation/test ratios, summing to 1.
    pub split: (f64, f64, f64),
    /// Stratify the split by label (for heavily imbalanced corpora).
    pub stratified: bool,
    /// Classification threshold on the vulnerability probability.
    pub threshold: f64,
    pub kmeans_max_iters: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            format_version: 1,
            dim: 256,
            steps: 3,
            hyperedges: 1000,
            layers: 2,
            skipgram: SkipgramConfig::default(),
            api_list: None,
            min_members: 1,
            train: TrainConfig::default(),
            intra_epochs: None,
            seed: 1,
            split: (0.8, 0.1, 0.1),
            stratified: false,
            threshold: 0.5,
            kmeans_max_iters: 100,
        }
    }
}

impl PipelineConfig {
    /// Validates dimension/ratio invariants.
    pub fn validate(&self) -> Result<(), WorkbenchError> {
        let sum = self.split.0 + self.split.1 + self.split.2;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(WorkbenchError::Format {
                context: format!("split ratios sum to {sum}, expected 1"),
            });
        }
        if self.dim == 0 || self.steps == 0 || self.hyperedges == 0 || self.layers == 0 {
            return Err(WorkbenchError::Format {
                context: "dim, steps, hyperedges and layers must be positive".into(),
            });
        }
        if self.skipgram.dim != self.dim {
            return Err(WorkbenchError::Format {
                context: format!(
                    "skipgram dim {} must match pipeline dim {}",
                    self.skipgram.dim, self.dim
                ),
            });
        }
        if self.skipgram.window == 0 || self.skipgram.negatives == 0 || self.skipgram.epochs == 0 {
            return Err(WorkbenchError::Format {
                context: "skipgram window, negatives and epochs must be positive".into(),
            });
        }
        Ok(())
    }

    /// Stage-specific seed derived from the master seed.
    pub fn stage_seed(&self, stage: &str) -> u64 {
        Rng::new(self.seed).fork(stage).next_u64()
    }
}

/// Seeded shuffle, then contiguous cut: `floor(n·r_train)` train rows,
/// the remainder split between validation and test (validation floored).
/// The same mask is reused by every training phase.
pub fn split_dataset(
    manifest: &DatasetManifest,
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<SplitMask, WorkbenchError> {
    let n = manifest.records.len();
    if n < 10 {
        return Err(WorkbenchError::TooFewRecords(n));
    }
    let mut indices: Vec<usize> = (0..n).collect();
    Rng::new(seed).shuffle(&mut indices);
    Ok(cut(&indices, n, ratios))
}

/// As [`split_dataset`], but applies the ratio rule inside each label
/// class, for corpora with rare positives.
pub fn split_dataset_stratified(
    manifest: &DatasetManifest,
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<SplitMask, WorkbenchError> {
    let n = manifest.records.len();
    if n < 10 {
        return Err(WorkbenchError::TooFewRecords(n));
    }
    let mut rng = Rng::new(seed);
    let mut assignments = vec![Split::Train; n];
    for class in [Label::Vulnerable, Label::Clean, Label::Unknown] {
        let mut members: Vec<usize> = manifest
            .records
            .iter()
            .enumerate()
            .filter(|(_, r)| r.label == class)
            .map(|(i, _)| i)
            .collect();
        if members.is_empty() {
            continue;
        }
        rng.shuffle(&mut members);
        let ranks: Vec<usize> = (0..members.len()).collect();
        let mask = cut(&ranks, members.len(), ratios);
        for (rank, &i) in members.iter().enumerate() {
            assignments[i] = mask.get(rank);
        }
    }
    Ok(SplitMask::new(assignments))
}

fn cut(shuffled: &[usize], n: usize, ratios: (f64, f64, f64)) -> SplitMask {
    let n_train = (n as f64 * ratios.0).floor() as usize;
    let rem = n - n_train;
    let val_share = if ratios.1 + ratios.2 > 0.0 {
        ratios.1 / (ratios.1 + ratios.2)
    } else {
        0.5
    };
    let n_val = (rem as f64 * val_share).floor() as usize;
    let mut assignments = vec![Split::Train; n];
    for (rank, &i) in shuffled.iter().enumerate() {
        assignments[i] = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
    }
    SplitMask::new(assignments)
}
