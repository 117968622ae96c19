//! Versioned model bundles: every trained artifact in one file.
//!
//! Layout: one magic header line, then a JSON body. Floats survive the
//! round trip exactly (shortest-representation encoding), so a reloaded
//! bundle produces bit-identical predictions.

use super::{PipelineConfig, WorkbenchError};
use crate::behavior_cluster::Centroids;
use crate::detector::{DetectorModel, HgnnParams};
use crate::hypergraph_core::{IncidenceMatrix, WeightDiag};
use crate::intra_encoder::GgnnParams;
use crate::slicer::ApiList;
use crate::token_embed::{EmbeddingTable, Vocabulary};
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const BUNDLE_MAGIC: &str = "VULNHG-BUNDLE 1";

/// Trained pipeline state: embeddings, encoder, centroids, the training
/// hypergraph with its feature rows, detector parameters and the config
/// echo.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelBundle {
    pub config: PipelineConfig,
    pub vocab: Vocabulary,
    pub table: EmbeddingTable,
    pub encoder: GgnnParams,
    pub centroids: Centroids,
    pub incidence: IncidenceMatrix,
    pub hyperedge_weights: WeightDiag,
    pub intra_features: Array2<f64>,
    pub detector: HgnnParams,
    pub api_names: Vec<String>,
}

impl ModelBundle {
    /// Runtime view for [`crate::detector::detect`].
    pub fn to_model(&self) -> DetectorModel {
        DetectorModel {
            vocab: self.vocab.clone(),
            table: self.table.clone(),
            encoder: self.encoder.clone(),
            centroids: self.centroids.clone(),
            incidence: self.incidence.clone(),
            weights: self.hyperedge_weights.clone(),
            intra_features: self.intra_features.clone(),
            params: self.detector.clone(),
            api_list: ApiList::new(self.api_names.clone()),
        }
    }
}

fn encode(bundle: &ModelBundle) -> String {
    let body = serde_json::to_string(bundle).expect("bundle serializes");
    format!("{BUNDLE_MAGIC}\n{body}\n")
}

/// FNV-1a fingerprint of the serialized bundle; a quick integrity and
/// reproducibility check, not a cryptographic hash.
pub fn bundle_checksum(bundle: &ModelBundle) -> String {
    let bytes = encode(bundle);
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x100_0000_01b3);
    }
    format!("{h:016x}")
}

pub fn save_bundle(bundle: &ModelBundle, path: &Path) -> Result<(), WorkbenchError> {
    std::fs::write(path, encode(bundle)).map_err(|source| WorkbenchError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_bundle(path: &Path) -> Result<ModelBundle, WorkbenchError> {
    let text = std::fs::read_to_string(path).map_err(|source| WorkbenchError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let Some((magic, body)) = text.split_once('\n') else {
        return Err(WorkbenchError::Version {
            found: "<missing header>".into(),
            expected: BUNDLE_MAGIC.into(),
        });
    };
    if magic != BUNDLE_MAGIC {
        return Err(WorkbenchError::Version {
            found: magic.chars().take(40).collect(),
            expected: BUNDLE_MAGIC.into(),
        });
    }
    let mut bundle: ModelBundle =
        serde_json::from_str(body.trim_end()).map_err(|e| WorkbenchError::Format {
            context: format!("bundle body: {e}"),
        })?;
    bundle.vocab.reindex();
    Ok(bundle)
}
