//! Line-delimited dataset manifests.
//!
//! The first line is a header, every following non-empty line one
//! record. A record carries either inline source or a path to a CPG
//! exchange document:
//!
//! ```text
//! {"format":"vulnhg-manifest","version":1,"provenance":"demo"}
//! {"id":"f1","label":"vulnerable","source":"void f(){...}"}
//! {"id":"f2","label":"clean","cpg":"graphs/f2.json"}
//! ```

use super::WorkbenchError;
use crate::graph_ingest::Label;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

pub const MANIFEST_FORMAT: &str = "vulnhg-manifest";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ManifestHeader {
    format: String,
    version: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    provenance: Option<String>,
}

/// One function record; exactly one of `source` and `cpg` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub id: String,
    pub label: Label,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cpg: Option<PathBuf>,
}

/// A corpus of function records with optional provenance note.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub provenance: Option<String>,
    pub records: Vec<ManifestRecord>,
}

impl DatasetManifest {
    /// Checks id uniqueness and the source-xor-cpg rule; with
    /// `require_labels`, `unknown` labels are rejected (train/eval
    /// manifests).
    pub fn validate(&self, require_labels: bool) -> Result<(), WorkbenchError> {
        let mut seen = BTreeSet::new();
        for r in &self.records {
            if !seen.insert(&r.id) {
                return Err(WorkbenchError::DuplicateId(r.id.clone()));
            }
            match (&r.source, &r.cpg) {
                (Some(_), None) | (None, Some(_)) => {}
                _ => {
                    return Err(WorkbenchError::Record {
                        id: r.id.clone(),
                        message: "exactly one of `source` and `cpg` must be set".into(),
                    })
                }
            }
            if require_labels && r.label == Label::Unknown {
                return Err(WorkbenchError::Record {
                    id: r.id.clone(),
                    message: "label `unknown` is only allowed in detection manifests".into(),
                });
            }
        }
        Ok(())
    }
}

/// Parses manifest text (header line plus one record per line).
pub fn parse_manifest(text: &str) -> Result<DatasetManifest, WorkbenchError> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header_line = lines.next().ok_or_else(|| WorkbenchError::Format {
        context: "empty manifest".into(),
    })?;
    let header: ManifestHeader =
        serde_json::from_str(header_line).map_err(|e| WorkbenchError::Format {
            context: format!("manifest header: {e}"),
        })?;
    if header.format != MANIFEST_FORMAT || header.version != MANIFEST_VERSION {
        return Err(WorkbenchError::Version {
            found: format!("{} v{}", header.format, header.version),
            expected: format!("{MANIFEST_FORMAT} v{MANIFEST_VERSION}"),
        });
    }
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let record: ManifestRecord =
            serde_json::from_str(line).map_err(|e| WorkbenchError::Format {
                context: format!("manifest record {}: {e}", i + 1),
            })?;
        records.push(record);
    }
    Ok(DatasetManifest {
        provenance: header.provenance,
        records,
    })
}

/// Reads and parses a manifest file.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest, WorkbenchError> {
    let text = std::fs::read_to_string(path).map_err(|source| WorkbenchError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_manifest(&text)
}

/// Serializes a manifest in the line-delimited form.
pub fn serialize_manifest(manifest: &DatasetManifest) -> String {
    let header = ManifestHeader {
        format: MANIFEST_FORMAT.to_string(),
        version: MANIFEST_VERSION,
        provenance: manifest.provenance.clone(),
    };
    let mut out = serde_json::to_string(&header).expect("header serializes");
    for r in &manifest.records {
        out.push('\n');
        out.push_str(&serde_json::to_string(r).expect("record serializes"));
    }
    out.push('\n');
    out
}
