//! CPG exchange format: one JSON document per function.
//!
//! The document is the interop surface for externally produced graphs
//! (e.g. converted Joern output):
//!
//! ```json
//! {
//!   "format_version": 1,
//!   "function_id": "f1",
//!   "label": "vulnerable",
//!   "nodes": [{"node_id": 0, "kind": "entry", "tokens": [], "line": 1}],
//!   "edges": [{"src": 0, "dst": 1, "kind": "AST"}]
//! }
//! ```
//!
//! Node kinds are `"entry" | "statement" | "condition" | "syntax"`; edge
//! kinds exactly `"AST" | "CFG" | "DDG" | "CDG"`; labels
//! `"vulnerable" | "clean" | "unknown"`. [`save_cpg`] always emits the
//! canonical form: nodes sorted by `node_id`, edges by `(src, dst, kind)`.

use super::{Cpg, CpgEdge, CpgNode, IngestError, Label};
use serde::{Deserialize, Serialize};

/// Current exchange format version.
pub const CPG_FORMAT_VERSION: u32 = 1;

/// The serialized form of a [`Cpg`] plus its label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpgDocument {
    pub format_version: u32,
    pub function_id: String,
    pub label: Label,
    pub nodes: Vec<CpgNode>,
    pub edges: Vec<CpgEdge>,
}

impl CpgDocument {
    pub fn new(cpg: &Cpg, label: Label) -> Self {
        CpgDocument {
            format_version: CPG_FORMAT_VERSION,
            function_id: cpg.function_id.clone(),
            label,
            nodes: cpg.nodes.clone(),
            edges: cpg.edges.clone(),
        }
    }

    fn sort(&mut self) {
        self.nodes.sort_by_key(|n| n.node_id);
        self.edges.sort();
    }

    fn into_cpg(self) -> Cpg {
        Cpg {
            function_id: self.function_id,
            nodes: self.nodes,
            edges: self.edges,
        }
    }
}

fn schema_err(message: String) -> IngestError {
    IngestError::Schema {
        field: "document".into(),
        message,
    }
}

/// Parses and validates an exchange document, keeping the label.
pub fn parse_cpg_document(text: &str) -> Result<(Cpg, Label), IngestError> {
    let mut doc: CpgDocument = serde_json::from_str(text).map_err(|e| {
        // serde reports the JSON path of the offending field.
        schema_err(e.to_string())
    })?;
    if doc.format_version != CPG_FORMAT_VERSION {
        return Err(IngestError::Schema {
            field: "format_version".into(),
            message: format!(
                "unsupported version {} (expected {})",
                doc.format_version, CPG_FORMAT_VERSION
            ),
        });
    }
    doc.sort();
    let label = doc.label;
    let cpg = doc.into_cpg();
    cpg.validate()?;
    Ok((cpg, label))
}

/// Loads a [`Cpg`] from exchange-format text, validating every invariant.
pub fn load_cpg(text: &str) -> Result<Cpg, IngestError> {
    parse_cpg_document(text).map(|(cpg, _)| cpg)
}

/// Serializes a [`Cpg`] in canonical exchange form.
pub fn save_cpg(cpg: &Cpg, label: Label) -> String {
    let mut doc = CpgDocument::new(cpg, label);
    doc.sort();
    serde_json::to_string_pretty(&doc).expect("cpg document serializes")
}

/// Canonical re-serialization of a valid document: sorted nodes/edges,
/// stable field order.
pub fn canonicalize_document(text: &str) -> Result<String, IngestError> {
    let (cpg, label) = parse_cpg_document(text)?;
    Ok(save_cpg(&cpg, label))
}
