//! Code property graphs: mini-C parsing, exchange format, PDG view.
//!
//! A [`Cpg`] unifies the syntax tree (`AST` edges), control flow (`CFG`),
//! data dependence (`DDG`, reaching definitions) and control dependence
//! (`CDG`, structural) of one function. Graphs come either from
//! [`parse_function`] (the built-in mini-C frontend) or from
//! [`load_cpg`] (the JSON exchange format, for externally produced
//! graphs).

mod exchange;
mod minic;

pub use exchange::{canonicalize_document, load_cpg, parse_cpg_document, save_cpg, CpgDocument};
pub use minic::parse_function;

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

/// Node identifier, unique within one [`Cpg`].
pub type NodeId = u32;

/// Ground-truth label attached to a function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Vulnerable,
    Clean,
    Unknown,
}

/// One function of a corpus, before parsing.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SourceFunction {
    pub id: String,
    pub name: String,
    pub source: String,
    pub label: Label,
}

/// Node kind inside a [`Cpg`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Entry,
    Statement,
    Condition,
    Syntax,
}

/// Edge kind inside a [`Cpg`]. The exchange format spells these exactly
/// `"AST"`, `"CFG"`, `"DDG"`, `"CDG"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EdgeKind {
    AST,
    CFG,
    DDG,
    CDG,
}

/// A statement or syntactic element.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CpgNode {
    pub node_id: NodeId,
    pub kind: NodeKind,
    pub tokens: Vec<String>,
    pub line: u32,
}

/// A directed edge of one of the four kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CpgEdge {
    pub src: NodeId,
    pub dst: NodeId,
    pub kind: EdgeKind,
}

/// Unified code property graph of one function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cpg {
    pub function_id: String,
    pub nodes: Vec<CpgNode>,
    pub edges: Vec<CpgEdge>,
}

/// Program dependence view: statement/condition nodes plus DDG/CDG edges.
#[derive(Debug, Clone, PartialEq)]
pub struct Pdg {
    pub function_id: String,
    pub nodes: BTreeSet<NodeId>,
    pub edges: Vec<CpgEdge>,
}

/// Grammar violation in mini-C input.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("parse error at {line}:{column}: {message}")]
pub struct ParseError {
    pub line: u32,
    pub column: u32,
    pub message: String,
}

/// Invalid exchange document or violated graph invariant.
#[derive(Debug, Error)]
pub enum IngestError {
    #[error("schema error in field `{field}`: {message}")]
    Schema { field: String, message: String },
    #[error("edge references missing node_id {0}")]
    DanglingEdge(NodeId),
    #[error(transparent)]
    Parse(#[from] ParseError),
}

impl Cpg {
    /// Node lookup by id.
    pub fn node(&self, id: NodeId) -> Option<&CpgNode> {
        self.nodes.iter().find(|n| n.node_id == id)
    }

    /// Ids of statement and condition nodes, ascending.
    pub fn pdg_node_ids(&self) -> BTreeSet<NodeId> {
        self.nodes
            .iter()
            .filter(|n| matches!(n.kind, NodeKind::Statement | NodeKind::Condition))
            .map(|n| n.node_id)
            .collect()
    }

    /// Checks every structural invariant; `parse_function` output always
    /// passes, loaded documents are checked on ingest.
    pub fn validate(&self) -> Result<(), IngestError> {
        let mut ids = BTreeSet::new();
        for (i, n) in self.nodes.iter().enumerate() {
            if !ids.insert(n.node_id) {
                return Err(IngestError::Schema {
                    field: format!("nodes[{i}].node_id"),
                    message: format!("duplicate node_id {}", n.node_id),
                });
            }
            if matches!(n.kind, NodeKind::Statement | NodeKind::Condition) && n.tokens.is_empty() {
                return Err(IngestError::Schema {
                    field: format!("nodes[{i}].tokens"),
                    message: "statement/condition nodes require tokens".into(),
                });
            }
        }
        if !self.nodes.iter().any(|n| n.kind == NodeKind::Entry) {
            return Err(IngestError::Schema {
                field: "nodes".into(),
                message: "graph has no entry node".into(),
            });
        }

        let kind_of: BTreeMap<NodeId, NodeKind> =
            self.nodes.iter().map(|n| (n.node_id, n.kind)).collect();
        let mut seen = BTreeSet::new();
        let mut ast_parent: BTreeMap<NodeId, NodeId> = BTreeMap::new();
        for (i, e) in self.edges.iter().enumerate() {
            for end in [e.src, e.dst] {
                if !ids.contains(&end) {
                    return Err(IngestError::DanglingEdge(end));
                }
            }
            if !seen.insert((e.src, e.dst, e.kind)) {
                return Err(IngestError::Schema {
                    field: format!("edges[{i}]"),
                    message: format!("duplicate edge ({}, {}, {:?})", e.src, e.dst, e.kind),
                });
            }
            match e.kind {
                EdgeKind::AST => {
                    if ast_parent.insert(e.dst, e.src).is_some() {
                        return Err(IngestError::Schema {
                            field: format!("edges[{i}]"),
                            message: format!("node {} has multiple AST parents", e.dst),
                        });
                    }
                }
                EdgeKind::CFG => {
                    let ok = |id: NodeId| {
                        matches!(
                            kind_of[&id],
                            NodeKind::Entry | NodeKind::Statement | NodeKind::Condition
                        )
                    };
                    if !ok(e.src) || !ok(e.dst) {
                        return Err(IngestError::Schema {
                            field: format!("edges[{i}]"),
                            message: "CFG edges connect only entry/statement/condition nodes"
                                .into(),
                        });
                    }
                }
                _ => {}
            }
        }

        // AST parent chains must terminate at an entry node without cycles.
        for n in &self.nodes {
            let mut cur = n.node_id;
            let mut hops = 0usize;
            while let Some(&p) = ast_parent.get(&cur) {
                hops += 1;
                if hops > self.nodes.len() {
                    return Err(IngestError::Schema {
                        field: "edges".into(),
                        message: "AST edges contain a cycle".into(),
                    });
                }
                cur = p;
            }
            if ast_parent.contains_key(&n.node_id) && kind_of[&cur] != NodeKind::Entry {
                return Err(IngestError::Schema {
                    field: "edges".into(),
                    message: format!("AST tree of node {} is not rooted at an entry node", cur),
                });
            }
        }
        Ok(())
    }
}

/// Projects a [`Cpg`] onto its program dependence graph: statement and
/// condition nodes with the DDG and CDG edges between them.
pub fn pdg_view(cpg: &Cpg) -> Pdg {
    let nodes = cpg.pdg_node_ids();
    let edges = cpg
        .edges
        .iter()
        .filter(|e| matches!(e.kind, EdgeKind::DDG | EdgeKind::CDG))
        .filter(|e| nodes.contains(&e.src) && nodes.contains(&e.dst))
        .copied()
        .collect();
    Pdg {
        function_id: cpg.function_id.clone(),
        nodes,
        edges,
    }
}
