//! Vulnerability interest points and bidirectional PDG slices.
//!
//! A statement is an interest point when it calls a configured sensitive
//! API, subscripts an array, performs integer arithmetic on a declared
//! integer, or dereferences/takes the address of a pointer. Slicing an
//! interest point collects everything it can reach and everything that
//! can reach it over PDG edges; the result is one "behavior" subgraph.

use crate::graph_ingest::{Cpg, CpgEdge, NodeId, NodeKind, Pdg};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

/// Which matching rule classified a node as interesting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterestCategory {
    SensitiveApi,
    Array,
    Integer,
    Pointer,
}

/// A PDG node flagged by one of the interest rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterestPoint {
    pub node_id: NodeId,
    pub category: InterestCategory,
}

/// A bidirectional slice around one interest point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviorSubgraph {
    pub function_id: String,
    pub interest_point: InterestPoint,
    pub node_ids: BTreeSet<NodeId>,
    pub edges: Vec<CpgEdge>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SliceError {
    #[error("interest point node {0} is not a PDG node")]
    UnknownNode(NodeId),
}

/// Sensitive API names, read from a plain-text config file (one name per
/// line, `#` starts a comment).
#[derive(Debug, Clone, Default)]
pub struct ApiList {
    names: BTreeSet<String>,
}

impl ApiList {
    pub fn new<I: IntoIterator<Item = S>, S: Into<String>>(names: I) -> Self {
        ApiList {
            names: names.into_iter().map(Into::into).collect(),
        }
    }

    /// Memory/string/IO names used when no config file is given. The same
    /// set ships as `configs/api_list.txt`.
    pub fn default_names() -> Self {
        Self::new([
            "gets", "memcpy", "memmove", "memset", "read", "realloc", "recv", "scanf", "send",
            "sprintf", "strcat", "strcpy", "system", "write", "free", "malloc",
        ])
    }

    pub fn parse(text: &str) -> Self {
        let names = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .filter(|l| !l.is_empty())
            .map(str::to_string)
            .collect();
        ApiList { names }
    }

    pub fn contains(&self, name: &str) -> bool {
        self.names.contains(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.names.iter().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

fn is_ident(tok: &str) -> bool {
    tok.chars()
        .next()
        .is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
}

const TYPE_KEYWORDS: [&str; 4] = ["void", "int", "char", "float"];

/// Integer-typed variable names recovered from declaration tokens; works
/// on parsed and externally loaded graphs alike.
fn declared_ints(cpg: &Cpg) -> BTreeSet<String> {
    let mut ints = BTreeSet::new();
    for node in &cpg.nodes {
        let t = &node.tokens;
        if t.is_empty() || !(t[0] == "int" || t[0] == "char") {
            continue;
        }
        let mut i = 1;
        let mut pointer = false;
        while i < t.len() && t[i] == "*" {
            pointer = true;
            i += 1;
        }
        if pointer {
            continue;
        }
        if let Some(name) = t.get(i).filter(|s| is_ident(s)) {
            ints.insert(name.clone());
        }
    }
    ints
}

fn is_primary(tok: &str) -> bool {
    is_ident(tok) || tok.chars().next().is_some_and(|c| c.is_ascii_digit()) || tok == ")" || tok == "]"
}

fn classify(
    tokens: &[String],
    ints: &BTreeSet<String>,
    api_list: &ApiList,
) -> Option<InterestCategory> {
    // (a) sensitive API call
    for (i, t) in tokens.iter().enumerate() {
        if is_ident(t) && api_list.contains(t) && tokens.get(i + 1).map(String::as_str) == Some("(")
        {
            return Some(InterestCategory::SensitiveApi);
        }
    }
    // (b) array subscript
    for (i, t) in tokens.iter().enumerate() {
        if t == "[" && i > 0 && is_ident(&tokens[i - 1]) {
            return Some(InterestCategory::Array);
        }
    }
    // (c) integer arithmetic on a declared integer
    let mentions_int = tokens.iter().any(|t| ints.contains(t.as_str()));
    if mentions_int {
        for (i, t) in tokens.iter().enumerate() {
            let binary_pos = i > 0 && is_primary(&tokens[i - 1]);
            if binary_pos && matches!(t.as_str(), "+" | "-" | "/" | "%" | "*") {
                return Some(InterestCategory::Integer);
            }
        }
    }
    // (d) pointer dereference or address-of. In declarations the stars
    // between the type keyword and the declared name are declarators,
    // not dereferences.
    let is_decl = TYPE_KEYWORDS.contains(&tokens[0].as_str());
    let declarator_end = if is_decl {
        tokens
            .iter()
            .position(|t| is_ident(t) && !TYPE_KEYWORDS.contains(&t.as_str()))
            .unwrap_or(tokens.len())
    } else {
        0
    };
    for (i, t) in tokens.iter().enumerate() {
        let unary_pos = i == 0 || !is_primary(&tokens[i - 1]);
        if t == "&" && unary_pos {
            return Some(InterestCategory::Pointer);
        }
        if t == "*"
            && unary_pos
            && i >= declarator_end
            && tokens.get(i + 1).map(String::as_str).is_some_and(is_ident)
        {
            return Some(InterestCategory::Pointer);
        }
    }
    None
}

/// Flags every PDG node that matches an interest rule, in `node_id`
/// order. A node yields at most one point; rules apply in the order
/// sensitive API, array, integer, pointer.
pub fn find_interest_points(pdg: &Pdg, cpg: &Cpg, api_list: &ApiList) -> Vec<InterestPoint> {
    let ints = declared_ints(cpg);
    let tokens_of: BTreeMap<NodeId, &Vec<String>> = cpg
        .nodes
        .iter()
        .filter(|n| matches!(n.kind, NodeKind::Statement | NodeKind::Condition))
        .map(|n| (n.node_id, &n.tokens))
        .collect();
    pdg.nodes
        .iter()
        .filter_map(|id| {
            let tokens = tokens_of.get(id)?;
            classify(tokens, &ints, api_list).map(|category| InterestPoint {
                node_id: *id,
                category,
            })
        })
        .collect()
}

/// Union of the forward and backward transitive closures from `point`,
/// with the induced PDG edges.
pub fn slice(pdg: &Pdg, point: InterestPoint) -> Result<BehaviorSubgraph, SliceError> {
    if !pdg.nodes.contains(&point.node_id) {
        return Err(SliceError::UnknownNode(point.node_id));
    }
    let mut fwd: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
    let mut bwd: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
    for e in &pdg.edges {
        fwd.entry(e.src).or_default().push(e.dst);
        bwd.entry(e.dst).or_default().push(e.src);
    }
    let mut node_ids = BTreeSet::new();
    node_ids.insert(point.node_id);
    for adj in [&fwd, &bwd] {
        let mut stack = vec![point.node_id];
        let mut seen = BTreeSet::new();
        seen.insert(point.node_id);
        while let Some(cur) = stack.pop() {
            if let Some(nexts) = adj.get(&cur) {
                for n in nexts {
                    if seen.insert(*n) {
                        node_ids.insert(*n);
                        stack.push(*n);
                    }
                }
            }
        }
    }
    let edges = pdg
        .edges
        .iter()
        .filter(|e| node_ids.contains(&e.src) && node_ids.contains(&e.dst))
        .copied()
        .collect();
    Ok(BehaviorSubgraph {
        function_id: pdg.function_id.clone(),
        interest_point: point,
        node_ids,
        edges,
    })
}

/// All behavior subgraphs of one function: a slice per interest point,
/// deduplicated by node set (two points with identical slices are one
/// behavior), in interest-point order.
pub fn behaviors_of(pdg: &Pdg, cpg: &Cpg, api_list: &ApiList) -> Vec<BehaviorSubgraph> {
    let mut seen: BTreeSet<Vec<NodeId>> = BTreeSet::new();
    let mut out = Vec::new();
    for point in find_interest_points(pdg, cpg, api_list) {
        let sub = slice(pdg, point).expect("interest points come from the same pdg");
        let key: Vec<NodeId> = sub.node_ids.iter().copied().collect();
        if seen.insert(key) {
            out.push(sub);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph_ingest::{parse_function, pdg_view, EdgeKind};

    fn hand_pdg(n: u32, edges: &[(u32, u32)]) -> Pdg {
        Pdg {
            function_id: "t".into(),
            nodes: (0..n).collect(),
            edges: edges
                .iter()
                .map(|(s, d)| CpgEdge {
                    src: *s,
                    dst: *d,
                    kind: EdgeKind::DDG,
                })
                .collect(),
        }
    }

    fn point(id: NodeId) -> InterestPoint {
        InterestPoint {
            node_id: id,
            category: InterestCategory::Array,
        }
    }

    #[test]
    fn chain_slice_takes_both_directions() {
        let pdg = hand_pdg(3, &[(0, 1), (1, 2)]);
        let sub = slice(&pdg, point(1)).unwrap();
        assert_eq!(sub.node_ids, BTreeSet::from([0, 1, 2]));
        assert_eq!(sub.edges.len(), 2);
    }

    #[test]
    fn isolated_point_slices_to_itself() {
        let pdg = hand_pdg(3, &[(0, 2)]);
        let sub = slice(&pdg, point(1)).unwrap();
        assert_eq!(sub.node_ids, BTreeSet::from([1]));
        assert!(sub.edges.is_empty());
    }

    #[test]
    fn complete_dag_slices_to_everything() {
        let edges: Vec<(u32, u32)> = (0..4)
            .flat_map(|i| ((i + 1)..4).map(move |j| (i, j)))
            .collect();
        let pdg = hand_pdg(4, &edges);
        for id in 0..4 {
            let sub = slice(&pdg, point(id)).unwrap();
            assert_eq!(sub.node_ids.len(), 4);
        }
    }

    #[test]
    fn unknown_node_is_an_error() {
        let pdg = hand_pdg(2, &[(0, 1)]);
        assert_eq!(slice(&pdg, point(9)), Err(SliceError::UnknownNode(9)));
    }

    #[test]
    fn induced_edges_have_both_endpoints_inside() {
        let pdg = hand_pdg(5, &[(0, 1), (1, 2), (3, 4)]);
        let sub = slice(&pdg, point(1)).unwrap();
        for e in &sub.edges {
            assert!(sub.node_ids.contains(&e.src) && sub.node_ids.contains(&e.dst));
        }
        assert_eq!(sub.node_ids, BTreeSet::from([0, 1, 2]));
    }

    #[test]
    fn strcpy_is_a_sensitive_api_point() {
        let cpg = parse_function("void f(char *d, char *s){strcpy(d, s);}").unwrap();
        let pdg = pdg_view(&cpg);
        let points = find_interest_points(&pdg, &cpg, &ApiList::default_names());
        assert!(points
            .iter()
            .any(|p| p.category == InterestCategory::SensitiveApi));
    }

    #[test]
    fn array_write_is_an_array_point() {
        let cpg = parse_function("void f(int i){int a[4]; a[i]=0;}").unwrap();
        let pdg = pdg_view(&cpg);
        let points = find_interest_points(&pdg, &cpg, &ApiList::new(Vec::<String>::new()));
        let write = cpg
            .nodes
            .iter()
            .find(|n| n.tokens.join(" ").contains("a [ i ]"))
            .unwrap();
        assert!(points
            .iter()
            .any(|p| p.node_id == write.node_id && p.category == InterestCategory::Array));
    }

    #[test]
    fn bland_function_has_no_points() {
        let cpg = parse_function("void f(float x){float y = x; g(y);}").unwrap();
        let pdg = pdg_view(&cpg);
        let points = find_interest_points(&pdg, &cpg, &ApiList::default_names());
        assert!(points.is_empty());
    }

    #[test]
    fn integer_arithmetic_rule_needs_declared_int() {
        let int_case = parse_function("void f(){int a = 1; a = a + 2;}").unwrap();
        let points = find_interest_points(
            &pdg_view(&int_case),
            &int_case,
            &ApiList::new(Vec::<String>::new()),
        );
        assert!(points
            .iter()
            .any(|p| p.category == InterestCategory::Integer));

        let float_case = parse_function("void f(){float a = 1; a = a + 2;}").unwrap();
        let points = find_interest_points(
            &pdg_view(&float_case),
            &float_case,
            &ApiList::new(Vec::<String>::new()),
        );
        assert!(points.is_empty());
    }

    #[test]
    fn pointer_ops_are_pointer_points() {
        let cpg = parse_function("void f(float x){float *p; p = &x; *p = 2;}").unwrap();
        let pdg = pdg_view(&cpg);
        let points = find_interest_points(&pdg, &cpg, &ApiList::new(Vec::<String>::new()));
        assert!(points
            .iter()
            .any(|p| p.category == InterestCategory::Pointer));
    }

    #[test]
    fn duplicate_slices_are_one_behavior() {
        // Two interest points inside one strongly connected component
        // slice to the same node set and must collapse to one behavior.
        let nodes: Vec<crate::graph_ingest::CpgNode> = [
            (0u32, vec!["a", "[", "i", "]", "=", "1"]),
            (1u32, vec!["b", "[", "j", "]", "=", "2"]),
        ]
        .into_iter()
        .map(|(id, toks)| crate::graph_ingest::CpgNode {
            node_id: id,
            kind: NodeKind::Statement,
            tokens: toks.into_iter().map(String::from).collect(),
            line: id + 1,
        })
        .collect();
        let pdg = Pdg {
            function_id: "t".into(),
            nodes: BTreeSet::from([0, 1]),
            edges: vec![
                CpgEdge {
                    src: 0,
                    dst: 1,
                    kind: EdgeKind::DDG,
                },
                CpgEdge {
                    src: 1,
                    dst: 0,
                    kind: EdgeKind::DDG,
                },
            ],
        };
        let cpg = Cpg {
            function_id: "t".into(),
            nodes: nodes
                .into_iter()
                .chain([crate::graph_ingest::CpgNode {
                    node_id: 2,
                    kind: NodeKind::Entry,
                    tokens: vec![],
                    line: 0,
                }])
                .collect(),
            edges: pdg.edges.clone(),
        };
        let behaviors = behaviors_of(&pdg, &cpg, &ApiList::new(Vec::<String>::new()));
        assert_eq!(behaviors.len(), 1);
        assert_eq!(behaviors[0].node_ids, BTreeSet::from([0, 1]));
    }

    #[test]
    fn three_distinct_points_three_behaviors() {
        let pdg = hand_pdg(6, &[(0, 1), (2, 3), (4, 5)]);
        let cpg = Cpg {
            function_id: "t".into(),
            nodes: (0..6)
                .map(|i| crate::graph_ingest::CpgNode {
                    node_id: i,
                    kind: NodeKind::Statement,
                    tokens: vec!["b".into(), "[".into(), format!("{i}"), "]".into(), "=".into(), "1".into()],
                    line: i + 1,
                })
                .chain([crate::graph_ingest::CpgNode {
                    node_id: 6,
                    kind: NodeKind::Entry,
                    tokens: vec![],
                    line: 0,
                }])
                .collect(),
            edges: pdg.edges.clone(),
        };
        let behaviors = behaviors_of(&pdg, &cpg, &ApiList::new(Vec::<String>::new()));
        assert_eq!(behaviors.len(), 3);
    }

    #[test]
    fn api_list_parses_comments() {
        let list = ApiList::parse("# header\nstrcpy\n  memcpy  # trailing\n\n");
        assert!(list.contains("strcpy"));
        assert!(list.contains("memcpy"));
        assert_eq!(list.len(), 2);
    }

    #[test]
    fn adding_edges_never_shrinks_slices() {
        let base = hand_pdg(6, &[(0, 1), (1, 2), (3, 4)]);
        let bigger = hand_pdg(6, &[(0, 1), (1, 2), (3, 4), (2, 3)]);
        for id in 0..6 {
            let a = slice(&base, point(id)).unwrap();
            let b = slice(&bigger, point(id)).unwrap();
            assert!(a.node_ids.is_subset(&b.node_ids));
        }
    }
}
