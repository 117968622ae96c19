//! Gated graph network over CPG nodes: per-function feature vectors and
//! behavior-subgraph vectors.
//!
//! Each propagation step aggregates neighbor features through the
//! adjacency matrix and feeds them to a GRU cell (shared weights across
//! steps). Per step, node features are mean-pooled; the pooled vectors
//! of all steps are concatenated and projected back to `d` dimensions.
//! Training minimizes cross-entropy of a logistic head on the projected
//! features; gradients are computed by hand-rolled reverse accumulation
//! (finite-difference checked in the tests and acceptance suite).
//!
//! All summations run in a canonical node order (line, kind, tokens), so
//! encoding is bitwise invariant under node relabeling.

use crate::detector::{GammaMode, Split, SplitMask, TrainConfig};
use crate::graph_ingest::{Cpg, CpgEdge, CpgNode, NodeId};
use crate::rng::Rng;
use crate::slicer::BehaviorSubgraph;
use crate::token_embed::{embed_node, EmbeddingTable, Vocabulary};
use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EncoderError {
    #[error("shape mismatch: {context}")]
    ShapeMismatch { context: String },
    #[error("graph has no nodes")]
    EmptyGraph,
    #[error("training split contains a single class")]
    DegenerateLabels,
}

/// GRU gate weights shared across propagation steps, plus the projection
/// that maps the concatenated per-step pools back to `d` dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GgnnParams {
    pub w_z: Array2<f64>,
    pub w_r: Array2<f64>,
    pub w_h: Array2<f64>,
    pub u_z: Array2<f64>,
    pub u_r: Array2<f64>,
    pub u_h: Array2<f64>,
    pub b_z: Array1<f64>,
    pub b_r: Array1<f64>,
    pub b_h: Array1<f64>,
    pub proj: Array2<f64>,
    pub proj_bias: Array1<f64>,
    pub steps: usize,
}

/// Logistic head used while training the encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticHead {
    pub w: Array1<f64>,
    pub b: f64,
}

impl LogisticHead {
    pub fn zeros(dim: usize) -> Self {
        LogisticHead {
            w: Array1::zeros(dim),
            b: 0.0,
        }
    }
}

impl GgnnParams {
    pub fn dim(&self) -> usize {
        self.w_z.nrows()
    }

    /// Glorot-uniform initialization, deterministic under the seed.
    pub fn init(dim: usize, steps: usize, seed: u64) -> Self {
        assert!(steps >= 1, "propagation step count must be at least 1");
        let mut rng = Rng::new(seed);
        let mat = |rows: usize, cols: usize, rng: &mut Rng| {
            let limit = (6.0 / (rows + cols) as f64).sqrt();
            let mut m = Array2::<f64>::zeros((rows, cols));
            for x in m.iter_mut() {
                *x = rng.range_f64(-limit, limit);
            }
            m
        };
        GgnnParams {
            w_z: mat(dim, dim, &mut rng),
            u_z: mat(dim, dim, &mut rng),
            w_r: mat(dim, dim, &mut rng),
            u_r: mat(dim, dim, &mut rng),
            w_h: mat(dim, dim, &mut rng),
            u_h: mat(dim, dim, &mut rng),
            b_z: Array1::zeros(dim),
            b_r: Array1::zeros(dim),
            b_h: Array1::zeros(dim),
            proj: mat(steps * dim, dim, &mut rng),
            proj_bias: Array1::zeros(dim),
            steps,
        }
    }

    fn tensors(&self) -> Vec<&[f64]> {
        vec![
            self.w_z.as_slice().unwrap(),
            self.w_r.as_slice().unwrap(),
            self.w_h.as_slice().unwrap(),
            self.u_z.as_slice().unwrap(),
            self.u_r.as_slice().unwrap(),
            self.u_h.as_slice().unwrap(),
            self.b_z.as_slice().unwrap(),
            self.b_r.as_slice().unwrap(),
            self.b_h.as_slice().unwrap(),
            self.proj.as_slice().unwrap(),
            self.proj_bias.as_slice().unwrap(),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.w_z.as_slice_mut().unwrap(),
            self.w_r.as_slice_mut().unwrap(),
            self.w_h.as_slice_mut().unwrap(),
            self.u_z.as_slice_mut().unwrap(),
            self.u_r.as_slice_mut().unwrap(),
            self.u_h.as_slice_mut().unwrap(),
            self.b_z.as_slice_mut().unwrap(),
            self.b_r.as_slice_mut().unwrap(),
            self.b_h.as_slice_mut().unwrap(),
            self.proj.as_slice_mut().unwrap(),
            self.proj_bias.as_slice_mut().unwrap(),
        ]
    }

    /// All trainable values in a fixed order (used by the optimizer and
    /// by finite-difference checks).
    pub fn flatten(&self, head: &LogisticHead) -> Vec<f64> {
        let mut out = Vec::new();
        for t in self.tensors() {
            out.extend_from_slice(t);
        }
        out.extend_from_slice(head.w.as_slice().unwrap());
        out.push(head.b);
        out
    }

    pub fn set_from_flat(&mut self, head: &mut LogisticHead, flat: &[f64]) {
        let mut pos = 0usize;
        for t in self.tensors_mut() {
            t.copy_from_slice(&flat[pos..pos + t.len()]);
            pos += t.len();
        }
        let hw = head.w.as_slice_mut().unwrap();
        hw.copy_from_slice(&flat[pos..pos + hw.len()]);
        pos += hw.len();
        head.b = flat[pos];
    }
}

/// Gradient accumulator with the same shapes as [`GgnnParams`].
#[derive(Debug, Clone)]
pub struct GgnnGrads {
    pub w_z: Array2<f64>,
    pub w_r: Array2<f64>,
    pub w_h: Array2<f64>,
    pub u_z: Array2<f64>,
    pub u_r: Array2<f64>,
    pub u_h: Array2<f64>,
    pub b_z: Array1<f64>,
    pub b_r: Array1<f64>,
    pub b_h: Array1<f64>,
    pub proj: Array2<f64>,
    pub proj_bias: Array1<f64>,
    pub head_w: Array1<f64>,
    pub head_b: f64,
}

impl GgnnGrads {
    pub fn zeros_like(params: &GgnnParams) -> Self {
        let d = params.dim();
        GgnnGrads {
            w_z: Array2::zeros((d, d)),
            w_r: Array2::zeros((d, d)),
            w_h: Array2::zeros((d, d)),
            u_z: Array2::zeros((d, d)),
            u_r: Array2::zeros((d, d)),
            u_h: Array2::zeros((d, d)),
            b_z: Array1::zeros(d),
            b_r: Array1::zeros(d),
            b_h: Array1::zeros(d),
            proj: Array2::zeros((params.steps * d, d)),
            proj_bias: Array1::zeros(d),
            head_w: Array1::zeros(d),
            head_b: 0.0,
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for t in [
            &self.w_z, &self.w_r, &self.w_h, &self.u_z, &self.u_r, &self.u_h,
        ] {
            out.extend_from_slice(t.as_slice().unwrap());
        }
        for t in [&self.b_z, &self.b_r, &self.b_h] {
            out.extend_from_slice(t.as_slice().unwrap());
        }
        out.extend_from_slice(self.proj.as_slice().unwrap());
        out.extend_from_slice(self.proj_bias.as_slice().unwrap());
        out.extend_from_slice(self.head_w.as_slice().unwrap());
        out.push(self.head_b);
        out
    }
}

// ---------------------------------------------------------------------
// Graph views
// ---------------------------------------------------------------------

/// A graph ready for encoding: canonical node order, embedded features,
/// symmetrized binary adjacency.
#[derive(Debug, Clone)]
pub struct GraphView {
    pub features: Array2<f64>,
    pub adjacency: Array2<f64>,
}

fn canonical_order(nodes: &[&CpgNode]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..nodes.len()).collect();
    idx.sort_by(|&a, &b| {
        let ka = (nodes[a].line, nodes[a].kind, &nodes[a].tokens);
        let kb = (nodes[b].line, nodes[b].kind, &nodes[b].tokens);
        ka.cmp(&kb)
    });
    idx
}

fn build_view(
    nodes: &[&CpgNode],
    edges: &[CpgEdge],
    vocab: &Vocabulary,
    table: &EmbeddingTable,
) -> Result<GraphView, EncoderError> {
    if nodes.is_empty() {
        return Err(EncoderError::EmptyGraph);
    }
    let order = canonical_order(nodes);
    let n = nodes.len();
    let d = table.dim();
    let mut features = Array2::<f64>::zeros((n, d));
    let mut rank_of: BTreeMap<NodeId, usize> = BTreeMap::new();
    for (rank, &i) in order.iter().enumerate() {
        features
            .row_mut(rank)
            .assign(&embed_node(nodes[i], vocab, table));
        rank_of.insert(nodes[i].node_id, rank);
    }
    let mut adjacency = Array2::<f64>::zeros((n, n));
    for e in edges {
        let (Some(&a), Some(&b)) = (rank_of.get(&e.src), rank_of.get(&e.dst)) else {
            continue;
        };
        if a != b {
            adjacency[[a, b]] = 1.0;
            adjacency[[b, a]] = 1.0;
        }
    }
    Ok(GraphView {
        features,
        adjacency,
    })
}

/// View over a whole CPG (all nodes, all edge kinds).
pub fn function_view(
    cpg: &Cpg,
    vocab: &Vocabulary,
    table: &EmbeddingTable,
) -> Result<GraphView, EncoderError> {
    let nodes: Vec<&CpgNode> = cpg.nodes.iter().collect();
    build_view(&nodes, &cpg.edges, vocab, table)
}

/// View over a behavior subgraph (its nodes, its induced PDG edges).
pub fn behavior_view(
    subgraph: &BehaviorSubgraph,
    cpg: &Cpg,
    vocab: &Vocabulary,
    table: &EmbeddingTable,
) -> Result<GraphView, EncoderError> {
    let nodes: Vec<&CpgNode> = cpg
        .nodes
        .iter()
        .filter(|n| subgraph.node_ids.contains(&n.node_id))
        .collect();
    build_view(&nodes, &subgraph.edges, vocab, table)
}

/// Binary symmetrized adjacency over all edge kinds, indexed by rank of
/// `node_id`; zero diagonal.
pub fn adjacency(cpg: &Cpg) -> Array2<f64> {
    let mut ids: Vec<NodeId> = cpg.nodes.iter().map(|n| n.node_id).collect();
    ids.sort_unstable();
    let rank: BTreeMap<NodeId, usize> = ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
    let n = ids.len();
    let mut adj = Array2::<f64>::zeros((n, n));
    for e in &cpg.edges {
        let (a, b) = (rank[&e.src], rank[&e.dst]);
        if a != b {
            adj[[a, b]] = 1.0;
            adj[[b, a]] = 1.0;
        }
    }
    adj
}

// ---------------------------------------------------------------------
// Forward / backward
// ---------------------------------------------------------------------

fn sigmoid_map(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(|v| 1.0 / (1.0 + (-v).exp()))
}

struct StepCache {
    h_prev: Array2<f64>,
    m: Array2<f64>,
    z: Array2<f64>,
    r: Array2<f64>,
    c: Array2<f64>,
}

struct ForwardCache {
    steps: Vec<StepCache>,
    pooled: Array1<f64>,
    feature: Array1<f64>,
}

fn check_shapes(h: &Array2<f64>, adj: &Array2<f64>, params: &GgnnParams) -> Result<(), EncoderError> {
    let (n, d) = h.dim();
    if adj.dim() != (n, n) {
        return Err(EncoderError::ShapeMismatch {
            context: format!("adjacency {:?} vs {n} feature rows", adj.dim()),
        });
    }
    if d != params.dim() {
        return Err(EncoderError::ShapeMismatch {
            context: format!("feature dim {d} vs parameter dim {}", params.dim()),
        });
    }
    Ok(())
}

fn gru_step(h: &Array2<f64>, adj: &Array2<f64>, params: &GgnnParams) -> StepCache {
    let m = adj.dot(h);
    let z = sigmoid_map(&(m.dot(&params.w_z) + h.dot(&params.u_z) + &params.b_z));
    let r = sigmoid_map(&(m.dot(&params.w_r) + h.dot(&params.u_r) + &params.b_r));
    let c = (m.dot(&params.w_h) + (&r * h).dot(&params.u_h) + &params.b_h).mapv(f64::tanh);
    StepCache {
        h_prev: h.clone(),
        m,
        z,
        r,
        c,
    }
}

/// One GRU propagation step: message passing through the adjacency, then
/// the gated update.
pub fn propagate(
    h: &Array2<f64>,
    adj: &Array2<f64>,
    params: &GgnnParams,
) -> Result<Array2<f64>, EncoderError> {
    check_shapes(h, adj, params)?;
    let s = gru_step(h, adj, params);
    Ok((1.0 - &s.z) * &s.h_prev + &s.z * &s.c)
}

fn forward_cached(view: &GraphView, params: &GgnnParams) -> Result<ForwardCache, EncoderError> {
    check_shapes(&view.features, &view.adjacency, params)?;
    let d = params.dim();
    let mut h = view.features.clone();
    let mut steps = Vec::with_capacity(params.steps);
    let mut pooled = Array1::<f64>::zeros(params.steps * d);
    for t in 0..params.steps {
        let cache = gru_step(&h, &view.adjacency, params);
        h = (1.0 - &cache.z) * &cache.h_prev + &cache.z * &cache.c;
        let mean = h.mean_axis(Axis(0)).expect("non-empty graph");
        pooled
            .slice_mut(ndarray::s![t * d..(t + 1) * d])
            .assign(&mean);
        steps.push(cache);
    }
    let feature = pooled.dot(&params.proj) + &params.proj_bias;
    Ok(ForwardCache {
        steps,
        pooled,
        feature,
    })
}

/// Accumulates parameter gradients for one graph given `d loss / d x`.
fn backward(
    view: &GraphView,
    params: &GgnnParams,
    cache: &ForwardCache,
    dx: &Array1<f64>,
    grads: &mut GgnnGrads,
) {
    let d = params.dim();
    let n = view.features.nrows();

    // x = pooled · proj + proj_bias
    let pooled_col = cache.pooled.view().insert_axis(Axis(1));
    let dx_row = dx.view().insert_axis(Axis(0));
    grads.proj += &pooled_col.dot(&dx_row);
    grads.proj_bias += dx;
    let dpooled = params.proj.dot(dx);

    let mut carry = Array2::<f64>::zeros((n, d));
    for t in (0..params.steps).rev() {
        let s = &cache.steps[t];
        // Mean pooling sends dpooled_t / n to every row of H_t.
        let mean_grad = dpooled.slice(ndarray::s![t * d..(t + 1) * d]);
        let mut dh = carry;
        for mut row in dh.rows_mut() {
            row += &(&mean_grad / n as f64);
        }

        let one_minus_c2 = s.c.mapv(|v| 1.0 - v * v);
        let dz = &dh * &(&s.c - &s.h_prev);
        let dc = &dh * &s.z;
        let mut dhp = &dh * &(1.0 - &s.z);

        let dca = &dc * &one_minus_c2;
        grads.w_h += &s.m.t().dot(&dca);
        grads.u_h += &(&s.r * &s.h_prev).t().dot(&dca);
        grads.b_h += &dca.sum_axis(Axis(0));
        let mut dm = dca.dot(&params.w_h.t());
        let drh = dca.dot(&params.u_h.t());
        let dr = &drh * &s.h_prev;
        dhp += &(&drh * &s.r);

        let dra = &dr * &s.r * &s.r.mapv(|v| 1.0 - v);
        grads.w_r += &s.m.t().dot(&dra);
        grads.u_r += &s.h_prev.t().dot(&dra);
        grads.b_r += &dra.sum_axis(Axis(0));
        dm += &dra.dot(&params.w_r.t());
        dhp += &dra.dot(&params.u_r.t());

        let dza = &dz * &s.z * &s.z.mapv(|v| 1.0 - v);
        grads.w_z += &s.m.t().dot(&dza);
        grads.u_z += &s.h_prev.t().dot(&dza);
        grads.b_z += &dza.sum_axis(Axis(0));
        dm += &dza.dot(&params.w_z.t());
        dhp += &dza.dot(&params.u_z.t());

        dhp += &view.adjacency.t().dot(&dm);
        carry = dhp;
    }
}

/// Encodes one prepared graph view into a `d`-vector.
pub fn encode_view(view: &GraphView, params: &GgnnParams) -> Result<Array1<f64>, EncoderError> {
    forward_cached(view, params).map(|c| c.feature)
}

/// Encodes a whole function CPG.
pub fn encode_function(
    cpg: &Cpg,
    vocab: &Vocabulary,
    table: &EmbeddingTable,
    params: &GgnnParams,
) -> Result<Array1<f64>, EncoderError> {
    encode_view(&function_view(cpg, vocab, table)?, params)
}

/// Encodes one behavior subgraph with the already-trained encoder.
pub fn encode_behavior(
    subgraph: &BehaviorSubgraph,
    cpg: &Cpg,
    vocab: &Vocabulary,
    table: &EmbeddingTable,
    params: &GgnnParams,
) -> Result<Array1<f64>, EncoderError> {
    encode_view(&behavior_view(subgraph, cpg, vocab, table)?, params)
}

// ---------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------

fn stable_bce(logit: f64, label: f64) -> f64 {
    logit.max(0.0) + (1.0 + (-logit.abs()).exp()).ln() - label * logit
}

/// Mean cross-entropy of the logistic head over the given samples plus
/// `weight_decay · ‖θ‖²`, and its exact gradient. Public so gradient
/// checks can exercise the full computation.
pub fn loss_and_gradients(
    views: &[&GraphView],
    labels: &[f64],
    params: &GgnnParams,
    head: &LogisticHead,
    weight_decay: f64,
) -> Result<(f64, GgnnGrads), EncoderError> {
    assert_eq!(views.len(), labels.len());
    let mut grads = GgnnGrads::zeros_like(params);
    let count = views.len() as f64;
    let mut loss = 0.0;
    for (view, &y) in views.iter().zip(labels) {
        let cache = forward_cached(view, params)?;
        let logit = cache.feature.dot(&head.w) + head.b;
        loss += stable_bce(logit, y) / count;
        let dlogit = (1.0 / (1.0 + (-logit).exp()) - y) / count;
        grads.head_w += &(&cache.feature * dlogit);
        grads.head_b += dlogit;
        let dx = head.w.mapv(|w| w * dlogit);
        backward(view, params, &cache, &dx, &mut grads);
    }
    if weight_decay > 0.0 {
        let flat = params.flatten(head);
        loss += weight_decay * flat.iter().map(|v| v * v).sum::<f64>();
        let gflat = grads.flatten();
        let updated: Vec<f64> = gflat
            .iter()
            .zip(&flat)
            .map(|(g, p)| g + 2.0 * weight_decay * p)
            .collect();
        set_grads_from_flat(&mut grads, &updated);
    }
    Ok((loss, grads))
}

fn set_grads_from_flat(grads: &mut GgnnGrads, flat: &[f64]) {
    let mut pos = 0usize;
    for t in [
        &mut grads.w_z,
        &mut grads.w_r,
        &mut grads.w_h,
        &mut grads.u_z,
        &mut grads.u_r,
        &mut grads.u_h,
    ] {
        let s = t.as_slice_mut().unwrap();
        s.copy_from_slice(&flat[pos..pos + s.len()]);
        pos += s.len();
    }
    for t in [&mut grads.b_z, &mut grads.b_r, &mut grads.b_h] {
        let s = t.as_slice_mut().unwrap();
        s.copy_from_slice(&flat[pos..pos + s.len()]);
        pos += s.len();
    }
    {
        let s = grads.proj.as_slice_mut().unwrap();
        s.copy_from_slice(&flat[pos..pos + s.len()]);
        pos += s.len();
    }
    for t in [&mut grads.proj_bias, &mut grads.head_w] {
        let s = t.as_slice_mut().unwrap();
        s.copy_from_slice(&flat[pos..pos + s.len()]);
        pos += s.len();
    }
    grads.head_b = flat[pos];
}

/// Adam over a flat parameter vector; learning-rate schedule is applied
/// by the caller.
pub(crate) struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl Adam {
    pub(crate) fn new(len: usize, beta1: f64) -> Self {
        Adam {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
            beta1,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub(crate) fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        self.t += 1;
        let b1c = 1.0 - self.beta1.powi(self.t as i32);
        let b2c = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grads[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grads[i] * grads[i];
            let mhat = self.m[i] / b1c;
            let vhat = self.v[i] / b2c;
            params[i] -= lr * mhat / (vhat.sqrt() + self.eps);
        }
    }
}

pub(crate) fn epoch_lr(config: &TrainConfig, epoch: usize) -> f64 {
    match config.gamma_mode {
        GammaMode::LrDecay => config.learning_rate * config.gamma.powi(epoch as i32),
        GammaMode::AdamBeta1 => config.learning_rate,
    }
}

pub(crate) fn adam_beta1(config: &TrainConfig) -> f64 {
    match config.gamma_mode {
        GammaMode::LrDecay => 0.9,
        GammaMode::AdamBeta1 => config.gamma,
    }
}

fn binary_f_measure(predicted: &[bool], truth: &[bool]) -> f64 {
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fn_ = 0usize;
    for (&p, &t) in predicted.iter().zip(truth) {
        match (p, t) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    if 2 * tp + fp + fn_ == 0 {
        0.0
    } else {
        2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
    }
}

/// Trains the encoder with a logistic head on the train split, selecting
/// parameters by validation F-measure (train F-measure when the split
/// has no validation samples). Deterministic under the config seed.
pub fn train_intra(
    cpgs: &[Cpg],
    labels: &[bool],
    split: &SplitMask,
    vocab: &Vocabulary,
    table: &EmbeddingTable,
    steps: usize,
    config: &TrainConfig,
) -> Result<GgnnParams, EncoderError> {
    assert_eq!(cpgs.len(), labels.len());
    assert_eq!(cpgs.len(), split.len());
    let d = table.dim();

    let mut train_views = Vec::new();
    let mut train_labels = Vec::new();
    let mut val_views = Vec::new();
    let mut val_truth = Vec::new();
    for (i, cpg) in cpgs.iter().enumerate() {
        let view = function_view(cpg, vocab, table)?;
        match split.get(i) {
            Split::Train => {
                train_views.push(view);
                train_labels.push(if labels[i] { 1.0 } else { 0.0 });
            }
            Split::Val => {
                val_views.push(view);
                val_truth.push(labels[i]);
            }
            Split::Test => {}
        }
    }
    if train_labels.is_empty()
        || train_labels.iter().all(|&y| y == 1.0)
        || train_labels.iter().all(|&y| y == 0.0)
    {
        return Err(EncoderError::DegenerateLabels);
    }

    let mut params = GgnnParams::init(d, steps, config.seed);
    let mut head = LogisticHead::zeros(d);
    let mut best = (params.clone(), f64::NEG_INFINITY);
    let mut adam = Adam::new(params.flatten(&head).len(), adam_beta1(config));
    let view_refs: Vec<&GraphView> = train_views.iter().collect();

    for epoch in 0..config.epochs {
        let (_, grads) =
            loss_and_gradients(&view_refs, &train_labels, &params, &head, config.weight_decay)?;
        let mut flat = params.flatten(&head);
        adam.step(&mut flat, &grads.flatten(), epoch_lr(config, epoch));
        params.set_from_flat(&mut head, &flat);

        // Selection on the validation split (train split when empty);
        // latest best wins ties.
        let (views, truth): (&[GraphView], Vec<bool>) = if val_views.is_empty() {
            (
                &train_views,
                train_labels.iter().map(|&y| y == 1.0).collect(),
            )
        } else {
            (&val_views, val_truth.clone())
        };
        let preds: Vec<bool> = views
            .iter()
            .map(|v| predict_one(v, &params, &head))
            .collect::<Result<_, _>>()?;
        let f = binary_f_measure(&preds, &truth);
        if f >= best.1 {
            best = (params.clone(), f);
        }
    }

    Ok(if config.epochs == 0 { params } else { best.0 })
}

fn predict_one(
    view: &GraphView,
    params: &GgnnParams,
    head: &LogisticHead,
) -> Result<bool, EncoderError> {
    let x = encode_view(view, params)?;
    Ok(x.dot(&head.w) + head.b >= 0.0)
}
