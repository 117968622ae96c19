//! Hypergraph network over intra-function features: transductive
//! training, batch detection and evaluation metrics.
//!
//! `forward` stacks hyperedge convolutions (ReLU between layers, none on
//! the last) and a logistic head. Training is full-batch and
//! transductive: every function participates in propagation, the
//! cross-entropy loss is masked to the train split, and the parameters
//! with the best validation F-measure are kept.

use crate::behavior_cluster::{assign_new, Centroids};
use crate::graph_ingest::{pdg_view, Cpg, Label};
use crate::hypergraph_core::{
    degrees, hyperedge_conv, row_matmul, theta_apply, DegreeDiags, HypergraphError,
    IncidenceMatrix, WeightDiag,
};
use crate::intra_encoder::{
    adam_beta1, encode_behavior, encode_function, epoch_lr, Adam, GgnnParams,
};
use crate::rng::Rng;
use crate::slicer::{behaviors_of, ApiList};
use crate::token_embed::{EmbeddingTable, Vocabulary};
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DetectorError {
    #[error("shape mismatch: {context}")]
    ShapeMismatch { context: String },
    #[error("loss mask selects no functions")]
    EmptyMask,
    #[error("training split contains a single class")]
    DegenerateLabels,
    #[error("predictions and labels have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error(transparent)]
    Hypergraph(#[from] HypergraphError),
    #[error("encoding failed: {0}")]
    Encoding(#[from] crate::intra_encoder::EncoderError),
}

/// Per-layer filters plus the logistic head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HgnnParams {
    pub layers: Vec<Array2<f64>>,
    pub head_w: Array1<f64>,
    pub head_b: f64,
}

impl HgnnParams {
    /// Glorot-uniform layer filters, zero head; deterministic under seed.
    pub fn init(dim: usize, n_layers: usize, seed: u64) -> Self {
        assert!(n_layers >= 1, "at least one convolution layer");
        let mut rng = Rng::new(seed);
        let limit = (6.0 / (2 * dim) as f64).sqrt();
        let layers = (0..n_layers)
            .map(|_| Array2::from_shape_fn((dim, dim), |_| rng.range_f64(-limit, limit)))
            .collect();
        HgnnParams {
            layers,
            head_w: Array1::zeros(dim),
            head_b: 0.0,
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for layer in &self.layers {
            out.extend_from_slice(layer.as_slice().unwrap());
        }
        out.extend_from_slice(self.head_w.as_slice().unwrap());
        out.push(self.head_b);
        out
    }

    pub fn set_from_flat(&mut self, flat: &[f64]) {
        let mut pos = 0usize;
        for layer in &mut self.layers {
            let s = layer.as_slice_mut().unwrap();
            s.copy_from_slice(&flat[pos..pos + s.len()]);
            pos += s.len();
        }
        let hw = self.head_w.as_slice_mut().unwrap();
        hw.copy_from_slice(&flat[pos..pos + hw.len()]);
        pos += hw.len();
        self.head_b = flat[pos];
    }
}

/// Optimizer settings; defaults follow the pinned training recipe
/// (200 epochs, lr 0.01, Adam, gamma 0.9, weight decay 5e-4). `gamma`
/// reads as a per-epoch exponential learning-rate decay by default; the
/// alternative reading as Adam's first-moment coefficient is kept
/// selectable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub gamma: f64,
    pub gamma_mode: GammaMode,
    pub weight_decay: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaMode {
    LrDecay,
    AdamBeta1,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            learning_rate: 0.01,
            gamma: 0.9,
            gamma_mode: GammaMode::LrDecay,
            weight_decay: 5e-4,
            seed: 1,
        }
    }
}

/// Train/validation/test membership per function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

/// Split assignment aligned with a corpus, shared by every training
/// phase (no re-splitting between stages).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitMask {
    assignments: Vec<Split>,
}

impl SplitMask {
    pub fn new(assignments: Vec<Split>) -> Self {
        SplitMask { assignments }
    }

    pub fn get(&self, i: usize) -> Split {
        self.assignments[i]
    }

    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = Split> + '_ {
        self.assignments.iter().copied()
    }

    pub fn indices_of(&self, split: Split) -> Vec<usize> {
        self.assignments
            .iter()
            .enumerate()
            .filter(|(_, s)| **s == split)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Confusion counts and derived rates. `recall = TP/(TP+FN)` and
/// `f_measure = 2TP/(2TP+FP+FN)`; zero denominators yield zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    pub recall: f64,
    pub precision: f64,
    pub f_measure: f64,
}

/// Exact confusion counts for aligned prediction/label vectors
/// (`true` = vulnerable).
pub fn evaluate(predicted: &[bool], truth: &[bool]) -> Result<Metrics, DetectorError> {
    if predicted.len() != truth.len() {
        return Err(DetectorError::LengthMismatch(predicted.len(), truth.len()));
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0usize, 0usize, 0usize, 0usize);
    for (&p, &t) in predicted.iter().zip(truth) {
        match (p, t) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    Ok(Metrics {
        tp,
        fp,
        fn_,
        tn,
        recall: ratio(tp, tp + fn_),
        precision: ratio(tp, tp + fp),
        f_measure: ratio(2 * tp, 2 * tp + fp + fn_),
    })
}

/// Thresholded labels from probabilities (`p >= tau` ⇒ vulnerable).
pub fn threshold_predictions(probabilities: &[f64], tau: f64) -> Vec<bool> {
    probabilities.iter().map(|p| *p >= tau).collect()
}

// ---------------------------------------------------------------------
// Forward / loss / gradients
// ---------------------------------------------------------------------

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Stacked hyperedge convolutions and the logistic head. Returns one
/// probability per function row.
pub fn forward(
    x: &Array2<f64>,
    incidence: &IncidenceMatrix,
    weights: &WeightDiag,
    params: &HgnnParams,
) -> Result<Vec<f64>, DetectorError> {
    let deg = degrees(incidence, weights)?;
    let mut z = x.clone();
    let last = params.layers.len() - 1;
    for (l, beta) in params.layers.iter().enumerate() {
        z = hyperedge_conv(&z, incidence, weights, &deg, beta, l < last)?;
    }
    if z.ncols() != params.head_w.len() {
        return Err(DetectorError::ShapeMismatch {
            context: format!("{} features vs head of {}", z.ncols(), params.head_w.len()),
        });
    }
    Ok(z
        .rows()
        .into_iter()
        .map(|row| {
            let mut logit = params.head_b;
            for (v, w) in row.iter().zip(params.head_w.iter()) {
                logit += v * w;
            }
            sigmoid(logit)
        })
        .collect())
}

fn stable_bce(logit: f64, label: f64) -> f64 {
    logit.max(0.0) + (1.0 + (-logit.abs()).exp()).ln() - label * logit
}

/// Mean binary cross-entropy over the masked functions plus
/// `weight_decay · ‖params‖²`. Probabilities are clamped away from 0/1
/// before the logs.
pub fn loss(
    probabilities: &[f64],
    labels: &[bool],
    mask: &[usize],
    params: &HgnnParams,
    weight_decay: f64,
) -> Result<f64, DetectorError> {
    if mask.is_empty() {
        return Err(DetectorError::EmptyMask);
    }
    let mut data_term = 0.0;
    for &i in mask {
        let p = probabilities[i].clamp(1e-12, 1.0 - 1e-12);
        let y = if labels[i] { 1.0 } else { 0.0 };
        data_term -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
    }
    data_term /= mask.len() as f64;
    let decay: f64 = params.flatten().iter().map(|v| v * v).sum::<f64>() * weight_decay;
    Ok(data_term + decay)
}

/// Gradients of [`loss`]∘[`forward`] with respect to every parameter.
pub fn loss_and_gradients(
    x: &Array2<f64>,
    incidence: &IncidenceMatrix,
    weights: &WeightDiag,
    labels: &[bool],
    mask: &[usize],
    params: &HgnnParams,
    weight_decay: f64,
) -> Result<(f64, Vec<f64>), DetectorError> {
    if mask.is_empty() {
        return Err(DetectorError::EmptyMask);
    }
    let deg: DegreeDiags = degrees(incidence, weights)?;
    let n = x.nrows();
    let n_layers = params.layers.len();

    // Forward with caches: propagated inputs and pre-activations.
    let mut activations = vec![x.clone()];
    let mut propagated = Vec::with_capacity(n_layers);
    let mut pres = Vec::with_capacity(n_layers);
    for (l, beta) in params.layers.iter().enumerate() {
        let p = theta_apply(incidence, weights, &deg, activations.last().unwrap())?;
        let pre = row_matmul(&p, beta);
        let act = if l < n_layers - 1 {
            pre.mapv(|v| v.max(0.0))
        } else {
            pre.clone()
        };
        propagated.push(p);
        pres.push(pre);
        activations.push(act);
    }
    let final_act = activations.last().unwrap();
    let logits: Vec<f64> = (0..n)
        .map(|i| {
            let mut acc = params.head_b;
            for (v, w) in final_act.row(i).iter().zip(params.head_w.iter()) {
                acc += v * w;
            }
            acc
        })
        .collect();

    let m = mask.len() as f64;
    let mut loss_value = 0.0;
    let mut dlogit = vec![0.0; n];
    for &i in mask {
        let y = if labels[i] { 1.0 } else { 0.0 };
        loss_value += stable_bce(logits[i], y) / m;
        dlogit[i] = (sigmoid(logits[i]) - y) / m;
    }

    let mut grad_head_w = Array1::<f64>::zeros(params.head_w.len());
    let mut grad_head_b = 0.0;
    for i in 0..n {
        if dlogit[i] != 0.0 {
            grad_head_w.scaled_add(dlogit[i], &final_act.row(i));
            grad_head_b += dlogit[i];
        }
    }
    let mut da = Array2::<f64>::zeros(final_act.dim());
    for i in 0..n {
        if dlogit[i] != 0.0 {
            da.row_mut(i).assign(&params.head_w.mapv(|w| w * dlogit[i]));
        }
    }

    let mut grad_layers: Vec<Array2<f64>> = Vec::with_capacity(n_layers);
    for l in (0..n_layers).rev() {
        let dpre = if l < n_layers - 1 {
            let mask_relu = pres[l].mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
            &da * &mask_relu
        } else {
            da.clone()
        };
        grad_layers.push(propagated[l].t().dot(&dpre));
        let dp = dpre.dot(&params.layers[l].t());
        // ϑ is symmetric, so the adjoint is another ϑ application.
        da = theta_apply(incidence, weights, &deg, &dp)?;
    }
    grad_layers.reverse();

    let mut grads = Vec::new();
    for g in &grad_layers {
        grads.extend_from_slice(g.as_slice().unwrap());
    }
    grads.extend_from_slice(grad_head_w.as_slice().unwrap());
    grads.push(grad_head_b);

    if weight_decay > 0.0 {
        let flat = params.flatten();
        loss_value += weight_decay * flat.iter().map(|v| v * v).sum::<f64>();
        for (g, p) in grads.iter_mut().zip(&flat) {
            *g += 2.0 * weight_decay * p;
        }
    }
    Ok((loss_value, grads))
}

fn f_measure_of(predicted: &[bool], truth: &[bool]) -> f64 {
    evaluate(predicted, truth).map(|m| m.f_measure).unwrap_or(0.0)
}

/// Full-batch transductive training: all rows propagate, the loss sees
/// only the train mask, and the best-validation-F parameters win.
pub fn train(
    x: &Array2<f64>,
    incidence: &IncidenceMatrix,
    weights: &WeightDiag,
    labels: &[bool],
    split: &SplitMask,
    n_layers: usize,
    config: &TrainConfig,
) -> Result<HgnnParams, DetectorError> {
    let train_idx = split.indices_of(Split::Train);
    if train_idx.is_empty() {
        return Err(DetectorError::EmptyMask);
    }
    let has_pos = train_idx.iter().any(|&i| labels[i]);
    let has_neg = train_idx.iter().any(|&i| !labels[i]);
    if !has_pos || !has_neg {
        return Err(DetectorError::DegenerateLabels);
    }
    let val_idx = split.indices_of(Split::Val);
    let select_idx = if val_idx.is_empty() { &train_idx } else { &val_idx };
    let select_truth: Vec<bool> = select_idx.iter().map(|&i| labels[i]).collect();

    let mut params = HgnnParams::init(x.ncols(), n_layers, config.seed);
    let mut best = (params.clone(), f64::NEG_INFINITY);
    let mut adam = Adam::new(params.flatten().len(), adam_beta1(config));

    for epoch in 0..config.epochs {
        let (_, grads) = loss_and_gradients(
            x,
            incidence,
            weights,
            labels,
            &train_idx,
            &params,
            config.weight_decay,
        )?;
        let mut flat = params.flatten();
        adam.step(&mut flat, &grads, epoch_lr(config, epoch));
        params.set_from_flat(&flat);

        let probs = forward(x, incidence, weights, &params)?;
        let preds: Vec<bool> = select_idx.iter().map(|&i| probs[i] >= 0.5).collect();
        let f = f_measure_of(&preds, &select_truth);
        // Latest best wins ties, so a saturated validation score still
        // tracks continued training.
        if f >= best.1 {
            best = (params.clone(), f);
        }
    }
    Ok(if config.epochs == 0 { params } else { best.0 })
}

// ---------------------------------------------------------------------
// Detection
// ---------------------------------------------------------------------

/// Everything needed to score new functions against a trained pipeline.
#[derive(Debug, Clone)]
pub struct DetectorModel {
    pub vocab: Vocabulary,
    pub table: EmbeddingTable,
    pub encoder: GgnnParams,
    pub centroids: Centroids,
    pub incidence: IncidenceMatrix,
    pub weights: WeightDiag,
    pub intra_features: Array2<f64>,
    pub params: HgnnParams,
    pub api_list: ApiList,
}

/// One scored function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub probability: f64,
    pub label: Label,
}

/// Scores a batch of parsed functions: each is encoded, its behaviors
/// are assigned to the frozen centroids, the training hypergraph is
/// extended with the new rows (singleton hyperedges for behavior-less
/// functions), and one forward pass yields probabilities.
pub fn detect(
    functions: &[(String, Cpg)],
    model: &DetectorModel,
    tau: f64,
) -> Result<Vec<Prediction>, DetectorError> {
    if functions.is_empty() {
        return Ok(Vec::new());
    }
    let d = model.table.dim();
    let n_train = model.incidence.n_vertices();
    let mut new_rows = Vec::with_capacity(functions.len());
    let mut new_x = Array2::<f64>::zeros((functions.len(), d));
    for (i, (id, cpg)) in functions.iter().enumerate() {
        let x = encode_function(cpg, &model.vocab, &model.table, &model.encoder)?;
        new_x.row_mut(i).assign(&x);

        let pdg = pdg_view(cpg);
        let behaviors = behaviors_of(&pdg, cpg, &model.api_list);
        let mut memberships = Vec::new();
        if !behaviors.is_empty() {
            let mut vectors = Array2::<f64>::zeros((behaviors.len(), d));
            for (b, sub) in behaviors.iter().enumerate() {
                let v = encode_behavior(sub, cpg, &model.vocab, &model.table, &model.encoder)?;
                vectors.row_mut(b).assign(&v);
            }
            memberships = assign_new(&vectors, &model.centroids);
            memberships.sort_unstable();
            memberships.dedup();
        }
        new_rows.push((id.clone(), memberships));
    }

    let extended = model.incidence.extend_rows(&new_rows);
    let mut weights = model.weights.clone();
    weights
        .weights
        .resize(extended.n_hyperedges(), 1.0);
    let mut x_all = Array2::<f64>::zeros((n_train + functions.len(), d));
    for i in 0..n_train {
        x_all.row_mut(i).assign(&model.intra_features.row(i));
    }
    for i in 0..functions.len() {
        x_all.row_mut(n_train + i).assign(&new_x.row(i));
    }
    let probs = forward(&x_all, &extended, &weights, &model.params)?;
    Ok(functions
        .iter()
        .enumerate()
        .map(|(i, (id, _))| {
            let probability = probs[n_train + i];
            Prediction {
                id: id.clone(),
                probability,
                label: if probability >= tau {
                    Label::Vulnerable
                } else {
                    Label::Clean
                },
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::behavior_cluster::{Hyperedge, HyperedgeSet};
    use crate::hypergraph_core::{incidence, normalized_operator};
    use std::collections::BTreeSet;

    fn identity_hypergraph(n: usize) -> (IncidenceMatrix, WeightDiag) {
        let names: Vec<String> = (0..n).map(|i| format!("f{i}")).collect();
        let hs = HyperedgeSet { edges: vec![] };
        let inc = incidence(&hs, &names).unwrap();
        let w = WeightDiag::identity(inc.n_hyperedges());
        (inc, w)
    }

    #[test]
    fn forward_collapses_to_mlp_for_identity_incidence() {
        let (inc, w) = identity_hypergraph(4);
        let mut params = HgnnParams::init(3, 2, 5);
        let mut rng = Rng::new(2);
        for v in params.head_w.iter_mut() {
            *v = rng.range_f64(-1.0, 1.0);
        }
        params.head_b = 0.3;
        let x = Array2::from_shape_fn((4, 3), |_| rng.range_f64(-1.0, 1.0));

        let probs = forward(&x, &inc, &w, &params).unwrap();
        for i in 0..4 {
            let z1: Vec<f64> = (0..3)
                .map(|j| {
                    (0..3)
                        .map(|k| x[[i, k]] * params.layers[0][[k, j]])
                        .sum::<f64>()
                        .max(0.0)
                })
                .collect();
            let z2: Vec<f64> = (0..3)
                .map(|j| (0..3).map(|k| z1[k] * params.layers[1][[k, j]]).sum::<f64>())
                .collect();
            let logit: f64 = z2
                .iter()
                .zip(params.head_w.iter())
                .map(|(a, b)| a * b)
                .sum::<f64>()
                + params.head_b;
            assert!((probs[i] - sigmoid(logit)).abs() <= 1e-12);
        }
    }

    #[test]
    fn zero_features_give_sigmoid_bias_everywhere() {
        let (inc, w) = identity_hypergraph(5);
        let mut params = HgnnParams::init(3, 2, 5);
        params.head_b = -0.7;
        let x = Array2::<f64>::zeros((5, 3));
        let probs = forward(&x, &inc, &w, &params).unwrap();
        for p in probs {
            assert!((p - sigmoid(-0.7)).abs() <= 1e-15);
        }
    }

    #[test]
    fn perfect_predictions_leave_weight_decay_term() {
        let params = HgnnParams::init(2, 1, 3);
        let probabilities = vec![1.0, 0.0, 1.0];
        let labels = vec![true, false, true];
        let mask = vec![0, 1, 2];
        let wd = 1e-3;
        let l = loss(&probabilities, &labels, &mask, &params, wd).unwrap();
        let decay: f64 = params.flatten().iter().map(|v| v * v).sum::<f64>() * wd;
        // Clamped probabilities keep the data term around 1e-12·ln scale.
        assert!((l - decay).abs() < 1e-9, "loss {l} decay {decay}");
    }

    #[test]
    fn coin_flip_probability_gives_ln2() {
        let params = HgnnParams {
            layers: vec![Array2::zeros((2, 2))],
            head_w: Array1::zeros(2),
            head_b: 0.0,
        };
        let probabilities = vec![0.5; 4];
        let labels = vec![true, false, true, false];
        let mask = vec![0, 1, 2, 3];
        let l = loss(&probabilities, &labels, &mask, &params, 0.0).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() <= 1e-12);
    }

    #[test]
    fn empty_mask_is_an_error() {
        let params = HgnnParams::init(2, 1, 3);
        assert!(matches!(
            loss(&[0.5], &[true], &[], &params, 0.0),
            Err(DetectorError::EmptyMask)
        ));
    }

    fn planted_hypergraph(
        n_vul: usize,
        n_clean: usize,
        group: usize,
        seed: u64,
    ) -> (Array2<f64>, IncidenceMatrix, WeightDiag, Vec<bool>) {
        // Vulnerable functions share exclusive hyperedges, clean ones
        // likewise. Features carry a weak label signal buried in noise;
        // averaging within label-pure hyperedges is what recovers it.
        let n = n_vul + n_clean;
        let names: Vec<String> = (0..n).map(|i| format!("f{i:03}")).collect();
        let labels: Vec<bool> = (0..n).map(|i| i < n_vul).collect();
        let mut edges = Vec::new();
        let mut cluster = 0usize;
        for chunk in (0..n_vul).collect::<Vec<_>>().chunks(group) {
            edges.push(Hyperedge {
                cluster,
                members: chunk.iter().map(|&i| names[i].clone()).collect::<BTreeSet<_>>(),
            });
            cluster += 1;
        }
        for chunk in (n_vul..n).collect::<Vec<_>>().chunks(group) {
            edges.push(Hyperedge {
                cluster,
                members: chunk.iter().map(|&i| names[i].clone()).collect::<BTreeSet<_>>(),
            });
            cluster += 1;
        }
        let inc = incidence(&HyperedgeSet { edges }, &names).unwrap();
        let w = WeightDiag::identity(inc.n_hyperedges());
        let mut rng = Rng::new(seed);
        let mut x = Array2::from_shape_fn((n, 8), |_| rng.range_f64(-1.0, 1.0));
        for i in 0..n {
            if labels[i] {
                x[[i, 0]] += 0.4;
            } else {
                x[[i, 0]] -= 0.4;
            }
        }
        (x, inc, w, labels)
    }

    fn random_split(n: usize, seed: u64) -> SplitMask {
        let mut idx: Vec<usize> = (0..n).collect();
        Rng::new(seed).shuffle(&mut idx);
        let mut assignments = vec![Split::Train; n];
        for (rank, &i) in idx.iter().enumerate() {
            assignments[i] = if rank < n * 8 / 10 {
                Split::Train
            } else if rank < n * 9 / 10 {
                Split::Val
            } else {
                Split::Test
            };
        }
        SplitMask::new(assignments)
    }

    #[test]
    fn planted_two_block_hypergraph_reaches_high_test_f() {
        let (x, inc, w, labels) = planted_hypergraph(40, 40, 5, 77);
        let split = random_split(80, 5);
        let config = TrainConfig {
            epochs: 120,
            seed: 9,
            gamma_mode: GammaMode::AdamBeta1,
            ..TrainConfig::default()
        };
        let params = train(&x, &inc, &w, &labels, &split, 2, &config).unwrap();
        let probs = forward(&x, &inc, &w, &params).unwrap();
        let test_idx = split.indices_of(Split::Test);
        let preds: Vec<bool> = test_idx.iter().map(|&i| probs[i] >= 0.5).collect();
        let truth: Vec<bool> = test_idx.iter().map(|&i| labels[i]).collect();
        let m = evaluate(&preds, &truth).unwrap();
        assert!(m.f_measure >= 0.95, "test F {}", m.f_measure);

        // Trained validation F-measure at least matches the initial one.
        let init = HgnnParams::init(x.ncols(), 2, config.seed);
        let init_probs = forward(&x, &inc, &w, &init).unwrap();
        let val_idx = split.indices_of(Split::Val);
        let f_of = |probs: &[f64]| {
            let p: Vec<bool> = val_idx.iter().map(|&i| probs[i] >= 0.5).collect();
            let t: Vec<bool> = val_idx.iter().map(|&i| labels[i]).collect();
            f_measure_of(&p, &t)
        };
        assert!(f_of(&probs) >= f_of(&init_probs));
    }

    #[test]
    fn zero_epochs_returns_initial_params() {
        let (x, inc, w, labels) = planted_hypergraph(10, 10, 5, 3);
        let split = SplitMask::new(vec![Split::Train; 20]);
        let config = TrainConfig {
            epochs: 0,
            seed: 4,
            ..TrainConfig::default()
        };
        let params = train(&x, &inc, &w, &labels, &split, 2, &config).unwrap();
        assert_eq!(params, HgnnParams::init(8, 2, 4));
    }

    #[test]
    fn training_is_deterministic() {
        let (x, inc, w, labels) = planted_hypergraph(15, 15, 5, 21);
        let split = random_split(30, 2);
        let config = TrainConfig {
            epochs: 15,
            ..TrainConfig::default()
        };
        let a = train(&x, &inc, &w, &labels, &split, 2, &config).unwrap();
        let b = train(&x, &inc, &w, &labels, &split, 2, &config).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn degenerate_training_labels_rejected() {
        let (x, inc, w, _) = planted_hypergraph(10, 10, 5, 3);
        let labels = vec![true; 20];
        let split = SplitMask::new(vec![Split::Train; 20]);
        assert!(matches!(
            train(&x, &inc, &w, &labels, &split, 2, &TrainConfig::default()),
            Err(DetectorError::DegenerateLabels)
        ));
    }

    #[test]
    fn finite_difference_gradients_match() {
        let (x, inc, w, labels) = planted_hypergraph(6, 6, 3, 15);
        let mask: Vec<usize> = (0..8).collect();
        let mut params = HgnnParams::init(8, 2, 31);
        let mut rng = Rng::new(8);
        for v in params.head_w.iter_mut() {
            *v = rng.range_f64(-0.5, 0.5);
        }
        params.head_b = -0.1;
        let wd = 1e-3;
        let (_, analytic) =
            loss_and_gradients(&x, &inc, &w, &labels, &mask, &params, wd).unwrap();

        let flat0 = params.flatten();
        let eps = 1e-5;
        let mut max_rel = 0.0f64;
        for i in 0..flat0.len() {
            let mut probe = params.clone();
            let mut plus = flat0.clone();
            plus[i] += eps;
            probe.set_from_flat(&plus);
            let probs = forward(&x, &inc, &w, &probe).unwrap();
            let lp = loss(&probs, &labels, &mask, &probe, wd).unwrap();
            let mut minus = flat0.clone();
            minus[i] -= eps;
            probe.set_from_flat(&minus);
            let probs = forward(&x, &inc, &w, &probe).unwrap();
            let lm = loss(&probs, &labels, &mask, &probe, wd).unwrap();
            let numeric = (lp - lm) / (2.0 * eps);
            let denom = analytic[i].abs().max(numeric.abs()).max(1e-6);
            max_rel = max_rel.max((analytic[i] - numeric).abs() / denom);
        }
        assert!(max_rel <= 1e-4, "max relative error {max_rel}");
    }

    #[test]
    fn forward_is_permutation_equivariant() {
        let (x, inc, w, _) = planted_hypergraph(8, 8, 4, 44);
        let params = HgnnParams::init(8, 2, 7);
        let probs = forward(&x, &inc, &w, &params).unwrap();

        let n = inc.n_vertices();
        let mut perm: Vec<usize> = (0..n).collect();
        Rng::new(3).shuffle(&mut perm);
        let permuted_ids: Vec<String> = perm
            .iter()
            .map(|&i| inc.function_ids()[i].clone())
            .collect();
        let hs = HyperedgeSet {
            edges: (0..inc.n_hyperedges())
                .map(|e| Hyperedge {
                    cluster: e,
                    members: inc
                        .column_members(e)
                        .iter()
                        .map(|&v| inc.function_ids()[v].clone())
                        .collect(),
                })
                .collect(),
        };
        let inc2 = incidence(&hs, &permuted_ids).unwrap();
        let mut x2 = Array2::<f64>::zeros(x.dim());
        for (new_row, &old_row) in perm.iter().enumerate() {
            x2.row_mut(new_row).assign(&x.row(old_row));
        }
        let probs2 = forward(&x2, &inc2, &w, &params).unwrap();
        for (new_row, &old_row) in perm.iter().enumerate() {
            assert_eq!(probs2[new_row], probs[old_row]);
        }
    }

    #[test]
    fn raising_threshold_never_increases_tp_or_fp() {
        let mut rng = Rng::new(12);
        let probs: Vec<f64> = (0..50).map(|_| rng.f64()).collect();
        let truth: Vec<bool> = (0..50).map(|_| rng.f64() < 0.4).collect();
        let mut last_tp = usize::MAX;
        let mut last_fp = usize::MAX;
        for step in 0..=10 {
            let tau = step as f64 / 10.0;
            let preds = threshold_predictions(&probs, tau);
            let m = evaluate(&preds, &truth).unwrap();
            assert!(m.tp <= last_tp);
            assert!(m.fp <= last_fp);
            last_tp = m.tp;
            last_fp = m.fp;
        }
    }

    #[test]
    fn metrics_match_hand_computation() {
        // TP=2, FP=1, FN=1, TN=6.
        let truth = vec![true, true, true, false, false, false, false, false, false, false];
        let preds = vec![true, true, false, true, false, false, false, false, false, false];
        let m = evaluate(&preds, &truth).unwrap();
        assert_eq!((m.tp, m.fp, m.fn_, m.tn), (2, 1, 1, 6));
        assert!((m.recall - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.f_measure - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(m.tp + m.fp + m.fn_ + m.tn, 10);
    }

    #[test]
    fn all_correct_gives_unit_scores() {
        let truth = vec![true, false, true];
        let m = evaluate(&truth.clone(), &truth).unwrap();
        assert_eq!(m.recall, 1.0);
        assert_eq!(m.f_measure, 1.0);
    }

    #[test]
    fn zero_denominators_give_zero() {
        let m = evaluate(&[false, false], &[false, false]).unwrap();
        assert_eq!(m.recall, 0.0);
        assert_eq!(m.precision, 0.0);
        assert_eq!(m.f_measure, 0.0);
    }

    #[test]
    fn length_mismatch_is_an_error() {
        assert!(matches!(
            evaluate(&[true], &[true, false]),
            Err(DetectorError::LengthMismatch(1, 2))
        ));
    }

    #[test]
    fn loss_decreases_on_planted_benchmark() {
        let (x, inc, w, labels) = planted_hypergraph(20, 20, 5, 50);
        let split = SplitMask::new(vec![Split::Train; 40]);
        let train_idx = split.indices_of(Split::Train);
        let config = TrainConfig {
            epochs: 40,
            gamma_mode: GammaMode::AdamBeta1,
            ..TrainConfig::default()
        };
        let params = train(&x, &inc, &w, &labels, &split, 2, &config).unwrap();
        let init = HgnnParams::init(x.ncols(), 2, config.seed);
        let probs_init = forward(&x, &inc, &w, &init).unwrap();
        let probs_trained = forward(&x, &inc, &w, &params).unwrap();
        let l0 = loss(&probs_init, &labels, &train_idx, &init, config.weight_decay).unwrap();
        let l1 = loss(
            &probs_trained,
            &labels,
            &train_idx,
            &params,
            config.weight_decay,
        )
        .unwrap();
        assert!(l1.is_finite() && l0.is_finite());
        assert!(l1 < l0, "trained loss {l1} vs initial {l0}");
    }

    #[test]
    fn fixture_forward_matches_dense_oracle() {
        // 3-function fixture with a dense from-scratch evaluation.
        let hs = HyperedgeSet {
            edges: vec![
                Hyperedge {
                    cluster: 0,
                    members: BTreeSet::from(["f1".to_string(), "f2".to_string()]),
                },
                Hyperedge {
                    cluster: 1,
                    members: BTreeSet::from(["f2".to_string(), "f3".to_string()]),
                },
            ],
        };
        let names = vec!["f1".to_string(), "f2".to_string(), "f3".to_string()];
        let inc = incidence(&hs, &names).unwrap();
        let w = WeightDiag::identity(inc.n_hyperedges());
        let deg = degrees(&inc, &w).unwrap();
        let mut rng = Rng::new(64);
        let x = Array2::from_shape_fn((3, 2), |_| rng.range_f64(-1.0, 1.0));
        let mut params = HgnnParams::init(2, 2, 13);
        for v in params.head_w.iter_mut() {
            *v = rng.range_f64(-1.0, 1.0);
        }
        params.head_b = 0.25;

        let probs = forward(&x, &inc, &w, &params).unwrap();

        let theta = normalized_operator(&inc, &w, &deg).unwrap().theta;
        let z1 = theta.dot(&x).dot(&params.layers[0]).mapv(|v| v.max(0.0));
        let z2 = theta.dot(&z1).dot(&params.layers[1]);
        for i in 0..3 {
            let logit = z2.row(i).dot(&params.head_w) + params.head_b;
            assert!((probs[i] - sigmoid(logit)).abs() <= 1e-12);
        }
    }
}
