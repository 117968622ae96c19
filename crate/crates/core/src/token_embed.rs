//! Token vectors: skip-gram training over node token sequences and
//! mean-of-token node embeddings.
//!
//! Literals are normalized (`LIT_NUM`, `LIT_STR`) so the vocabulary stays
//! identifier-shaped. Training is skip-gram with negative sampling,
//! single-threaded and bitwise deterministic under a fixed seed.

use crate::graph_ingest::{Cpg, CpgNode};
use crate::rng::Rng;
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use thiserror::Error;

/// Placeholder for numeric literals.
pub const LIT_NUM: &str = "LIT_NUM";
/// Placeholder for string/char literals.
pub const LIT_STR: &str = "LIT_STR";
/// Out-of-vocabulary token.
pub const OOV: &str = "<oov>";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EmbedError {
    #[error("corpus contains no tokens")]
    EmptyCorpus,
}

/// Token → dense index map. Index 0 is always the OOV token.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    tokens: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl Vocabulary {
    fn from_tokens(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocabulary { tokens, index }
    }

    /// Rebuilds the lookup table after deserialization.
    pub fn reindex(&mut self) {
        self.index = self
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Index of a token, falling back to OOV (index 0).
    pub fn index_of(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(0)
    }

    pub fn token(&self, index: usize) -> &str {
        &self.tokens[index]
    }
}

/// |V| × d matrix of token vectors, row-aligned with the vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingTable {
    pub matrix: Array2<f64>,
}

impl EmbeddingTable {
    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }
}

/// Skip-gram hyperparameters. Only the dimension has a pinned default of
/// 256; window/negatives/epochs are recorded here so runs can vary them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkipgramConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for SkipgramConfig {
    fn default() -> Self {
        SkipgramConfig {
            dim: 256,
            window: 5,
            negatives: 5,
            epochs: 5,
            learning_rate: 0.025,
            seed: 1,
        }
    }
}

/// Maps one surface token to its corpus form.
pub fn normalize_token(token: &str) -> String {
    let mut chars = token.chars();
    match chars.next() {
        Some(c) if c.is_ascii_digit() => LIT_NUM.to_string(),
        Some('.') if chars.next().is_some_and(|c| c.is_ascii_digit()) => LIT_NUM.to_string(),
        Some('"') | Some('\'') => LIT_STR.to_string(),
        _ => token.to_string(),
    }
}

fn normalize_node(node: &CpgNode) -> Vec<String> {
    node.tokens.iter().map(|t| normalize_token(t)).collect()
}

/// One normalized token sequence per node, in graph and node order.
pub fn build_corpus(cpgs: &[Cpg]) -> Vec<Vec<String>> {
    let mut corpus = Vec::new();
    for cpg in cpgs {
        let mut nodes: Vec<&CpgNode> = cpg.nodes.iter().collect();
        nodes.sort_by_key(|n| n.node_id);
        for node in nodes {
            corpus.push(normalize_node(node));
        }
    }
    corpus
}

/// Trains skip-gram with negative sampling; deterministic under the seed.
pub fn train_skipgram(
    corpus: &[Vec<String>],
    config: &SkipgramConfig,
) -> Result<(Vocabulary, EmbeddingTable), EmbedError> {
    train_skipgram_with_stats(corpus, config).map(|(v, t, _)| (v, t))
}

/// As [`train_skipgram`], additionally returning the mean loss per epoch.
pub fn train_skipgram_with_stats(
    corpus: &[Vec<String>],
    config: &SkipgramConfig,
) -> Result<(Vocabulary, EmbeddingTable, Vec<f64>), EmbedError> {
    // Vocabulary in first-appearance order, OOV first.
    let mut tokens = vec![OOV.to_string()];
    let mut counts: Vec<u64> = vec![0];
    let mut index: HashMap<String, usize> = HashMap::new();
    index.insert(OOV.to_string(), 0);
    let mut encoded: Vec<Vec<usize>> = Vec::with_capacity(corpus.len());
    for seq in corpus {
        let mut enc = Vec::with_capacity(seq.len());
        for tok in seq {
            let id = *index.entry(tok.clone()).or_insert_with(|| {
                tokens.push(tok.clone());
                counts.push(0);
                tokens.len() - 1
            });
            counts[id] += 1;
            enc.push(id);
        }
        encoded.push(enc);
    }
    if counts.iter().skip(1).all(|c| *c == 0) {
        return Err(EmbedError::EmptyCorpus);
    }

    let vocab_size = tokens.len();
    let d = config.dim;
    let mut rng = Rng::new(config.seed);

    // Unigram^0.75 cumulative table for negative sampling.
    let weights: Vec<f64> = counts.iter().map(|c| (*c as f64).powf(0.75)).collect();
    let mut cumulative = Vec::with_capacity(vocab_size);
    let mut acc = 0.0;
    for w in &weights {
        acc += w;
        cumulative.push(acc);
    }
    let total = acc;
    let sample_negative = move |rng: &mut Rng| -> usize {
        let r = rng.f64() * total;
        match cumulative.binary_search_by(|c| c.partial_cmp(&r).unwrap()) {
            Ok(i) | Err(i) => i.min(vocab_size - 1),
        }
    };

    // word2vec-style init: inputs uniform, outputs zero.
    let half = 0.5 / d as f64;
    let mut w_in = Array2::<f64>::zeros((vocab_size, d));
    for mut row in w_in.rows_mut() {
        for x in row.iter_mut() {
            *x = rng.range_f64(-half, half);
        }
    }
    let mut w_out = Array2::<f64>::zeros((vocab_size, d));

    let sigmoid = |x: f64| 1.0 / (1.0 + (-x).exp());
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let total_epochs = config.epochs.max(1) as f64;

    for epoch in 0..config.epochs {
        let lr = config.learning_rate * (1.0 - epoch as f64 / total_epochs).max(1e-4);
        let mut loss_sum = 0.0;
        let mut pair_count = 0u64;
        for seq in &encoded {
            for (center_pos, &center) in seq.iter().enumerate() {
                let reach = 1 + rng.below(config.window);
                let lo = center_pos.saturating_sub(reach);
                let hi = (center_pos + reach + 1).min(seq.len());
                for ctx_pos in lo..hi {
                    if ctx_pos == center_pos {
                        continue;
                    }
                    let context = seq[ctx_pos];
                    let mut grad_in = Array1::<f64>::zeros(d);
                    // Positive pair plus sampled negatives share the
                    // center vector update.
                    for k in 0..=config.negatives {
                        let (target, label) = if k == 0 {
                            (context, 1.0)
                        } else {
                            (sample_negative(&mut rng), 0.0)
                        };
                        let v_in = w_in.row(center);
                        let v_out = w_out.row(target);
                        let score = v_in.dot(&v_out);
                        let p = sigmoid(score);
                        loss_sum += if label > 0.5 {
                            -p.max(1e-12).ln()
                        } else {
                            -(1.0 - p).max(1e-12).ln()
                        };
                        let g = (p - label) * lr;
                        for j in 0..d {
                            grad_in[j] += g * w_out[[target, j]];
                        }
                        for j in 0..d {
                            w_out[[target, j]] -= g * w_in[[center, j]];
                        }
                    }
                    for j in 0..d {
                        w_in[[center, j]] -= grad_in[j];
                    }
                    pair_count += 1;
                }
            }
        }
        epoch_losses.push(if pair_count > 0 {
            loss_sum / pair_count as f64
        } else {
            0.0
        });
    }

    Ok((
        Vocabulary::from_tokens(tokens),
        EmbeddingTable { matrix: w_in },
        epoch_losses,
    ))
}

/// Mean of the node's token vectors; OOV row for unknown tokens, zero
/// vector for token-less nodes.
pub fn embed_node(node: &CpgNode, vocab: &Vocabulary, table: &EmbeddingTable) -> Array1<f64> {
    embed_tokens(&node.tokens, vocab, table)
}

pub(crate) fn embed_tokens(
    tokens: &[String],
    vocab: &Vocabulary,
    table: &EmbeddingTable,
) -> Array1<f64> {
    let d = table.dim();
    let mut acc = Array1::<f64>::zeros(d);
    if tokens.is_empty() {
        return acc;
    }
    for tok in tokens {
        let idx = vocab.index_of(&normalize_token(tok));
        acc += &table.matrix.row(idx);
    }
    acc / tokens.len() as f64
}
