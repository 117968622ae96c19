//! Hypergraph algebra: incidence matrix, degree diagonals, normalized
//! operator, spectral oracle and the hyperedge convolution.
//!
//! The convolution propagates features vertex → hyperedge → vertex:
//!
//! ```text
//! Z = act( Dv^{-1/2} · H · W · De^{-1} · H^T · Dv^{-1/2} · X · β )
//! ```
//!
//! `H` is stored sparse (per-row and per-column membership lists); the
//! dense operator is only materialized by [`normalized_operator`] for
//! verification. Functions covered by no hyperedge receive a singleton
//! hyperedge so every vertex degree stays positive — the operator then
//! acts as the identity on them and such functions fall back to their
//! own features.
//!
//! Per-hyperedge accumulation iterates members in function-id order, so
//! the convolution is bitwise equivariant under row permutations.

use crate::behavior_cluster::HyperedgeSet;
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum HypergraphError {
    #[error("hyperedge member `{0}` is not a known function")]
    UnknownFunction(String),
    #[error("zero degree at index {0}")]
    ZeroDegree(usize),
    #[error("matrix is not symmetric")]
    NotSymmetric,
    #[error("shape mismatch: {context}")]
    ShapeMismatch { context: String },
}

/// Sparse 0/1 incidence matrix: rows are functions, columns hyperedges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncidenceMatrix {
    function_ids: Vec<String>,
    /// Column → member row indices, sorted by function id.
    columns: Vec<Vec<usize>>,
    /// Row → incident column indices, ascending.
    rows: Vec<Vec<usize>>,
}

impl IncidenceMatrix {
    pub fn n_vertices(&self) -> usize {
        self.function_ids.len()
    }

    pub fn n_hyperedges(&self) -> usize {
        self.columns.len()
    }

    pub fn function_ids(&self) -> &[String] {
        &self.function_ids
    }

    pub fn column_members(&self, e: usize) -> &[usize] {
        &self.columns[e]
    }

    pub fn row_memberships(&self, v: usize) -> &[usize] {
        &self.rows[v]
    }

    /// Dense {0,1} matrix; for tests and the spectral oracle.
    pub fn to_dense(&self) -> Array2<f64> {
        let mut m = Array2::<f64>::zeros((self.n_vertices(), self.n_hyperedges()));
        for (e, members) in self.columns.iter().enumerate() {
            for &v in members {
                m[[v, e]] = 1.0;
            }
        }
        m
    }

    /// Appends rows for new functions: each gets the listed hyperedge
    /// memberships, or a fresh singleton column when the list is empty.
    /// Used at detection time to extend the training hypergraph.
    pub fn extend_rows(&self, new: &[(String, Vec<usize>)]) -> IncidenceMatrix {
        let mut function_ids = self.function_ids.clone();
        let mut columns = self.columns.clone();
        let mut rows = self.rows.clone();
        for (id, memberships) in new {
            let v = function_ids.len();
            function_ids.push(id.clone());
            if memberships.is_empty() {
                columns.push(vec![v]);
                rows.push(vec![columns.len() - 1]);
            } else {
                let mut cols: Vec<usize> = memberships.clone();
                cols.sort_unstable();
                cols.dedup();
                for &e in &cols {
                    columns[e].push(v);
                }
                rows.push(cols);
            }
        }
        let mut inc = IncidenceMatrix {
            function_ids,
            columns,
            rows,
        };
        inc.sort_columns_by_id();
        inc
    }

    fn sort_columns_by_id(&mut self) {
        let ids = &self.function_ids;
        for members in &mut self.columns {
            members.sort_by(|a, b| ids[*a].cmp(&ids[*b]));
        }
    }
}

/// Diagonal hyperedge weights; the default is the identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightDiag {
    pub weights: Vec<f64>,
}

impl WeightDiag {
    pub fn identity(n_hyperedges: usize) -> Self {
        WeightDiag {
            weights: vec![1.0; n_hyperedges],
        }
    }
}

/// Vertex degrees `d(v) = Σ_e w(e)·h(v,e)` and hyperedge degrees
/// `δ(e) = Σ_v h(v,e)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DegreeDiags {
    pub vertex: Vec<f64>,
    pub hyperedge: Vec<f64>,
}

/// Dense normalized operator ϑ and Laplacian Δ = I − ϑ.
#[derive(Debug, Clone)]
pub struct NormalizedOperator {
    pub theta: Array2<f64>,
    pub delta: Array2<f64>,
}

/// Builds the incidence matrix over `function_ids` (row order). Functions
/// in no hyperedge get singleton columns appended after the real ones.
pub fn incidence(
    hyperedges: &HyperedgeSet,
    function_ids: &[String],
) -> Result<IncidenceMatrix, HypergraphError> {
    let rank: BTreeMap<&str, usize> = function_ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    let mut columns = Vec::with_capacity(hyperedges.edges.len());
    let mut rows: Vec<Vec<usize>> = vec![Vec::new(); function_ids.len()];
    for edge in &hyperedges.edges {
        let mut members = Vec::with_capacity(edge.members.len());
        for id in &edge.members {
            let Some(&v) = rank.get(id.as_str()) else {
                return Err(HypergraphError::UnknownFunction(id.clone()));
            };
            members.push(v);
        }
        let e = columns.len();
        for &v in &members {
            rows[v].push(e);
        }
        columns.push(members);
    }
    // Singleton padding for uncovered functions.
    for v in 0..function_ids.len() {
        if rows[v].is_empty() {
            let e = columns.len();
            columns.push(vec![v]);
            rows[v].push(e);
        }
    }
    let mut inc = IncidenceMatrix {
        function_ids: function_ids.to_vec(),
        columns,
        rows,
    };
    inc.sort_columns_by_id();
    Ok(inc)
}

/// Degree diagonals from the incidence and hyperedge weights.
pub fn degrees(h: &IncidenceMatrix, w: &WeightDiag) -> Result<DegreeDiags, HypergraphError> {
    if w.weights.len() != h.n_hyperedges() {
        return Err(HypergraphError::ShapeMismatch {
            context: format!(
                "{} weights for {} hyperedges",
                w.weights.len(),
                h.n_hyperedges()
            ),
        });
    }
    let hyperedge: Vec<f64> = h.columns.iter().map(|m| m.len() as f64).collect();
    let mut vertex = vec![0.0; h.n_vertices()];
    for (e, members) in h.columns.iter().enumerate() {
        for &v in members {
            vertex[v] += w.weights[e];
        }
    }
    Ok(DegreeDiags { vertex, hyperedge })
}

/// Dense ϑ = Dv^{-1/2} H W De^{-1} H^T Dv^{-1/2} and Δ = I − ϑ. Symmetry
/// holds by construction (the upper triangle is mirrored).
pub fn normalized_operator(
    h: &IncidenceMatrix,
    w: &WeightDiag,
    degrees: &DegreeDiags,
) -> Result<NormalizedOperator, HypergraphError> {
    for (i, d) in degrees.vertex.iter().enumerate() {
        if *d <= 0.0 {
            return Err(HypergraphError::ZeroDegree(i));
        }
    }
    for (i, d) in degrees.hyperedge.iter().enumerate() {
        if *d <= 0.0 {
            return Err(HypergraphError::ZeroDegree(i));
        }
    }
    let n = h.n_vertices();
    let inv_sqrt: Vec<f64> = degrees.vertex.iter().map(|d| 1.0 / d.sqrt()).collect();
    let mut theta = Array2::<f64>::zeros((n, n));
    for (e, members) in h.columns.iter().enumerate() {
        let scale = w.weights[e] / degrees.hyperedge[e];
        for (a, &i) in members.iter().enumerate() {
            for &j in &members[a..] {
                let contrib = scale * inv_sqrt[i] * inv_sqrt[j];
                theta[[i, j]] += contrib;
                if i != j {
                    theta[[j, i]] += contrib;
                }
            }
        }
    }
    let mut delta = Array2::<f64>::eye(n);
    delta -= &theta;
    Ok(NormalizedOperator { theta, delta })
}

/// Full symmetric eigendecomposition by cyclic Jacobi rotations; the
/// verification oracle behind the spectral form of the convolution.
/// Returns eigenvalues ascending with matching eigenvector columns.
pub fn spectral_oracle(delta: &Array2<f64>) -> Result<(Array1<f64>, Array2<f64>), HypergraphError> {
    let n = delta.nrows();
    if delta.ncols() != n {
        return Err(HypergraphError::NotSymmetric);
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if (delta[[i, j]] - delta[[j, i]]).abs() > 1e-10 {
                return Err(HypergraphError::NotSymmetric);
            }
        }
    }
    let mut a = delta.clone();
    let mut v = Array2::<f64>::eye(n);
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += a[[i, j]] * a[[i, j]];
            }
        }
        if off <= 1e-24 * (n as f64).max(1.0) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[[p, q]];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let diff = a[[q, q]] - a[[p, p]];
                let t = if diff.abs() < 1e-300 {
                    1.0_f64.copysign(apq)
                } else {
                    let theta = diff / (2.0 * apq);
                    let t = 1.0 / (theta.abs() + (theta * theta + 1.0).sqrt());
                    t.copysign(theta)
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[[k, p]];
                    let akq = a[[k, q]];
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[[p, k]];
                    let aqk = a[[q, k]];
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[[i, i]].partial_cmp(&a[[j, j]]).unwrap());
    let eigenvalues = Array1::from_iter(order.iter().map(|&i| a[[i, i]]));
    let mut eigenvectors = Array2::<f64>::zeros((n, n));
    for (new_col, &old_col) in order.iter().enumerate() {
        for k in 0..n {
            eigenvectors[[k, new_col]] = v[[k, old_col]];
        }
    }
    Ok((eigenvalues, eigenvectors))
}

/// Applies ϑ to a feature matrix through the sparse two-step path
/// (vertex → hyperedge → vertex).
pub fn theta_apply(
    h: &IncidenceMatrix,
    w: &WeightDiag,
    degrees: &DegreeDiags,
    x: &Array2<f64>,
) -> Result<Array2<f64>, HypergraphError> {
    let n = h.n_vertices();
    if x.nrows() != n {
        return Err(HypergraphError::ShapeMismatch {
            context: format!("{} feature rows for {n} vertices", x.nrows()),
        });
    }
    for (i, d) in degrees.vertex.iter().enumerate() {
        if *d <= 0.0 {
            return Err(HypergraphError::ZeroDegree(i));
        }
    }
    let c = x.ncols();
    let inv_sqrt: Vec<f64> = degrees.vertex.iter().map(|d| 1.0 / d.sqrt()).collect();

    // Hyperedge accumulators: s_e = Σ_{v ∈ e} x_v / sqrt(d_v), members in
    // function-id order.
    let mut edge_sum = Array2::<f64>::zeros((h.n_hyperedges(), c));
    for (e, members) in h.columns.iter().enumerate() {
        for &vtx in members {
            let scale = inv_sqrt[vtx];
            for j in 0..c {
                edge_sum[[e, j]] += scale * x[[vtx, j]];
            }
        }
    }
    // Back to vertices: z_v = (1/sqrt(d_v)) Σ_{e ∋ v} (w_e/δ_e) s_e,
    // columns ascending.
    let mut z = Array2::<f64>::zeros((n, c));
    for vtx in 0..n {
        for &e in &h.rows[vtx] {
            let scale = inv_sqrt[vtx] * w.weights[e] / degrees.hyperedge[e];
            for j in 0..c {
                z[[vtx, j]] += scale * edge_sum[[e, j]];
            }
        }
    }
    Ok(z)
}

/// Plain row-major matmul; row results are independent of row order, so
/// permutation equivariance survives at the bit level.
pub(crate) fn row_matmul(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let (n, k) = a.dim();
    let (kb, m) = b.dim();
    assert_eq!(k, kb, "inner dimensions differ");
    let mut out = Array2::<f64>::zeros((n, m));
    for i in 0..n {
        for kk in 0..k {
            let av = a[[i, kk]];
            if av == 0.0 {
                continue;
            }
            for j in 0..m {
                out[[i, j]] += av * b[[kk, j]];
            }
        }
    }
    out
}

/// One hyperedge convolution: `Z = act(ϑ · X · β)` with optional ReLU
/// (the final layer runs without activation).
pub fn hyperedge_conv(
    x: &Array2<f64>,
    h: &IncidenceMatrix,
    w: &WeightDiag,
    degrees: &DegreeDiags,
    beta: &Array2<f64>,
    activate: bool,
) -> Result<Array2<f64>, HypergraphError> {
    if beta.nrows() != x.ncols() {
        return Err(HypergraphError::ShapeMismatch {
            context: format!("beta {:?} against {} feature columns", beta.dim(), x.ncols()),
        });
    }
    let propagated = theta_apply(h, w, degrees, x)?;
    let mut z = row_matmul(&propagated, beta);
    if activate {
        z.mapv_inplace(|v| v.max(0.0));
    }
    Ok(z)
}
