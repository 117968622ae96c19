//! Acceptance suite: one test per release criterion, each printing a
//! PASS line with its measured numbers (visible with `--nocapture`).
//!
//! Run with `cargo test -p vulnhg --test acceptance`.

use ndarray::Array2;
use std::collections::BTreeSet;
use std::time::Instant;
use vulnhg::behavior_cluster::{Hyperedge, HyperedgeSet};
use vulnhg::detector::{
    evaluate, forward, loss as hgnn_loss, loss_and_gradients as hgnn_loss_grads, GammaMode,
    HgnnParams, TrainConfig,
};
use vulnhg::graph_ingest::{parse_function, CpgEdge, EdgeKind, NodeId, Pdg};
use vulnhg::hypergraph_core::{
    degrees, hyperedge_conv, incidence, normalized_operator, spectral_oracle, IncidenceMatrix,
    WeightDiag,
};
use vulnhg::intra_encoder::{
    encode_function, loss_and_gradients as intra_loss_grads, GgnnParams, GraphView, LogisticHead,
};
use vulnhg::rng::Rng;
use vulnhg::slicer::{slice, InterestCategory, InterestPoint};
use vulnhg::token_embed::SkipgramConfig;
use vulnhg::workbench::synthetic::{generate, SyntheticConfig};
use vulnhg::workbench::{run_pipeline, serialize_report, PipelineConfig};

fn names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("fn{i:03}")).collect()
}

fn random_hypergraph(rng: &mut Rng) -> (IncidenceMatrix, WeightDiag) {
    let n = 2 + rng.below(49); // n ≤ 50
    let k = 1 + rng.below(20); // K ≤ 20
    let ids = names(n);
    let mut edges = Vec::new();
    for cluster in 0..k {
        let size = 1 + rng.below(n.min(6));
        let mut members = BTreeSet::new();
        for _ in 0..size {
            members.insert(ids[rng.below(n)].clone());
        }
        edges.push(Hyperedge { cluster, members });
    }
    let inc = incidence(&HyperedgeSet { edges }, &ids).unwrap();
    let w = WeightDiag::identity(inc.n_hyperedges());
    (inc, w)
}

#[test]
fn criterion_hypergraph_algebra_fixture() {
    let clock = Instant::now();
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
    let ids = vec!["f1".to_string(), "f2".to_string(), "f3".to_string()];
    let inc = incidence(&hs, &ids).unwrap();
    assert_eq!(
        inc.to_dense(),
        ndarray::array![[1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]
    );
    let w = WeightDiag::identity(2);
    let deg = degrees(&inc, &w).unwrap();
    assert_eq!(deg.hyperedge, vec![2.0, 2.0]);
    assert_eq!(deg.vertex, vec![1.0, 2.0, 1.0]);

    // Hand evaluation of the normalized operator on this fixture.
    let s2 = std::f64::consts::SQRT_2;
    let expect = ndarray::array![
        [0.5, 0.5 / s2, 0.0],
        [0.5 / s2, 0.5, 0.5 / s2],
        [0.0, 0.5 / s2, 0.5]
    ];
    let op = normalized_operator(&inc, &w, &deg).unwrap();
    let mut max_err = 0.0f64;
    for i in 0..3 {
        for j in 0..3 {
            max_err = max_err.max((op.theta[[i, j]] - expect[[i, j]]).abs());
        }
    }
    assert!(max_err <= 1e-12, "entrywise error {max_err}");
    let elapsed = clock.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}");
    println!(
        "criterion hypergraph-algebra-fixture: PASS (max entry error {max_err:.2e}, {elapsed:?})"
    );
}

#[test]
fn criterion_psd_property() {
    let clock = Instant::now();
    let mut rng = Rng::new(4242);
    let mut min_eig = f64::INFINITY;
    for _ in 0..100 {
        let (inc, w) = random_hypergraph(&mut rng);
        let deg = degrees(&inc, &w).unwrap();
        let op = normalized_operator(&inc, &w, &deg).unwrap();
        let (eigenvalues, _) = spectral_oracle(&op.delta).unwrap();
        let low = eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        min_eig = min_eig.min(low);
        assert!(low >= -1e-8, "negative eigenvalue {low}");
    }
    let elapsed = clock.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "took {elapsed:?}");
    println!(
        "criterion psd-property: PASS (100 hypergraphs, min eigenvalue {min_eig:.2e}, {elapsed:?})"
    );
}

#[test]
fn criterion_convolution_oracle_equivalence() {
    let mut rng = Rng::new(777);
    let mut max_err = 0.0f64;
    for _ in 0..50 {
        let (inc, w) = random_hypergraph(&mut rng);
        let deg = degrees(&inc, &w).unwrap();
        let n = inc.n_vertices();
        let c1 = 1 + rng.below(6);
        let c2 = 1 + rng.below(6);
        let x = Array2::from_shape_fn((n, c1), |_| rng.range_f64(-1.0, 1.0));
        let beta = Array2::from_shape_fn((c1, c2), |_| rng.range_f64(-1.0, 1.0));
        let sparse = hyperedge_conv(&x, &inc, &w, &deg, &beta, true).unwrap();

        // Independently coded dense evaluation of the convolution.
        let h = inc.to_dense();
        let m = inc.n_hyperedges();
        let mut theta = Array2::<f64>::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                let mut acc = 0.0;
                for e in 0..m {
                    acc += h[[i, e]] * w.weights[e] / deg.hyperedge[e] * h[[j, e]]
                        / (deg.vertex[i].sqrt() * deg.vertex[j].sqrt());
                }
                theta[[i, j]] = acc;
            }
        }
        let dense = theta.dot(&x).dot(&beta).mapv(|v| v.max(0.0));
        for (a, b) in sparse.iter().zip(dense.iter()) {
            max_err = max_err.max((a - b).abs());
        }
    }
    assert!(max_err <= 1e-12, "max deviation {max_err}");
    println!("criterion convolution-oracle-equivalence: PASS (50 instances, max dev {max_err:.2e})");
}

#[test]
fn criterion_gradient_correctness() {
    // Central finite differences at 64-bit over every trainable
    // parameter: GGNN cell + projection + intra logistic head, then the
    // hypergraph layers + detector head.
    let eps = 1e-5;
    let rel = |a: f64, n: f64| (a - n).abs() / a.abs().max(n.abs()).max(1e-6);

    // Encoder side.
    let d = 3;
    let mut rng = Rng::new(99);
    let params = GgnnParams::init(d, 2, 41);
    let mut head = LogisticHead::zeros(d);
    for w in head.w.iter_mut() {
        *w = rng.range_f64(-0.5, 0.5);
    }
    head.b = -0.3;
    let mut adjacency = Array2::<f64>::zeros((5, 5));
    for (i, j) in [(0, 1), (1, 2), (2, 3), (3, 4), (0, 4), (1, 3)] {
        adjacency[[i, j]] = 1.0;
        adjacency[[j, i]] = 1.0;
    }
    let views = [
        GraphView {
            features: Array2::from_shape_fn((5, d), |_| rng.range_f64(-1.0, 1.0)),
            adjacency: adjacency.clone(),
        },
        GraphView {
            features: Array2::from_shape_fn((5, d), |_| rng.range_f64(-1.0, 1.0)),
            adjacency,
        },
    ];
    let view_refs: Vec<&GraphView> = views.iter().collect();
    let labels = [1.0, 0.0];
    let wd = 1e-3;
    let (_, grads) = intra_loss_grads(&view_refs, &labels, &params, &head, wd).unwrap();
    let analytic = grads.flatten();
    let flat0 = params.flatten(&head);
    let mut worst_intra = 0.0f64;
    for i in 0..flat0.len() {
        let mut probe = params.clone();
        let mut probe_head = head.clone();
        let mut plus = flat0.clone();
        plus[i] += eps;
        probe.set_from_flat(&mut probe_head, &plus);
        let (lp, _) = intra_loss_grads(&view_refs, &labels, &probe, &probe_head, wd).unwrap();
        let mut minus = flat0.clone();
        minus[i] -= eps;
        probe.set_from_flat(&mut probe_head, &minus);
        let (lm, _) = intra_loss_grads(&view_refs, &labels, &probe, &probe_head, wd).unwrap();
        worst_intra = worst_intra.max(rel(analytic[i], (lp - lm) / (2.0 * eps)));
    }
    assert!(worst_intra <= 1e-4, "encoder max rel err {worst_intra}");

    // Hypergraph side.
    let mut rng = Rng::new(55);
    let (inc, w) = random_hypergraph(&mut rng);
    let n = inc.n_vertices();
    let x = Array2::from_shape_fn((n, 4), |_| rng.range_f64(-1.0, 1.0));
    let labels: Vec<bool> = (0..n).map(|i| i % 3 == 0).collect();
    let mask: Vec<usize> = (0..n).step_by(2).collect();
    let mut hgnn = HgnnParams::init(4, 2, 7);
    for v in hgnn.head_w.iter_mut() {
        *v = rng.range_f64(-0.5, 0.5);
    }
    hgnn.head_b = 0.2;
    let (_, analytic) = hgnn_loss_grads(&x, &inc, &w, &labels, &mask, &hgnn, wd).unwrap();
    let flat0 = hgnn.flatten();
    let mut worst_hgnn = 0.0f64;
    for i in 0..flat0.len() {
        let mut probe = hgnn.clone();
        let mut plus = flat0.clone();
        plus[i] += eps;
        probe.set_from_flat(&plus);
        let probs = forward(&x, &inc, &w, &probe).unwrap();
        let lp = hgnn_loss(&probs, &labels, &mask, &probe, wd).unwrap();
        let mut minus = flat0.clone();
        minus[i] -= eps;
        probe.set_from_flat(&minus);
        let probs = forward(&x, &inc, &w, &probe).unwrap();
        let lm = hgnn_loss(&probs, &labels, &mask, &probe, wd).unwrap();
        worst_hgnn = worst_hgnn.max(rel(analytic[i], (lp - lm) / (2.0 * eps)));
    }
    assert!(worst_hgnn <= 1e-4, "hypergraph max rel err {worst_hgnn}");
    println!(
        "criterion gradient-correctness: PASS (encoder {worst_intra:.2e}, hypergraph {worst_hgnn:.2e})"
    );
}

#[test]
fn criterion_slicing_oracle() {
    // Boolean matrix-power transitive closure, independent of the BFS
    // implementation inside `slice`.
    fn closure(n: usize, edges: &[(NodeId, NodeId)]) -> Vec<Vec<bool>> {
        let mut reach = vec![vec![false; n]; n];
        for (s, d) in edges {
            reach[*s as usize][*d as usize] = true;
        }
        for _ in 0..n {
            let mut next = reach.clone();
            for i in 0..n {
                for k in 0..n {
                    if reach[i][k] {
                        for (j, cell) in next[i].iter_mut().enumerate() {
                            *cell = *cell || reach[k][j];
                        }
                    }
                }
            }
            if next == reach {
                break;
            }
            reach = next;
        }
        reach
    }

    let mut rng = Rng::new(2024);
    let mut checked = 0usize;
    for _ in 0..200 {
        let n = 1 + rng.below(20);
        let mut edges = Vec::new();
        for s in 0..n {
            for d in 0..n {
                if s != d && rng.f64() < 0.15 {
                    edges.push((s as NodeId, d as NodeId));
                }
            }
        }
        let pdg = Pdg {
            function_id: "t".into(),
            nodes: (0..n as NodeId).collect(),
            edges: edges
                .iter()
                .map(|(s, d)| CpgEdge {
                    src: *s,
                    dst: *d,
                    kind: if (s + d) % 2 == 0 { EdgeKind::DDG } else { EdgeKind::CDG },
                })
                .collect(),
        };
        let reach = closure(n, &edges);
        let point = rng.below(n) as NodeId;
        let sub = slice(
            &pdg,
            InterestPoint {
                node_id: point,
                category: InterestCategory::Array,
            },
        )
        .unwrap();
        let mut expect: BTreeSet<NodeId> = BTreeSet::from([point]);
        for v in 0..n {
            if reach[point as usize][v] {
                expect.insert(v as NodeId);
            }
            if reach[v][point as usize] {
                expect.insert(v as NodeId);
            }
        }
        assert_eq!(sub.node_ids, expect, "digraph n={n} point={point}");
        checked += 1;
    }
    println!("criterion slicing-oracle: PASS ({checked} digraphs, exact set equality)");
}

#[test]
fn criterion_permutation_properties() {
    // Encoder invariance under node relabeling (bitwise).
    let src = "int f(int n){int s=0; int a[8]; for(int i=0;i<n;i=i+1){s=s+i; a[i]=s;} return s;}";
    let cpg = parse_function(src).unwrap();
    let sk = SkipgramConfig {
        dim: 6,
        window: 2,
        negatives: 2,
        epochs: 2,
        learning_rate: 0.05,
        seed: 3,
    };
    let corpus = vulnhg::token_embed::build_corpus(std::slice::from_ref(&cpg));
    let (vocab, table) = vulnhg::token_embed::train_skipgram(&corpus, &sk).unwrap();
    let params = GgnnParams::init(6, 2, 5);
    let x = encode_function(&cpg, &vocab, &table, &params).unwrap();
    let remap = |id: NodeId| 500 - id * 2;
    let mut nodes: Vec<_> = cpg
        .nodes
        .iter()
        .map(|n| vulnhg::graph_ingest::CpgNode {
            node_id: remap(n.node_id),
            ..n.clone()
        })
        .collect();
    nodes.reverse();
    let mut edges: Vec<_> = cpg
        .edges
        .iter()
        .map(|e| CpgEdge {
            src: remap(e.src),
            dst: remap(e.dst),
            kind: e.kind,
        })
        .collect();
    edges.reverse();
    let permuted = vulnhg::graph_ingest::Cpg {
        function_id: cpg.function_id.clone(),
        nodes,
        edges,
    };
    let y = encode_function(&permuted, &vocab, &table, &params).unwrap();
    assert_eq!(x, y, "encoder must be bitwise invariant under relabeling");

    // Detector equivariance under joint row permutation (bitwise).
    let mut rng = Rng::new(8);
    let (inc, w) = random_hypergraph(&mut rng);
    let n = inc.n_vertices();
    let x = Array2::from_shape_fn((n, 5), |_| rng.range_f64(-1.0, 1.0));
    let hgnn = HgnnParams::init(5, 2, 11);
    let probs = forward(&x, &inc, &w, &hgnn).unwrap();
    let mut perm: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut perm);
    let permuted_ids: Vec<String> = perm.iter().map(|&i| inc.function_ids()[i].clone()).collect();
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
    let probs2 = forward(&x2, &inc2, &w, &hgnn).unwrap();
    for (new_row, &old_row) in perm.iter().enumerate() {
        assert_eq!(probs2[new_row], probs[old_row], "row {old_row}");
    }
    println!("criterion permutation-properties: PASS (bitwise equality both sides)");
}

#[test]
fn criterion_metrics_unit_suite() {
    // Enumerate confusion matrices up to 3 per cell, including every
    // zero-denominator case, and reproduce the definitions exactly.
    let mut cases = 0usize;
    for tp in 0..=3usize {
        for fp in 0..=3usize {
            for fn_ in 0..=3usize {
                for tn in 0..=3usize {
                    let mut predicted = Vec::new();
                    let mut truth = Vec::new();
                    for _ in 0..tp {
                        predicted.push(true);
                        truth.push(true);
                    }
                    for _ in 0..fp {
                        predicted.push(true);
                        truth.push(false);
                    }
                    for _ in 0..fn_ {
                        predicted.push(false);
                        truth.push(true);
                    }
                    for _ in 0..tn {
                        predicted.push(false);
                        truth.push(false);
                    }
                    let m = evaluate(&predicted, &truth).unwrap();
                    assert_eq!((m.tp, m.fp, m.fn_, m.tn), (tp, fp, fn_, tn));
                    assert_eq!(m.tp + m.fp + m.fn_ + m.tn, predicted.len());
                    let recall = if tp + fn_ == 0 {
                        0.0
                    } else {
                        tp as f64 / (tp + fn_) as f64
                    };
                    let f_measure = if 2 * tp + fp + fn_ == 0 {
                        0.0
                    } else {
                        2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
                    };
                    assert_eq!(m.recall, recall, "recall for {tp},{fp},{fn_},{tn}");
                    assert_eq!(m.f_measure, f_measure, "f for {tp},{fp},{fn_},{tn}");
                    cases += 1;
                }
            }
        }
    }
    println!("criterion metrics-unit-suite: PASS ({cases} confusion matrices, exact)");
}

fn benchmark_config() -> PipelineConfig {
    PipelineConfig {
        dim: 32,
        steps: 2,
        hyperedges: 16,
        layers: 2,
        skipgram: SkipgramConfig {
            dim: 32,
            window: 3,
            negatives: 4,
            epochs: 6,
            learning_rate: 0.05,
            seed: 1,
        },
        train: TrainConfig {
            epochs: 200,
            learning_rate: 0.01,
            gamma: 0.9,
            gamma_mode: GammaMode::AdamBeta1,
            weight_decay: 5e-4,
            seed: 1,
        },
        intra_epochs: Some(40),
        seed: 20240920,
        ..PipelineConfig::default()
    }
}

#[test]
fn criterion_end_to_end_planted_benchmark() {
    let clock = Instant::now();
    let manifest = generate(&SyntheticConfig {
        functions: 400,
        vulnerable_ratio: 0.5,
        seed: 11,
    });
    let (_, report) = run_pipeline(&manifest, &benchmark_config()).unwrap();
    let full = report.test.f_measure;
    let baseline = report.baseline_test.f_measure;
    let elapsed = clock.elapsed();
    assert!(full >= 0.85, "pipeline test F-measure {full}");
    assert!(
        full - baseline >= 0.05,
        "hypergraph gain too small: {full} vs baseline {baseline}"
    );
    assert!(elapsed.as_secs_f64() < 300.0, "took {elapsed:?}");
    println!(
        "criterion end-to-end-planted-benchmark: PASS (F {full:.3}, baseline {baseline:.3}, +{:.1} points, {elapsed:?})",
        (full - baseline) * 100.0
    );
}

#[test]
fn criterion_reproducibility() {
    let manifest = generate(&SyntheticConfig {
        functions: 60,
        vulnerable_ratio: 0.5,
        seed: 7,
    });
    let mut config = benchmark_config();
    config.dim = 12;
    config.skipgram.dim = 12;
    config.skipgram.epochs = 2;
    config.hyperedges = 8;
    config.train.epochs = 10;
    config.intra_epochs = Some(6);
    let (bundle_a, report_a) = run_pipeline(&manifest, &config).unwrap();
    let (bundle_b, report_b) = run_pipeline(&manifest, &config).unwrap();
    let text_a = serialize_report(&report_a);
    let text_b = serialize_report(&report_b);
    assert_eq!(text_a.as_bytes(), text_b.as_bytes(), "reports must be byte-identical");
    assert_eq!(
        vulnhg::workbench::bundle_checksum(&bundle_a),
        vulnhg::workbench::bundle_checksum(&bundle_b)
    );
    println!(
        "criterion reproducibility: PASS (byte-identical report, {} bytes; bundle checksum {})",
        text_a.len(),
        report_a.bundle_checksum
    );
}
