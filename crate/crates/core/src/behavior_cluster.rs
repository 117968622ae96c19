//! Clustering behavior vectors into common behaviors (hyperedges).
//!
//! Lloyd's algorithm with k-means++ seeding partitions the behavior
//! vectors into `K` clusters; each cluster becomes one hyperedge whose
//! members are the functions contributing a behavior to it. At detection
//! time new behaviors are assigned to the nearest frozen centroid.
//!
//! Ties always resolve to the lowest centroid index and the final
//! assignment is recomputed against the final centroids, so
//! [`assign_new`] reproduces [`kmeans`] assignments exactly.

use crate::rng::Rng;
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

/// Cluster centers, one row per cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Centroids {
    pub matrix: Array2<f64>,
}

impl Centroids {
    pub fn k(&self) -> usize {
        self.matrix.nrows()
    }
}

/// Cluster index per behavior, aligned with the input order; each entry
/// keeps the id of the function the behavior came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterAssignment {
    pub items: Vec<(String, usize)>,
}

/// One hyperedge: the functions sharing behaviors of one cluster.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hyperedge {
    pub cluster: usize,
    pub members: BTreeSet<String>,
}

/// Hyperedges with nonempty member sets, ascending cluster index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HyperedgeSet {
    pub edges: Vec<Hyperedge>,
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

fn nearest(point: &[f64], centroids: &Array2<f64>) -> usize {
    let mut best = 0usize;
    let mut best_d = f64::INFINITY;
    for (idx, row) in centroids.rows().into_iter().enumerate() {
        let d = squared_distance(point, row.as_slice().unwrap());
        // Strict `<` keeps the lowest index on ties.
        if d < best_d {
            best = idx;
            best_d = d;
        }
    }
    best
}

fn distinct_rows(vectors: &Array2<f64>) -> Vec<usize> {
    let mut seen: BTreeSet<Vec<u64>> = BTreeSet::new();
    let mut out = Vec::new();
    for (i, row) in vectors.rows().into_iter().enumerate() {
        let key: Vec<u64> = row.iter().map(|v| v.to_bits()).collect();
        if seen.insert(key) {
            out.push(i);
        }
    }
    out
}

fn plus_plus_seed(vectors: &Array2<f64>, k: usize, rng: &mut Rng) -> Array2<f64> {
    let n = vectors.nrows();
    let d = vectors.ncols();
    let mut centroids = Array2::<f64>::zeros((k, d));
    let first = rng.below(n);
    centroids.row_mut(0).assign(&vectors.row(first));
    let mut dist2: Vec<f64> = (0..n)
        .map(|i| {
            squared_distance(
                vectors.row(i).as_slice().unwrap(),
                centroids.row(0).as_slice().unwrap(),
            )
        })
        .collect();
    for c in 1..k {
        let total: f64 = dist2.iter().sum();
        let pick = if total <= 0.0 {
            // All remaining mass is zero (shouldn't happen once k is
            // capped to the distinct count); fall back to uniform.
            rng.below(n)
        } else {
            let mut r = rng.f64() * total;
            let mut chosen = n - 1;
            for (i, d2) in dist2.iter().enumerate() {
                r -= d2;
                if r <= 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        };
        centroids.row_mut(c).assign(&vectors.row(pick));
        for i in 0..n {
            let d = squared_distance(
                vectors.row(i).as_slice().unwrap(),
                centroids.row(c).as_slice().unwrap(),
            );
            if d < dist2[i] {
                dist2[i] = d;
            }
        }
    }
    centroids
}

/// Restarts per call; the lowest-SSE run wins. Each restart is plain
/// Lloyd with k-means++ seeding from a forked sub-seed.
const RESTARTS: usize = 8;

/// Lloyd's k-means over behavior vectors. `function_ids[i]` names the
/// function behind row `i`. The effective cluster count drops to the
/// number of distinct vectors when that is smaller than `k`; empty
/// clusters are re-seeded at the point farthest from its centroid. Runs
/// several seeded restarts and keeps the lowest within-cluster SSE.
pub fn kmeans(
    vectors: &Array2<f64>,
    function_ids: &[String],
    k: usize,
    seed: u64,
    max_iters: usize,
) -> (Centroids, ClusterAssignment) {
    assert!(vectors.nrows() >= 1, "at least one behavior required");
    assert!(k >= 1, "k must be at least 1");
    assert_eq!(vectors.nrows(), function_ids.len());

    let distinct = distinct_rows(vectors);
    let k_eff = k.min(distinct.len());
    let root = Rng::new(seed);
    let mut best: Option<(Array2<f64>, Vec<usize>, f64)> = None;
    for restart in 0..RESTARTS {
        let mut rng = root.fork(&format!("restart{restart}"));
        let (centroids, assignment) = lloyd(vectors, k_eff, &mut rng, max_iters);
        let sse: f64 = assignment
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                squared_distance(
                    vectors.row(i).as_slice().unwrap(),
                    centroids.row(c).as_slice().unwrap(),
                )
            })
            .sum();
        // Strict `<` keeps the first among equal runs.
        if best.as_ref().map(|(_, _, b)| sse < *b).unwrap_or(true) {
            best = Some((centroids, assignment, sse));
        }
    }
    let (centroids, assignment, _) = best.expect("at least one restart");
    let items = function_ids.iter().cloned().zip(assignment).collect();
    (
        Centroids { matrix: centroids },
        ClusterAssignment { items },
    )
}

fn lloyd(
    vectors: &Array2<f64>,
    k_eff: usize,
    rng: &mut Rng,
    max_iters: usize,
) -> (Array2<f64>, Vec<usize>) {
    let n = vectors.nrows();
    let mut centroids = plus_plus_seed(vectors, k_eff, rng);

    let assign_all = |centroids: &Array2<f64>| -> Vec<usize> {
        (0..n)
            .map(|i| nearest(vectors.row(i).as_slice().unwrap(), centroids))
            .collect()
    };

    let mut assignment = assign_all(&centroids);
    for _iter in 0..max_iters {
        // Means of the assigned points.
        let d = vectors.ncols();
        let mut sums = Array2::<f64>::zeros((k_eff, d));
        let mut counts = vec![0usize; k_eff];
        for (i, &c) in assignment.iter().enumerate() {
            counts[c] += 1;
            let mut row = sums.row_mut(c);
            row += &vectors.row(i);
        }
        let mut new_centroids = centroids.clone();
        for c in 0..k_eff {
            if counts[c] > 0 {
                new_centroids
                    .row_mut(c)
                    .assign(&(&sums.row(c) / counts[c] as f64));
            }
        }
        // Empty-cluster repair: move the centroid onto the point farthest
        // from its current centroid.
        for c in 0..k_eff {
            if counts[c] == 0 {
                let mut far = 0usize;
                let mut far_d = -1.0;
                for i in 0..n {
                    let dd = squared_distance(
                        vectors.row(i).as_slice().unwrap(),
                        new_centroids.row(assignment[i]).as_slice().unwrap(),
                    );
                    if dd > far_d {
                        far_d = dd;
                        far = i;
                    }
                }
                new_centroids.row_mut(c).assign(&vectors.row(far));
            }
        }
        let new_assignment = assign_all(&new_centroids);
        let converged = new_assignment == assignment;
        centroids = new_centroids;
        assignment = new_assignment;
        if converged {
            break;
        }
    }
    (centroids, assignment)
}

/// Groups an assignment into hyperedges; clusters with no behaviors are
/// dropped, clusters with fewer than `min_members` distinct functions
/// are filtered out.
pub fn build_hyperedges(assignment: &ClusterAssignment, min_members: usize) -> HyperedgeSet {
    let mut grouped: BTreeMap<usize, BTreeSet<String>> = BTreeMap::new();
    for (function_id, cluster) in &assignment.items {
        grouped
            .entry(*cluster)
            .or_default()
            .insert(function_id.clone());
    }
    HyperedgeSet {
        edges: grouped
            .into_iter()
            .filter(|(_, members)| members.len() >= min_members.max(1))
            .map(|(cluster, members)| Hyperedge { cluster, members })
            .collect(),
    }
}

/// Nearest-centroid index per vector; centroids stay frozen.
pub fn assign_new(vectors: &Array2<f64>, centroids: &Centroids) -> Vec<usize> {
    (0..vectors.nrows())
        .map(|i| nearest(vectors.row(i).as_slice().unwrap(), &centroids.matrix))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("f{i}")).collect()
    }

    #[test]
    fn k1_returns_mean_centroid() {
        let v = array![[0.0, 0.0], [2.0, 0.0], [4.0, 6.0]];
        let (centroids, assignment) = kmeans(&v, &names(3), 1, 7, 50);
        assert_eq!(centroids.k(), 1);
        assert_eq!(centroids.matrix.row(0).to_vec(), vec![2.0, 2.0]);
        assert!(assignment.items.iter().all(|(_, c)| *c == 0));
    }

    #[test]
    fn recovers_two_well_separated_triples() {
        // Two tight triples around (0,0) and (10,10).
        let v = array![
            [0.0, 0.1],
            [0.1, 0.0],
            [-0.1, 0.0],
            [10.0, 10.1],
            [10.1, 9.9],
            [9.9, 10.0]
        ];
        let (_, assignment) = kmeans(&v, &names(6), 2, 3, 100);
        let first = assignment.items[0].1;
        assert!(assignment.items[..3].iter().all(|(_, c)| *c == first));
        let second = assignment.items[3].1;
        assert_ne!(first, second);
        assert!(assignment.items[3..].iter().all(|(_, c)| *c == second));

        // Brute force over all 2-partitions: the recovered split must be
        // the SSE minimizer.
        let sse = |groups: &[usize]| -> f64 {
            let mut total = 0.0;
            for g in 0..2 {
                let rows: Vec<usize> =
                    (0..6).filter(|i| groups[*i] == g).collect();
                if rows.is_empty() {
                    continue;
                }
                let mut mean = vec![0.0; 2];
                for &r in &rows {
                    mean[0] += v[[r, 0]] / rows.len() as f64;
                    mean[1] += v[[r, 1]] / rows.len() as f64;
               }
                for &r in &rows {
                    total += squared_distance(v.row(r).as_slice().unwrap(), &mean);
                }
            }
            total
        };
        let mut best_groups = vec![0; 6];
        let mut best = f64::INFINITY;
        for mask in 0..(1 << 6) {
            let groups: Vec<usize> = (0..6).map(|i| (mask >> i) & 1).collect();
            let s = sse(&groups);
            if s < best {
                best = s;
                best_groups = groups;
            }
        }
        let ours: Vec<usize> = assignment
            .items
            .iter()
            .map(|(_, c)| usize::from(*c == second))
            .collect();
        let theirs: Vec<usize> = best_groups
            .iter()
            .map(|&g| usize::from(g == best_groups[3]))
            .collect();
        assert_eq!(ours, theirs);
    }

    #[test]
    fn k_above_distinct_count_gives_zero_sse() {
        let v = array![[1.0, 0.0], [1.0, 0.0], [3.0, 0.0], [5.0, 5.0]];
        let (centroids, assignment) = kmeans(&v, &names(4), 10, 1, 50);
        assert_eq!(centroids.k(), 3); // 3 distinct vectors
        for (i, (_, c)) in assignment.items.iter().enumerate() {
            let d = squared_distance(
                v.row(i).as_slice().unwrap(),
                centroids.matrix.row(*c).as_slice().unwrap(),
            );
            assert_eq!(d, 0.0);
        }
        // Duplicates share a cluster.
        assert_eq!(assignment.items[0].1, assignment.items[1].1);
    }

    #[test]
    fn converged_solution_is_locally_optimal() {
        let v = array![
            [0.0, 0.0],
            [1.0, 0.0],
            [0.5, 1.0],
            [8.0, 8.0],
            [9.0, 8.0],
            [8.5, 9.0],
            [-4.0, 6.0],
            [-5.0, 6.5]
        ];
        let (centroids, assignment) = kmeans(&v, &names(8), 3, 11, 200);
        // No single-point reassignment lowers within-cluster SSE.
        let current_sse: f64 = assignment
            .items
            .iter()
            .enumerate()
            .map(|(i, (_, c))| {
                squared_distance(
                    v.row(i).as_slice().unwrap(),
                    centroids.matrix.row(*c).as_slice().unwrap(),
                )
            })
            .sum();
        for i in 0..8 {
            for c in 0..centroids.k() {
                let mut alt: f64 = 0.0;
                for (j, (_, cj)) in assignment.items.iter().enumerate() {
                    let target = if j == i { c } else { *cj };
                    alt += squared_distance(
                        v.row(j).as_slice().unwrap(),
                        centroids.matrix.row(target).as_slice().unwrap(),
                    );
                }
                assert!(alt >= current_sse - 1e-9);
            }
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let v = array![[0.0, 1.0], [2.0, 3.0], [9.0, 1.0], [4.0, 4.0]];
        let a = kmeans(&v, &names(4), 2, 42, 100);
        let b = kmeans(&v, &names(4), 2, 42, 100);
        assert_eq!(a.0.matrix, b.0.matrix);
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn hyperedges_group_functions_and_drop_empty_clusters() {
        let assignment = ClusterAssignment {
            items: vec![
                ("f1".into(), 0),
                ("f2".into(), 0),
                ("f3".into(), 1),
            ],
        };
        let hs = build_hyperedges(&assignment, 1);
        assert_eq!(hs.edges.len(), 2);
        assert_eq!(hs.edges[0].cluster, 0);
        assert_eq!(
            hs.edges[0].members,
            BTreeSet::from(["f1".to_string(), "f2".to_string()])
        );
        assert_eq!(
            hs.edges[1].members,
            BTreeSet::from(["f3".to_string()])
        );
        // Cluster 5 of a hypothetical K=10 run simply never appears.
        assert!(hs.edges.iter().all(|e| e.cluster <= 1));
    }

    #[test]
    fn one_function_with_two_behaviors_is_one_member() {
        let assignment = ClusterAssignment {
            items: vec![("f1".into(), 0), ("f1".into(), 0)],
        };
        let hs = build_hyperedges(&assignment, 1);
        assert_eq!(hs.edges.len(), 1);
        assert_eq!(hs.edges[0].members.len(), 1);
    }

    #[test]
    fn min_members_filters_small_hyperedges() {
        let assignment = ClusterAssignment {
            items: vec![
                ("f1".into(), 0),
                ("f2".into(), 0),
                ("f3".into(), 1),
            ],
        };
        let hs = build_hyperedges(&assignment, 2);
        assert_eq!(hs.edges.len(), 1);
        assert_eq!(hs.edges[0].cluster, 0);
    }

    #[test]
    fn assign_new_matches_training_assignment() {
        let v = array![
            [0.0, 0.0],
            [0.5, 0.5],
            [10.0, 10.0],
            [10.5, 9.5],
            [5.0, 5.0]
        ];
        let (centroids, assignment) = kmeans(&v, &names(5), 2, 8, 100);
        let again = assign_new(&v, &centroids);
        let original: Vec<usize> = assignment.items.iter().map(|(_, c)| *c).collect();
        assert_eq!(again, original);
    }

    #[test]
    fn exact_centroid_match_assigns_to_it() {
        let centroids = Centroids {
            matrix: array![[1.0, 1.0], [4.0, 4.0]],
        };
        let v = array![[4.0, 4.0]];
        assert_eq!(assign_new(&v, &centroids), vec![1]);
    }

    #[test]
    fn equidistant_assigns_to_lowest_index() {
        let centroids = Centroids {
            matrix: array![[0.0, 0.0], [0.0, 0.0], [2.0, 0.0]],
        };
        let v = array![[1.0, 0.0]];
        // Equidistant to all three (indices 0,1 identical; 2 mirrored).
        assert_eq!(assign_new(&v, &centroids), vec![0]);
    }

    #[test]
    fn every_function_with_behaviors_lands_in_a_hyperedge() {
        let v = array![[0.0], [1.0], [2.0], [3.0], [4.0]];
        let ids = vec![
            "a".to_string(),
            "a".to_string(),
            "b".to_string(),
            "c".to_string(),
            "d".to_string(),
        ];
        let (_, assignment) = kmeans(&v, &ids, 3, 5, 100);
        let hs = build_hyperedges(&assignment, 1);
        let covered: BTreeSet<&String> =
            hs.edges.iter().flat_map(|e| e.members.iter()).collect();
        for id in &ids {
            assert!(covered.contains(id));
        }
    }
}
