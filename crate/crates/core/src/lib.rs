//! Function-level vulnerability detection from code graphs.
//!
//! The pipeline turns each C-like function into a code property graph,
//! encodes it with a gated graph network, slices its program dependence
//! graph around vulnerability interest points to obtain "behavior"
//! subgraphs, clusters those behaviors into hyperedges shared across
//! functions, and classifies functions with hyperedge convolutions over
//! the resulting behavior hypergraph.
//!
//! Modules follow the pipeline stages:
//!
//! | Module | Stage |
//! |--------|-------|
//! | [`graph_ingest`] | mini-C parsing, CPG exchange format, PDG view |
//! | [`slicer`] | interest points and bidirectional PDG slices |
//! | [`token_embed`] | skip-gram token vectors and node embeddings |
//! | [`intra_encoder`] | gated graph network per-function features |
//! | [`behavior_cluster`] | k-means behaviors → hyperedges |
//! | [`hypergraph_core`] | incidence, degrees, Laplacian, hyperedge convolution |
//! | [`detector`] | hypergraph network training, detection, metrics |
//! | [`workbench`] | manifests, splits, orchestration, persistence |

pub mod behavior_cluster;
pub mod detector;
pub mod graph_ingest;
pub mod hypergraph_core;
pub mod intra_encoder;
pub mod rng;
pub mod slicer;
pub mod token_embed;
pub mod workbench;
