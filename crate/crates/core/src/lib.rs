//! Interactive event sifting: a Bayesian GraphSAGE classifier driven by a
//! BALD-based active-learning loop.
//!
//! The pipeline ingests posts with precomputed image and text embeddings,
//! optionally enriches the training set with posts from other events, builds a
//! cosine k-NN graph, and alternates between analyst annotation and model
//! retraining.

pub mod acquisition;
pub mod bgnn;
pub mod corpus;
pub mod knn_graph;
pub mod projection;
pub mod session;
pub mod synthetic;

pub use corpus::{BinaryLabel, ClassIndex, Corpus, LabelSource, LabelState, LabelValue, Post, Split};
pub use knn_graph::SparseGraph;
