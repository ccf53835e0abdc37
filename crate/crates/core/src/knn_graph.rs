//! Exact cosine k-nearest-neighbor graph over fused post embeddings.

use std::cmp::Ordering;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Corpus;

/// Out-degree used when building the post graph.
pub const DEFAULT_K: usize = 16;

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("vectors have different dimensions ({0} vs {1})")]
    DimensionMismatch(usize, usize),
    #[error("zero-norm vector has no cosine distance")]
    ZeroNorm,
    #[error("post {0} has a zero-norm embedding")]
    ZeroNormPost(String),
    #[error("cannot build a graph over an empty corpus")]
    Empty,
    #[error("k must be at least 1")]
    InvalidK,
}

pub(crate) fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

pub(crate) fn norm(a: &[f32]) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
fn distance_from_parts(dot: f64, norm_a: f64, norm_b: f64) -> f64 {
    1.0 - dot / (norm_a * norm_b)
}

/// `1 − a·b / (‖a‖‖b‖)`, in `[0, 2]`.
pub fn cosine_distance(a: &[f32], b: &[f32]) -> Result<f64, GraphError> {
    if a.len() != b.len() {
        return Err(GraphError::DimensionMismatch(a.len(), b.len()));
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(GraphError::ZeroNorm);
    }
    Ok(distance_from_parts(dot(a, b), na, nb))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
}

/// Directed k-NN adjacency with a derived undirected view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseGraph {
    node_count: usize,
    k: usize,
    neighbors: Vec<Vec<Neighbor>>,
    symmetric: Vec<Vec<usize>>,
}

impl SparseGraph {
    /// Builds a graph from explicit out-neighbor lists. Used for hand-made
    /// graphs in tests and bindings; distances are set to zero.
    pub fn from_adjacency(neighbors: Vec<Vec<usize>>) -> Self {
        let k = neighbors.iter().map(Vec::len).max().unwrap_or(0);
        let neighbors = neighbors
            .into_iter()
            .map(|row| {
                row.into_iter()
                    .map(|index| Neighbor {
                        index,
                        distance: 0.0,
                    })
                    .collect()
            })
            .collect();
        Self::from_neighbors(neighbors, k)
    }

    fn from_neighbors(neighbors: Vec<Vec<Neighbor>>, k: usize) -> Self {
        let node_count = neighbors.len();
        let mut symmetric = vec![Vec::new(); node_count];
        for (u, row) in neighbors.iter().enumerate() {
            for nb in row {
                symmetric[u].push(nb.index);
                symmetric[nb.index].push(u);
            }
        }
        for row in &mut symmetric {
            row.sort_unstable();
            row.dedup();
        }
        SparseGraph {
            node_count,
            k,
            neighbors,
            symmetric,
        }
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn neighbors(&self, node: usize) -> &[Neighbor] {
        &self.neighbors[node]
    }

    pub fn neighbor_indices(&self, node: usize) -> Vec<usize> {
        self.neighbors[node].iter().map(|n| n.index).collect()
    }

    /// Undirected neighborhood of `node`, sorted ascending.
    pub fn symmetric_neighbors(&self, node: usize) -> &[usize] {
        &self.symmetric[node]
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum()
    }

    /// Writes `src_id dst_id distance` lines, one per directed edge.
    pub fn write_edge_list<W: Write>(&self, corpus: &Corpus, mut out: W) -> std::io::Result<()> {
        for (u, row) in self.neighbors.iter().enumerate() {
            for nb in row {
                writeln!(
                    out,
                    "{} {} {}",
                    corpus.post(u).id,
                    corpus.post(nb.index).id,
                    nb.distance
                )?;
            }
        }
        Ok(())
    }
}

fn by_distance_then_index(a: &Neighbor, b: &Neighbor) -> Ordering {
    a.distance
        .total_cmp(&b.distance)
        .then(a.index.cmp(&b.index))
}

/// Exact k-NN over raw vectors; each node keeps its `min(k, n − 1)` closest
/// other nodes, ties broken by lower index.
pub fn build_knn_graph_from_vectors(vectors: &[&[f32]], k: usize) -> Result<SparseGraph, GraphError> {
    if vectors.is_empty() {
        return Err(GraphError::Empty);
    }
    if k == 0 {
        return Err(GraphError::InvalidK);
    }
    let dim = vectors[0].len();
    if let Some(v) = vectors.iter().find(|v| v.len() != dim) {
        return Err(GraphError::DimensionMismatch(dim, v.len()));
    }
    let norms: Vec<f64> = vectors.iter().map(|v| norm(v)).collect();
    if norms.iter().any(|&n| n == 0.0) {
        return Err(GraphError::ZeroNorm);
    }
    let n = vectors.len();
    let degree = k.min(n - 1);

    let neighbors = (0..n)
        .into_par_iter()
        .map(|u| {
            let mut row: Vec<Neighbor> = (0..n)
                .filter(|&v| v != u)
                .map(|v| Neighbor {
                    index: v,
                    distance: distance_from_parts(dot(vectors[u], vectors[v]), norms[u], norms[v]),
                })
                .collect();
            if degree < row.len() {
                row.select_nth_unstable_by(degree, by_distance_then_index);
                row.truncate(degree);
            }
            row.sort_unstable_by(by_distance_then_index);
            row
        })
        .collect();

    Ok(SparseGraph::from_neighbors(neighbors, k))
}

/// Builds the post graph from the corpus's fused embeddings.
pub fn build_knn_graph(corpus: &Corpus, k: usize) -> Result<SparseGraph, GraphError> {
    if corpus.is_empty() {
        return Err(GraphError::Empty);
    }
    if let Some(p) = corpus
        .posts()
        .iter()
        .find(|p| norm(&p.fused_embedding) == 0.0)
    {
        return Err(GraphError::ZeroNormPost(p.id.clone()));
    }
    let vectors: Vec<&[f32]> = corpus
        .posts()
        .iter()
        .map(|p| p.fused_embedding.as_slice())
        .collect();
    build_knn_graph_from_vectors(&vectors, k)
}
