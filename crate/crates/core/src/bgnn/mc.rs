use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::model::{forward, mean_rows, row_argmax, ModelParams};
use super::{derive_seed, BgnnError};
use crate::corpus::{ClassIndex, NUM_CLASSES};
use crate::knn_graph::SparseGraph;

/// `K × C` log-probabilities for one node, one row per stochastic pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McPrediction {
    logprobs: Array2<f64>,
}

impl McPrediction {
    pub fn new(logprobs: Array2<f64>) -> Self {
        McPrediction { logprobs }
    }

    pub fn logprobs(&self) -> &Array2<f64> {
        &self.logprobs
    }

    pub fn samples(&self) -> usize {
        self.logprobs.nrows()
    }

    /// Mean over passes of the exponentiated rows.
    pub fn mean_probabilities(&self) -> Array1<f64> {
        mean_rows(&self.logprobs.mapv(f64::exp))
    }

    /// Argmax of the mean probability vector.
    pub fn predicted_class(&self) -> ClassIndex {
        ClassIndex(row_argmax(self.mean_probabilities().view()))
    }

    /// `1 − max` of the mean probability vector.
    pub fn max_prob_uncertainty(&self) -> f64 {
        1.0 - self
            .mean_probabilities()
            .iter()
            .fold(0.0f64, |m, &p| m.max(p))
    }
}

fn collect(passes: &[Array2<f32>], nodes: usize) -> Vec<McPrediction> {
    (0..nodes)
        .map(|v| {
            let mut m = Array2::zeros((passes.len(), NUM_CLASSES));
            for (j, pass) in passes.iter().enumerate() {
                for c in 0..NUM_CLASSES {
                    m[[j, c]] = pass[[v, c]] as f64;
                }
                // Single-precision log-softmax is only normalized to ~1e-7 per
                // entry; renormalize in double precision.
                let mut row = m.row_mut(j);
                let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
                let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
                row -= lse;
            }
            McPrediction::new(m)
        })
        .collect()
}

/// `samples` forward passes with dropout active, each with its own mask seed
/// derived from `seed`.
pub fn mc_predict(
    params: &ModelParams<f32>,
    graph: &SparseGraph,
    features: &Array2<f32>,
    samples: usize,
    seed: u64,
) -> Result<Vec<McPrediction>, BgnnError> {
    if samples == 0 {
        return Err(BgnnError::InvalidConfig("mc_samples must be >= 1".into()));
    }
    let passes = (0..samples)
        .map(|j| forward(params, graph, features, true, derive_seed(seed, j as u64)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(collect(&passes, features.nrows()))
}

/// A single pass with dropout off, wrapped as one-sample predictions.
pub fn deterministic_predict(
    params: &ModelParams<f32>,
    graph: &SparseGraph,
    features: &Array2<f32>,
) -> Result<Vec<McPrediction>, BgnnError> {
    let pass = forward(params, graph, features, false, 0)?;
    Ok(collect(&[pass], features.nrows()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bgnn::{Architecture, ModelConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup(dropout_p: f64) -> (ModelParams<f32>, SparseGraph, Array2<f32>) {
        let n = 50;
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let x = Array2::from_shape_simple_fn((n, 6), || rng.random_range(-1.0f32..1.0));
        let rows: Vec<Vec<f32>> = x.rows().into_iter().map(|r| r.to_vec()).collect();
        let refs: Vec<&[f32]> = rows.iter().map(|r| r.as_slice()).collect();
        let graph = crate::knn_graph::build_knn_graph_from_vectors(&refs, 5).unwrap();
        let config = ModelConfig {
            hidden1: 16,
            hidden2: 16,
            dropout_p,
            architecture: Architecture::Sage,
        };
        (ModelParams::init(&config, 6, 3), graph, x)
    }

    #[test]
    fn no_dropout_means_identical_rows() {
        let (params, graph, x) = setup(0.0);
        let preds = mc_predict(&params, &graph, &x, 10, 5).unwrap();
        for p in &preds {
            let first = p.logprobs().row(0).to_owned();
            for row in p.logprobs().rows() {
                assert_eq!(row, first);
            }
        }
    }

    #[test]
    fn dropout_perturbs_some_node() {
        let (params, graph, x) = setup(0.5);
        let preds = mc_predict(&params, &graph, &x, 10, 5).unwrap();
        let max_var = preds
            .iter()
            .map(|p| {
                let col = p.logprobs().column(0);
                let mean = col.mean().unwrap();
                col.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
            })
            .fold(0.0f64, f64::max);
        assert!(max_var > 0.0);
    }

    #[test]
    fn rows_are_log_distributions_and_seeded() {
        let (params, graph, x) = setup(0.5);
        let a = mc_predict(&params, &graph, &x, 4, 9).unwrap();
        let b = mc_predict(&params, &graph, &x, 4, 9).unwrap();
        assert_eq!(a, b);
        for p in &a {
            assert_eq!(p.samples(), 4);
            for row in p.logprobs().rows() {
                let s: f64 = row.iter().map(|v| v.exp()).sum();
                assert!(s.ln().abs() < 1e-6);
                assert!(row.iter().all(|&v| v <= 0.0));
            }
        }
        assert!(mc_predict(&params, &graph, &x, 0, 9).is_err());
    }

    #[test]
    fn forward_without_dropout_is_bitwise_stable_and_isolated_node_uses_self_path() {
        let (params, graph, x) = setup(0.5);
        let a = forward(&params, &graph, &x, false, 1).unwrap();
        let b = forward(&params, &graph, &x, false, 2).unwrap();
        assert_eq!(a, b);

        let single = SparseGraph::from_adjacency(vec![vec![]]);
        let row = x.slice(ndarray::s![0..1, ..]).to_owned();
        let out = forward(&params, &single, &row, false, 0).unwrap();
        let mut mlp = params.clone();
        mlp.sage1.w_neigh = None;
        mlp.sage2.w_neigh = None;
        let self_only = forward(&mlp, &single, &row, false, 0).unwrap();
        assert_eq!(out, self_only);
    }

    #[test]
    fn forward_rejects_shape_mismatch() {
        let (params, graph, x) = setup(0.5);
        let wrong = x.slice(ndarray::s![0..10, ..]).to_owned();
        assert!(matches!(
            forward(&params, &graph, &wrong, false, 0),
            Err(BgnnError::DimensionMismatch(_))
        ));
    }
}
