//! Reference implementations used to check the library: written for clarity,
//! not speed, and sharing no code with it.
#![allow(dead_code)]

use eventsift_core::acquisition::ClusterAssignment;
use eventsift_core::bgnn::{loss_and_gradients, weighted_loss, ModelParams};
use eventsift_core::{ClassIndex, SparseGraph};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum::<f64>()
}

/// Entropy of the averaged prediction minus the average entropy, computed
/// from probabilities.
pub fn bald_oracle(probs: &[Vec<f64>]) -> f64 {
    let k = probs.len() as f64;
    let c = probs[0].len();
    let mean: Vec<f64> = (0..c)
        .map(|i| probs.iter().map(|row| row[i]).sum::<f64>() / k)
        .collect();
    entropy(&mean) - probs.iter().map(|row| entropy(row)).sum::<f64>() / k
}

/// `K × C` matrix of normalized log-probabilities, plus the probabilities.
pub fn random_log_probs(rng: &mut ChaCha8Rng, k: usize, c: usize) -> (Array2<f64>, Vec<Vec<f64>>) {
    let sharpness = [0.1, 1.0, 5.0, 20.0][rng.random_range(0..4)];
    let mut probs = Vec::with_capacity(k);
    for _ in 0..k {
        let logits: Vec<f64> = (0..c).map(|_| sharpness * rng.random_range(-1.0..1.0)).collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = logits.iter().map(|l| (l - max).exp()).sum();
        probs.push(logits.iter().map(|l| (l - max).exp() / z).collect::<Vec<f64>>());
    }
    let logp = Array2::from_shape_fn((k, c), |(j, i)| probs[j][i].ln());
    (logp, probs)
}

/// Every pair's cosine distance sorted in full, ties to the lower index.
pub fn knn_oracle(vectors: &[Vec<f32>], k: usize) -> Vec<Vec<(usize, f64)>> {
    let dot = |a: &[f32], b: &[f32]| {
        let mut s = 0.0f64;
        for i in 0..a.len() {
            s += a[i] as f64 * b[i] as f64;
        }
        s
    };
    let n = vectors.len();
    (0..n)
        .map(|u| {
            let mut all: Vec<(usize, f64)> = (0..n)
                .filter(|&v| v != u)
                .map(|v| {
                    let d = 1.0
                        - dot(&vectors[u], &vectors[v])
                            / (dot(&vectors[u], &vectors[u]).sqrt()
                                * dot(&vectors[v], &vectors[v]).sqrt());
                    (v, d)
                })
                .collect();
            all.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
            all.truncate(k);
            all
        })
        .collect()
}

pub fn random_vectors(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f32>> {
    (0..n)
        .map(|_| loop {
            let v: Vec<f32> = (0..d).map(|_| rng.random_range(-1.0f32..1.0)).collect();
            if v.iter().any(|&x| x != 0.0) {
                break v;
            }
        })
        .collect()
}

/// Largest relative gap between the analytic gradient and a central
/// difference, over every parameter entry.
pub fn finite_difference_error(
    params: &ModelParams<f64>,
    graph: &SparseGraph,
    features: &Array2<f64>,
    labeled: &[(usize, ClassIndex)],
    weights: &[f64; 3],
) -> f64 {
    let h = 1e-6;
    let (_, grads) = loss_and_gradients(params, graph, features, labeled, weights, None).unwrap();
    let mut p = params.clone();
    let mut worst: f64 = 0.0;
    for t in 0..grads.len() {
        let (rows, cols) = grads[t].dim();
        for r in 0..rows {
            for c in 0..cols {
                let x0 = p.tensors()[t][[r, c]];
                p.tensors_mut()[t][[r, c]] = x0 + h;
                let up = weighted_loss(&p, graph, features, labeled, weights, None).unwrap();
                p.tensors_mut()[t][[r, c]] = x0 - h;
                let down = weighted_loss(&p, graph, features, labeled, weights, None).unwrap();
                p.tensors_mut()[t][[r, c]] = x0;
                let numeric = (up - down) / (2.0 * h);
                let analytic = grads[t][[r, c]];
                let scale = analytic.abs().max(numeric.abs()).max(1e-4);
                worst = worst.max((analytic - numeric).abs() / scale);
            }
        }
    }
    worst
}

/// Random directed graph with out-degree up to `k`.
pub fn random_graph(rng: &mut ChaCha8Rng, n: usize, k: usize) -> SparseGraph {
    SparseGraph::from_adjacency(
        (0..n)
            .map(|u| {
                let mut out: Vec<usize> = (0..n).filter(|&v| v != u).collect();
                for i in 0..out.len() {
                    let j = rng.random_range(i..out.len());
                    out.swap(i, j);
                }
                out.truncate(rng.random_range(0..=k.min(n - 1)));
                out
            })
            .collect(),
    )
}

/// Clustering with the given sizes laid out contiguously, small ones discarded.
pub fn contiguous_clusters(sizes: &[usize], min_size: usize) -> ClusterAssignment {
    let mut assignment = Vec::new();
    let mut members = Vec::new();
    let mut start = 0;
    for (c, &s) in sizes.iter().enumerate() {
        members.push((start..start + s).collect::<Vec<usize>>());
        assignment.extend(std::iter::repeat_n(c, s));
        start += s;
    }
    let mut cl = ClusterAssignment {
        centroids: vec![vec![0.0]; sizes.len()],
        assignment,
        members,
        discarded: vec![false; sizes.len()],
        iterations: 0,
    };
    cl.apply_discard(min_size);
    cl
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
