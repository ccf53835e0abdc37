use std::collections::BTreeMap;

use ndarray::Array2;

use super::model::{check_shapes, ModelParams};
use super::tape::{Scalar, Tape};
use super::{derive_seed, BgnnError, ClassWeights, TrainConfig};
use crate::corpus::{ClassIndex, Corpus, Split, NUM_CLASSES};
use crate::knn_graph::SparseGraph;

/// Fused embeddings as an `n × D` matrix in corpus order.
pub fn feature_matrix(corpus: &Corpus) -> Array2<f32> {
    let d = corpus.fused_dim();
    let mut m = Array2::zeros((corpus.len(), d));
    for (mut row, post) in m.rows_mut().into_iter().zip(corpus.posts()) {
        row.assign(&ndarray::ArrayView1::from(&post.fused_embedding[..]));
    }
    m
}

/// Inverse label frequency, renormalized to mean 1 over the classes present.
/// Absent classes get weight 1; they never enter the loss.
pub fn balanced_class_weights(labeled: &[(usize, ClassIndex)]) -> [f64; NUM_CLASSES] {
    let mut counts = [0usize; NUM_CLASSES];
    for (_, c) in labeled {
        counts[c.0] += 1;
    }
    let mut weights = [1.0; NUM_CLASSES];
    let present: Vec<usize> = (0..NUM_CLASSES).filter(|&c| counts[c] > 0).collect();
    if present.is_empty() {
        return weights;
    }
    let total = labeled.len() as f64;
    for &c in &present {
        weights[c] = total / counts[c] as f64;
    }
    let mean = present.iter().map(|&c| weights[c]).sum::<f64>() / present.len() as f64;
    for &c in &present {
        weights[c] /= mean;
    }
    weights
}

fn targets<T: Scalar>(
    labeled: &[(usize, ClassIndex)],
    weights: &[f64; NUM_CLASSES],
) -> Vec<(usize, usize, T)> {
    labeled
        .iter()
        .map(|&(node, c)| (node, c.0, T::from_f64_lossy(weights[c.0])))
        .collect()
}

/// Class-weighted negative log likelihood over the labeled nodes.
pub fn weighted_loss<T: Scalar>(
    params: &ModelParams<T>,
    graph: &SparseGraph,
    features: &Array2<T>,
    labeled: &[(usize, ClassIndex)],
    weights: &[f64; NUM_CLASSES],
    mask_seed: Option<u64>,
) -> Result<f64, BgnnError> {
    check_shapes(params, graph, features)?;
    let mut tape = Tape::new();
    let x = tape.constant(features.clone());
    let (logp, _) = params.record(&mut tape, graph, x, mask_seed, false)?;
    let loss = tape.weighted_nll(logp, targets(labeled, weights));
    Ok(tape.value(loss)[[0, 0]].to_f64().unwrap())
}

/// Loss value and one gradient per parameter tensor (`ModelParams::tensors` order).
pub fn loss_and_gradients<T: Scalar>(
    params: &ModelParams<T>,
    graph: &SparseGraph,
    features: &Array2<T>,
    labeled: &[(usize, ClassIndex)],
    weights: &[f64; NUM_CLASSES],
    mask_seed: Option<u64>,
) -> Result<(f64, Vec<Array2<T>>), BgnnError> {
    check_shapes(params, graph, features)?;
    let mut tape = Tape::new();
    let x = tape.constant(features.clone());
    let (logp, vars) = params.record(&mut tape, graph, x, mask_seed, true)?;
    let loss = tape.weighted_nll(logp, targets(labeled, weights));
    let grads = tape.backward(loss);
    let shapes: Vec<(usize, usize)> = params.tensors().iter().map(|t| t.dim()).collect();
    let per_param = vars
        .0
        .iter()
        .zip(shapes)
        .map(|(&v, shape)| grads.get_or_zeros(v, shape))
        .collect();
    Ok((tape.value(loss)[[0, 0]].to_f64().unwrap(), per_param))
}

/// Adaptive moments with decoupled weight decay.
pub struct AdamW {
    lr: f64,
    weight_decay: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: i32,
    m: Vec<Array2<f32>>,
    v: Vec<Array2<f32>>,
}

impl AdamW {
    pub fn new(params: &ModelParams<f32>, lr: f64, weight_decay: f64) -> Self {
        let zeros: Vec<Array2<f32>> = params
            .tensors()
            .iter()
            .map(|t| Array2::zeros(t.raw_dim()))
            .collect();
        AdamW {
            lr,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn step(&mut self, params: &mut ModelParams<f32>, grads: &[Array2<f32>]) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step);
        let bc2 = 1.0 - self.beta2.powi(self.step);
        let (b1, b2) = (self.beta1 as f32, self.beta2 as f32);
        let decay = (1.0 - self.lr * self.weight_decay) as f32;
        let step_size = (self.lr / bc1) as f32;
        let bc2_sqrt = bc2.sqrt() as f32;
        let eps = self.eps as f32;
        for (((p, g), m), v) in params
            .tensors_mut()
            .into_iter()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            ndarray::Zip::from(p)
                .and(g)
                .and(m)
                .and(v)
                .for_each(|p, &g, m, v| {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    *p *= decay;
                    *p -= step_size * *m / (v.sqrt() / bc2_sqrt + eps);
                });
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams<f32>,
    /// Training loss (dropout active) before each update.
    pub loss_history: Vec<f64>,
    pub class_weights: [f64; NUM_CLASSES],
    /// Every labeled node carried the same class.
    pub single_class: bool,
}

/// Full-batch training from fresh parameters on labeled node indices.
pub fn train_nodes(
    features: &Array2<f32>,
    graph: &SparseGraph,
    config: &TrainConfig,
    labeled: &[(usize, ClassIndex)],
) -> Result<TrainOutcome, BgnnError> {
    config.validate()?;
    if labeled.is_empty() {
        return Err(BgnnError::EmptyLabeledSet);
    }
    if let Some(&(_, c)) = labeled.iter().find(|(_, c)| c.0 >= NUM_CLASSES) {
        return Err(BgnnError::InvalidClass(c.0));
    }
    if let Some(&(n, _)) = labeled.iter().find(|(n, _)| *n >= features.nrows()) {
        return Err(BgnnError::DimensionMismatch(format!(
            "labeled node {n} outside feature matrix"
        )));
    }
    let weights = match &config.class_weights {
        ClassWeights::Balanced => balanced_class_weights(labeled),
        ClassWeights::Fixed(w) => *w,
    };
    let single_class = labeled.iter().all(|(_, c)| *c == labeled[0].1);

    let mut params = ModelParams::<f32>::init(&config.model, features.ncols(), config.seed);
    check_shapes(&params, graph, features)?;
    let mut opt = AdamW::new(&params, config.learning_rate, config.weight_decay);
    let mut loss_history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let mask_seed = derive_seed(config.seed, epoch as u64);
        let (loss, grads) =
            loss_and_gradients(&params, graph, features, labeled, &weights, Some(mask_seed))?;
        loss_history.push(loss);
        opt.step(&mut params, &grads);
        if !params.all_finite() {
            return Err(BgnnError::NonFiniteParams(epoch));
        }
    }
    Ok(TrainOutcome {
        params,
        loss_history,
        class_weights: weights,
        single_class,
    })
}

/// Trains on a labeled set keyed by post id. Every id must be a train post.
pub fn train(
    corpus: &Corpus,
    graph: &SparseGraph,
    config: &TrainConfig,
    labeled_set: &BTreeMap<String, ClassIndex>,
) -> Result<TrainOutcome, BgnnError> {
    let mut labeled = Vec::with_capacity(labeled_set.len());
    for (id, &class) in labeled_set {
        let idx = corpus
            .index_of(id)
            .ok_or_else(|| BgnnError::UnknownId(id.clone()))?;
        if corpus.post(idx).split != Split::Train {
            return Err(BgnnError::NotTrainPost(id.clone()));
        }
        labeled.push((idx, class));
    }
    labeled.sort_unstable();
    train_nodes(&feature_matrix(corpus), graph, config, &labeled)
}

/// Largest relative error between analytic gradients and central finite
/// differences (step `1e-5`) over every parameter entry, dropout disabled.
/// The denominator is floored at `1e-5` so entries that are zero up to
/// rounding do not dominate.
pub fn gradient_check(
    params: &ModelParams<f64>,
    graph: &SparseGraph,
    features: &Array2<f64>,
    labeled: &[(usize, ClassIndex)],
) -> Result<f64, BgnnError> {
    const STEP: f64 = 1e-5;
    let weights = balanced_class_weights(labeled);
    let (_, analytic) = loss_and_gradients(params, graph, features, labeled, &weights, None)?;
    let mut probe = params.clone();
    let mut worst: f64 = 0.0;
    for (t, grad) in analytic.iter().enumerate() {
        for flat in 0..grad.len() {
            let (r, c) = (flat / grad.ncols(), flat % grad.ncols());
            let original = probe.tensors()[t][[r, c]];
            probe.tensors_mut()[t][[r, c]] = original + STEP;
            let plus = weighted_loss(&probe, graph, features, labeled, &weights, None)?;
            probe.tensors_mut()[t][[r, c]] = original - STEP;
            let minus = weighted_loss(&probe, graph, features, labeled, &weights, None)?;
            probe.tensors_mut()[t][[r, c]] = original;
            let numeric = (plus - minus) / (2.0 * STEP);
            let a = grad[[r, c]];
            let denom = a.abs().max(numeric.abs()).max(1e-5);
            worst = worst.max((a - numeric).abs() / denom);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bgnn::{forward, Architecture, ModelConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_config(arch: Architecture) -> ModelConfig {
        ModelConfig {
            hidden1: 6,
            hidden2: 5,
            dropout_p: 0.5,
            architecture: arch,
        }
    }

    fn ring_graph(n: usize) -> SparseGraph {
        SparseGraph::from_adjacency((0..n).map(|i| vec![(i + 1) % n, (i + 3) % n]).collect())
    }

    fn random_features(n: usize, d: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_simple_fn((n, d), || rng.random_range(-1.0..1.0))
    }

    #[test]
    fn gradient_check_small_instances() {
        for (seed, arch) in [(1, Architecture::Sage), (2, Architecture::Mlp), (3, Architecture::Sage)] {
            let n = 12;
            let graph = ring_graph(n);
            let x = random_features(n, 7, seed);
            let params = ModelParams::<f64>::init(&small_config(arch), 7, seed);
            let labeled = vec![
                (0, ClassIndex(0)),
                (3, ClassIndex(1)),
                (5, ClassIndex(2)),
                (8, ClassIndex(1)),
            ];
            let err = gradient_check(&params, &graph, &x, &labeled).unwrap();
            assert!(err < 1e-4, "max relative error {err}");
        }
    }

    #[test]
    fn empty_labeled_set_has_exactly_zero_gradients() {
        let graph = ring_graph(6);
        let x = random_features(6, 4, 5);
        let params = ModelParams::<f64>::init(&small_config(Architecture::Sage), 4, 5);
        let (loss, grads) =
            loss_and_gradients(&params, &graph, &x, &[], &[1.0; 3], None).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grads.iter().all(|g| g.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn head_bias_gradient_single_node_closed_form() {
        let graph = ring_graph(6);
        let x = random_features(6, 4, 9);
        let params = ModelParams::<f64>::init(&small_config(Architecture::Sage), 4, 9);
        let label = 2;
        let labeled = [(4, ClassIndex(label))];
        let weights = [0.7, 1.1, 1.3];
        let (_, grads) =
            loss_and_gradients(&params, &graph, &x, &labeled, &weights, None).unwrap();
        let logp = forward(&params, &graph, &x, false, 0).unwrap();
        // Weighted mean over one node: w/w scales the softmax residual by 1.
        let head_bias = grads.last().unwrap();
        for c in 0..3 {
            let expected = logp[[4, c]].exp() - if c == label { 1.0 } else { 0.0 };
            assert!((head_bias[[0, c]] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn weighting_is_linear_in_duplication() {
        let graph = ring_graph(10);
        let x = random_features(10, 4, 11);
        let params = ModelParams::<f64>::init(&small_config(Architecture::Sage), 4, 11);
        let base = vec![(0, ClassIndex(0)), (1, ClassIndex(1)), (2, ClassIndex(1))];
        let w = [1.2, 0.8, 1.0];
        let l1 = weighted_loss(&params, &graph, &x, &base, &w, None).unwrap();
        let mut dup = base.clone();
        dup.extend(base.iter().filter(|(_, c)| c.0 == 1).copied());
        let w2 = [1.2, 0.4, 1.0];
        let l2 = weighted_loss(&params, &graph, &x, &dup, &w2, None).unwrap();
        assert!((l1 - l2).abs() < 1e-9);
    }

    #[test]
    fn balanced_weights_mean_one() {
        let labeled = vec![
            (0, ClassIndex(0)),
            (1, ClassIndex(1)),
            (2, ClassIndex(1)),
            (3, ClassIndex(1)),
        ];
        let w = balanced_class_weights(&labeled);
        // counts 1,3 → raw 4, 4/3 → mean 8/3
        assert!((w[0] - 1.5).abs() < 1e-12);
        assert!((w[1] - 0.5).abs() < 1e-12);
        assert_eq!(w[2], 1.0);
    }

    fn blobs(n: usize, seed: u64) -> (Array2<f32>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Array2::zeros((n, 4));
        let mut class = Vec::new();
        for i in 0..n {
            let c = i % 2;
            let centre = if c == 0 { [3.0, 0.5, 0.0, 1.0] } else { [-3.0, 0.5, 1.0, 0.0] };
            for j in 0..4 {
                x[[i, j]] = centre[j] + rng.random_range(-0.5..0.5);
            }
            class.push(c);
        }
        (x, class)
    }

    fn blob_graph(x: &Array2<f32>) -> SparseGraph {
        let rows: Vec<Vec<f32>> = x.rows().into_iter().map(|r| r.to_vec()).collect();
        let refs: Vec<&[f32]> = rows.iter().map(|r| r.as_slice()).collect();
        crate::knn_graph::build_knn_graph_from_vectors(&refs, 4).unwrap()
    }

    fn quick_config() -> TrainConfig {
        TrainConfig {
            model: ModelConfig {
                hidden1: 16,
                hidden2: 16,
                dropout_p: 0.5,
                architecture: Architecture::Sage,
            },
            epochs: 60,
            learning_rate: 1e-2,
            seed: 4,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn separable_blobs_halve_the_loss() {
        let (x, class) = blobs(30, 1);
        let graph = blob_graph(&x);
        let labeled: Vec<(usize, ClassIndex)> =
            (0..6).map(|i| (i, ClassIndex(class[i]))).collect();
        let config = quick_config();
        let out = train_nodes(&x, &graph, &config, &labeled).unwrap();
        let w = out.class_weights;
        let init = ModelParams::<f32>::init(&config.model, 4, config.seed);
        let before = weighted_loss(&init, &graph, &x, &labeled, &w, None).unwrap();
        let after = weighted_loss(&out.params, &graph, &x, &labeled, &w, None).unwrap();
        assert!(after <= 0.5 * before, "{before} -> {after}");
        assert_eq!(out.loss_history.len(), config.epochs);
        assert!(out.params.all_finite());
        assert!(!out.single_class);
    }

    #[test]
    fn training_is_seed_deterministic() {
        let (x, class) = blobs(20, 2);
        let graph = blob_graph(&x);
        let labeled: Vec<(usize, ClassIndex)> =
            (0..4).map(|i| (i, ClassIndex(class[i]))).collect();
        let config = quick_config();
        let a = train_nodes(&x, &graph, &config, &labeled).unwrap();
        let b = train_nodes(&x, &graph, &config, &labeled).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.loss_history, b.loss_history);
    }

    #[test]
    fn one_class_labeled_set_is_flagged() {
        let (x, _) = blobs(10, 3);
        let graph = blob_graph(&x);
        let mut config = quick_config();
        config.epochs = 2;
        let out = train_nodes(&x, &graph, &config, &[(0, ClassIndex(1)), (2, ClassIndex(1))]).unwrap();
        assert!(out.single_class);
        assert!(matches!(
            train_nodes(&x, &graph, &config, &[]),
            Err(BgnnError::EmptyLabeledSet)
        ));
        assert!(matches!(
            train_nodes(&x, &graph, &config, &[(0, ClassIndex(5))]),
            Err(BgnnError::InvalidClass(5))
        ));
    }
}
