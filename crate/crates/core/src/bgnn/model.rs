use ndarray::{Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tape::{Scalar, Tape, Var};
use super::BgnnError;
use crate::corpus::NUM_CLASSES;
use crate::knn_graph::SparseGraph;

/// Whether hidden layers read the graph neighborhood or only the node itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    /// Two GraphSAGE layers with mean aggregation.
    Sage,
    /// Same widths, self path only.
    Mlp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub hidden1: usize,
    pub hidden2: usize,
    pub dropout_p: f64,
    pub architecture: Architecture,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden1: 1024,
            hidden2: 2048,
            dropout_p: 0.5,
            architecture: Architecture::Sage,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SageLayer<T> {
    pub w_self: Array2<T>,
    pub w_neigh: Option<Array2<T>>,
    pub bias: Array2<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T> {
    pub weight: Array2<T>,
    pub bias: Array2<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub sage1: SageLayer<T>,
    pub sage2: SageLayer<T>,
    pub head: Linear<T>,
    pub dropout_p: f64,
    pub seed: u64,
}

/// `U(−1/√fan_in, 1/√fan_in)`
fn uniform<T: Scalar>(rng: &mut ChaCha8Rng, rows: usize, cols: usize, fan_in: usize) -> Array2<T> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || {
        T::from_f64_lossy(rng.random_range(-bound..bound))
    })
}

impl<T: Scalar> SageLayer<T> {
    fn init(rng: &mut ChaCha8Rng, input: usize, output: usize, graph: bool) -> Self {
        let fan_in = if graph { 2 * input } else { input };
        SageLayer {
            w_self: uniform(rng, input, output, fan_in),
            w_neigh: graph.then(|| uniform(rng, input, output, fan_in)),
            bias: uniform(rng, 1, output, fan_in),
        }
    }
}

impl<T: Scalar> ModelParams<T> {
    /// Fresh parameters for `input_dim` features, seeded.
    pub fn init(config: &ModelConfig, input_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let graph = config.architecture == Architecture::Sage;
        ModelParams {
            sage1: SageLayer::init(&mut rng, input_dim, config.hidden1, graph),
            sage2: SageLayer::init(&mut rng, config.hidden1, config.hidden2, graph),
            head: Linear {
                weight: uniform(&mut rng, config.hidden2, NUM_CLASSES, config.hidden2),
                bias: uniform(&mut rng, 1, NUM_CLASSES, config.hidden2),
            },
            dropout_p: config.dropout_p,
            seed,
        }
    }

    pub fn architecture(&self) -> Architecture {
        if self.sage1.w_neigh.is_some() {
            Architecture::Sage
        } else {
            Architecture::Mlp
        }
    }

    pub fn input_dim(&self) -> usize {
        self.sage1.w_self.nrows()
    }

    /// All parameter tensors in a fixed order.
    pub fn tensors(&self) -> Vec<&Array2<T>> {
        let mut out = Vec::with_capacity(8);
        for layer in [&self.sage1, &self.sage2] {
            out.push(&layer.w_self);
            if let Some(w) = &layer.w_neigh {
                out.push(w);
            }
            out.push(&layer.bias);
        }
        out.push(&self.head.weight);
        out.push(&self.head.bias);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Array2<T>> {
        let mut out = Vec::with_capacity(8);
        for layer in [&mut self.sage1, &mut self.sage2] {
            out.push(&mut layer.w_self);
            if let Some(w) = &mut layer.w_neigh {
                out.push(w);
            }
            out.push(&mut layer.bias);
        }
        out.push(&mut self.head.weight);
        out.push(&mut self.head.bias);
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.iter().all(|v| v.is_finite()))
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        let c = |a: &Array2<T>| a.mapv(|v| U::from_f64_lossy(v.to_f64().unwrap()));
        let layer = |l: &SageLayer<T>| SageLayer {
            w_self: c(&l.w_self),
            w_neigh: l.w_neigh.as_ref().map(c),
            bias: c(&l.bias),
        };
        ModelParams {
            sage1: layer(&self.sage1),
            sage2: layer(&self.sage2),
            head: Linear {
                weight: c(&self.head.weight),
                bias: c(&self.head.bias),
            },
            dropout_p: self.dropout_p,
            seed: self.seed,
        }
    }
}

/// Tape handles for every parameter, in `ModelParams::tensors` order.
pub(crate) struct ParamVars(pub Vec<Var>);

fn dropout_mask<T: Scalar>(rng: &mut ChaCha8Rng, shape: (usize, usize), p: f64) -> Array2<T> {
    let keep = T::from_f64_lossy(1.0 / (1.0 - p));
    Array2::from_shape_simple_fn(shape, || {
        if rng.random::<f64>() < p {
            T::zero()
        } else {
            keep
        }
    })
}

fn check_finite<T: Scalar>(tape: &Tape<'_, T>, v: Var, layer: &'static str) -> Result<(), BgnnError> {
    if tape.value(v).iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(BgnnError::NonFiniteActivation(layer))
    }
}

impl<T: Scalar> ModelParams<T> {
    fn sage_layer<'g>(
        tape: &mut Tape<'g, T>,
        graph: &'g SparseGraph,
        input: Var,
        vars: &[Var],
    ) -> Var {
        let (w_self, w_neigh, bias) = match vars {
            [s, n, b] => (*s, Some(*n), *b),
            [s, b] => (*s, None, *b),
            _ => unreachable!("layer has two or three tensors"),
        };
        let own = tape.matmul(input, w_self);
        let pre = match w_neigh {
            Some(wn) => {
                let agg = tape.mean_aggregate(input, graph);
                let nb = tape.matmul(agg, wn);
                tape.add(own, nb)
            }
            None => own,
        };
        let pre = tape.add_bias(pre, bias);
        tape.relu(pre)
    }

    /// Records the forward pass on `tape` and returns the per-node log-probabilities.
    /// `mask_seed` of `None` disables dropout.
    pub(crate) fn record<'g>(
        &self,
        tape: &mut Tape<'g, T>,
        graph: &'g SparseGraph,
        features: Var,
        mask_seed: Option<u64>,
        trainable: bool,
    ) -> Result<(Var, ParamVars), BgnnError> {
        let vars: Vec<Var> = self
            .tensors()
            .into_iter()
            .map(|t| {
                if trainable {
                    tape.param(t.clone())
                } else {
                    tape.constant(t.clone())
                }
            })
            .collect();
        let per_layer = if self.sage1.w_neigh.is_some() { 3 } else { 2 };
        let n = tape.value(features).nrows();
        let mut rng = mask_seed
            .filter(|_| self.dropout_p > 0.0)
            .map(ChaCha8Rng::seed_from_u64);

        let h1 = Self::sage_layer(tape, graph, features, &vars[..per_layer]);
        check_finite(tape, h1, "sage1")?;
        let h1 = match rng.as_mut() {
            Some(r) => {
                let m = dropout_mask(r, (n, self.sage1.w_self.ncols()), self.dropout_p);
                tape.mask(h1, m)
            }
            None => h1,
        };
        let h2 = Self::sage_layer(tape, graph, h1, &vars[per_layer..2 * per_layer]);
        check_finite(tape, h2, "sage2")?;
        let h2 = match rng.as_mut() {
            Some(r) => {
                let m = dropout_mask(r, (n, self.sage2.w_self.ncols()), self.dropout_p);
                tape.mask(h2, m)
            }
            None => h2,
        };
        let logits = tape.matmul(h2, vars[2 * per_layer]);
        let logits = tape.add_bias(logits, vars[2 * per_layer + 1]);
        check_finite(tape, logits, "head")?;
        let out = tape.log_softmax(logits);
        Ok((out, ParamVars(vars)))
    }
}

/// Per-node log-probabilities (`n × 3`).
pub fn forward<T: Scalar>(
    params: &ModelParams<T>,
    graph: &SparseGraph,
    features: &Array2<T>,
    dropout_active: bool,
    mask_seed: u64,
) -> Result<Array2<T>, BgnnError> {
    check_shapes(params, graph, features)?;
    let mut tape = Tape::new();
    let x = tape.constant(features.clone());
    let (out, _) = params.record(
        &mut tape,
        graph,
        x,
        dropout_active.then_some(mask_seed),
        false,
    )?;
    Ok(tape.value(out).clone())
}

pub(crate) fn check_shapes<T: Scalar>(
    params: &ModelParams<T>,
    graph: &SparseGraph,
    features: &Array2<T>,
) -> Result<(), BgnnError> {
    if features.nrows() != graph.node_count() {
        return Err(BgnnError::DimensionMismatch(format!(
            "feature rows {} != graph nodes {}",
            features.nrows(),
            graph.node_count()
        )));
    }
    if features.ncols() != params.input_dim() {
        return Err(BgnnError::DimensionMismatch(format!(
            "feature dim {} != model input dim {}",
            features.ncols(),
            params.input_dim()
        )));
    }
    Ok(())
}

pub(crate) fn row_argmax(row: ndarray::ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn mean_rows(m: &Array2<f64>) -> ndarray::Array1<f64> {
    m.mean_axis(Axis(0)).expect("non-empty")
}
