//! Reverse-mode differentiation over dense 2-D tensors.
//!
//! The tape records each operation with its output value. `backward` walks the
//! records in reverse and accumulates the adjoint of every node that requires a
//! gradient.

use std::fmt::{Debug, Display};

use ndarray::{Array2, Axis, LinalgScalar, ScalarOperand, Zip};
use num_traits::{Float, FromPrimitive};

use crate::knn_graph::SparseGraph;

/// Element type the kernel runs in: `f32` for training, `f64` for checks.
pub trait Scalar:
    LinalgScalar
    + Float
    + FromPrimitive
    + ScalarOperand
    + Send
    + Sync
    + Debug
    + Display
    + Default
    + std::ops::AddAssign
    + std::ops::SubAssign
    + std::ops::MulAssign
    + 'static
{
    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).expect("finite conversion")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op<'g, T> {
    Leaf,
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Relu(Var),
    Mask(Var, Array2<T>),
    MeanAggregate(Var, &'g SparseGraph),
    LogSoftmax(Var),
    WeightedNll {
        input: Var,
        targets: Vec<(usize, usize, T)>,
        total_weight: T,
    },
}

struct Node<'g, T> {
    value: Array2<T>,
    op: Op<'g, T>,
    requires_grad: bool,
}

pub struct Tape<'g, T> {
    nodes: Vec<Node<'g, T>>,
}

impl<T: Scalar> Default for Tape<'_, T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'g, T: Scalar> Tape<'g, T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    fn push(&mut self, value: Array2<T>, op: Op<'g, T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// A trainable input.
    pub fn param(&mut self, value: Array2<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// An input that never receives a gradient.
    pub fn constant(&mut self, value: Array2<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Array2<T> {
        &self.nodes[v.0].value
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).dot(self.value(b));
        let rg = self.needs(&[a, b]);
        self.push(value, Op::MatMul(a, b), rg)
    }

    /// `(n × m) + (1 × m)` broadcast over rows.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Var {
        let value = self.value(a) + self.value(bias);
        let rg = self.needs(&[a, bias]);
        self.push(value, Op::AddBias(a, bias), rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) + self.value(b);
        let rg = self.needs(&[a, b]);
        self.push(value, Op::Add(a, b), rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(|x| if x > T::zero() { x } else { T::zero() });
        let rg = self.needs(&[a]);
        self.push(value, Op::Relu(a), rg)
    }

    /// Elementwise multiply by a fixed mask (inverted dropout).
    pub fn mask(&mut self, a: Var, mask: Array2<T>) -> Var {
        let value = self.value(a) * &mask;
        let rg = self.needs(&[a]);
        self.push(value, Op::Mask(a, mask), rg)
    }

    /// Row `v` of the output is the mean of the rows of `a` indexed by the
    /// symmetric neighborhood of `v`; zero when the neighborhood is empty.
    pub fn mean_aggregate(&mut self, a: Var, graph: &'g SparseGraph) -> Var {
        let input = self.value(a);
        let mut value = Array2::zeros(input.raw_dim());
        for (v, mut row) in value.axis_iter_mut(Axis(0)).enumerate() {
            let nbrs = graph.symmetric_neighbors(v);
            if nbrs.is_empty() {
                continue;
            }
            for &u in nbrs {
                row += &input.row(u);
            }
            let scale = T::one() / T::from_usize(nbrs.len()).unwrap();
            row.mapv_inplace(|x| x * scale);
        }
        let rg = self.needs(&[a]);
        self.push(value, Op::MeanAggregate(a, graph), rg)
    }

    pub fn log_softmax(&mut self, a: Var) -> Var {
        let mut value = self.value(a).clone();
        for mut row in value.axis_iter_mut(Axis(0)) {
            let max = row.fold(T::neg_infinity(), |m, &x| m.max(x));
            let lse = row.fold(T::zero(), |s, &x| s + (x - max).exp()).ln() + max;
            row.mapv_inplace(|x| x - lse);
        }
        let rg = self.needs(&[a]);
        self.push(value, Op::LogSoftmax(a), rg)
    }

    /// `−Σ w_i · logp[row_i, class_i] / Σ w_i` as a `1 × 1` tensor; zero when
    /// there are no targets.
    pub fn weighted_nll(&mut self, logp: Var, targets: Vec<(usize, usize, T)>) -> Var {
        let input = self.value(logp);
        let total_weight = targets.iter().fold(T::zero(), |s, t| s + t.2);
        let loss = if total_weight > T::zero() {
            let sum = targets
                .iter()
                .fold(T::zero(), |s, &(r, c, w)| s - w * input[[r, c]]);
            sum / total_weight
        } else {
            T::zero()
        };
        let rg = self.needs(&[logp]);
        self.push(
            Array2::from_elem((1, 1), loss),
            Op::WeightedNll {
                input: logp,
                targets,
                total_weight,
            },
            rg,
        )
    }

    /// Gradients of the scalar `root` with respect to every node; `None` for
    /// nodes that do not require one.
    pub fn backward(&self, root: Var) -> Gradients<T> {
        let mut grads: Vec<Option<Array2<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        let root_shape = self.nodes[root.0].value.raw_dim();
        grads[root.0] = Some(Array2::from_elem(root_shape, T::one()));

        for idx in (0..=root.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            match &node.op {
                Op::Leaf => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    if self.nodes[a.0].requires_grad {
                        let ga = g.dot(&self.value(*b).t());
                        accumulate(&mut grads, *a, ga);
                    }
                    if self.nodes[b.0].requires_grad {
                        let gb = self.value(*a).t().dot(&g);
                        accumulate(&mut grads, *b, gb);
                    }
                }
                Op::AddBias(a, bias) => {
                    if self.nodes[bias.0].requires_grad {
                        let gb = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                        accumulate(&mut grads, *bias, gb);
                    }
                    if self.nodes[a.0].requires_grad {
                        accumulate(&mut grads, *a, g);
                    }
                }
                Op::Add(a, b) => {
                    if self.nodes[b.0].requires_grad {
                        accumulate(&mut grads, *b, g.clone());
                    }
                    if self.nodes[a.0].requires_grad {
                        accumulate(&mut grads, *a, g);
                    }
                }
                Op::Relu(a) => {
                    let mut ga = g;
                    Zip::from(&mut ga).and(&node.value).for_each(|gv, &out| {
                        if out <= T::zero() {
                            *gv = T::zero();
                        }
                    });
                    accumulate(&mut grads, *a, ga);
                }
                Op::Mask(a, mask) => {
                    accumulate(&mut grads, *a, g * mask);
                }
                Op::MeanAggregate(a, graph) => {
                    let mut ga = Array2::zeros(g.raw_dim());
                    for v in 0..g.nrows() {
                        let nbrs = graph.symmetric_neighbors(v);
                        if nbrs.is_empty() {
                            continue;
                        }
                        let scale = T::one() / T::from_usize(nbrs.len()).unwrap();
                        let contrib = g.row(v).mapv(|x| x * scale);
                        for &u in nbrs {
                            let mut row = ga.row_mut(u);
                            row += &contrib;
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::LogSoftmax(a) => {
                    let mut ga = g;
                    for (mut grow, orow) in ga.axis_iter_mut(Axis(0)).zip(node.value.axis_iter(Axis(0))) {
                        let total = grow.sum();
                        Zip::from(&mut grow)
                            .and(&orow)
                            .for_each(|gv, &lp| *gv = *gv - lp.exp() * total);
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::WeightedNll {
                    input,
                    targets,
                    total_weight,
                } => {
                    let mut gi = Array2::zeros(self.value(*input).raw_dim());
                    if *total_weight > T::zero() {
                        let upstream = g[[0, 0]];
                        for &(r, c, w) in targets {
                            gi[[r, c]] = gi[[r, c]] - upstream * w / *total_weight;
                        }
                    }
                    accumulate(&mut grads, *input, gi);
                }
            }
        }
        Gradients { grads }
    }
}

fn accumulate<T: Scalar>(grads: &mut [Option<Array2<T>>], v: Var, g: Array2<T>) {
    match &mut grads[v.0] {
        Some(existing) => *existing += &g,
        slot @ None => *slot = Some(g),
    }
}

pub struct Gradients<T> {
    grads: Vec<Option<Array2<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Array2<T>> {
        self.grads[v.0].as_ref()
    }

    /// Gradient of `v`, or zeros of `shape` when nothing flowed into it.
    pub fn get_or_zeros(&self, v: Var, shape: (usize, usize)) -> Array2<T> {
        self.get(v).cloned().unwrap_or_else(|| Array2::zeros(shape))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn numeric<F: Fn(&Array2<f64>) -> f64>(f: F, x: &Array2<f64>) -> Array2<f64> {
        let h = 1e-6;
        let mut g = Array2::zeros(x.raw_dim());
        for idx in 0..x.len() {
            let (r, c) = (idx / x.ncols(), idx % x.ncols());
            let mut xp = x.clone();
            xp[[r, c]] += h;
            let mut xm = x.clone();
            xm[[r, c]] -= h;
            g[[r, c]] = (f(&xp) - f(&xm)) / (2.0 * h);
        }
        g
    }

    #[test]
    fn log_softmax_rows_normalize() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(array![[1.0, 2.0, 3.0], [-50.0, 0.0, 50.0]]);
        let y = tape.log_softmax(x);
        for row in tape.value(y).rows() {
            let lse: f64 = row.iter().map(|v| v.exp()).sum::<f64>().ln();
            assert!(lse.abs() < 1e-12);
        }
    }

    #[test]
    fn chain_matches_finite_differences() {
        let graph = SparseGraph::from_adjacency(vec![vec![1], vec![2], vec![0]]);
        let w0 = array![[0.3, -0.2, 0.5], [0.1, 0.7, -0.4]];
        let x0 = array![[1.0, 2.0], [0.5, -1.0], [-0.3, 0.8]];
        let loss_of = |w: &Array2<f64>| {
            let mut tape = Tape::new();
            let x = tape.constant(x0.clone());
            let wv = tape.param(w.clone());
            let agg = tape.mean_aggregate(x, &graph);
            let h = tape.matmul(agg, wv);
            let h = tape.relu(h);
            let lp = tape.log_softmax(h);
            let l = tape.weighted_nll(lp, vec![(0, 1, 1.0), (2, 0, 0.5)]);
            tape.value(l)[[0, 0]]
        };
        let mut tape = Tape::new();
        let x = tape.constant(x0.clone());
        let wv = tape.param(w0.clone());
        let agg = tape.mean_aggregate(x, &graph);
        let h = tape.matmul(agg, wv);
        let h = tape.relu(h);
        let lp = tape.log_softmax(h);
        let l = tape.weighted_nll(lp, vec![(0, 1, 1.0), (2, 0, 0.5)]);
        let grads = tape.backward(l);
        let analytic = grads.get(wv).unwrap();
        let fd = numeric(loss_of, &w0);
        for (a, n) in analytic.iter().zip(fd.iter()) {
            assert!((a - n).abs() < 1e-7, "{a} vs {n}");
        }
        assert!(grads.get(x).is_none());
    }

    #[test]
    fn empty_targets_give_zero_loss_and_gradient() {
        let mut tape = Tape::<f64>::new();
        let w = tape.param(array![[1.0, 2.0]]);
        let lp = tape.log_softmax(w);
        let l = tape.weighted_nll(lp, vec![]);
        assert_eq!(tape.value(l)[[0, 0]], 0.0);
        let g = tape.backward(l);
        assert!(g.get(w).unwrap().iter().all(|&v| v == 0.0));
    }
}
