//! Tape-based reverse-mode automatic differentiation over [`Tensor`] values.
//!
//! A [`Graph`] records every operation as a node whose parents always have a
//! smaller index, so the tape order is a topological order and the backward
//! sweep is a single reverse pass. Each call to [`Graph::backward`] starts from
//! freshly zeroed accumulators; calling it twice yields identical gradients.
//!
//! ```
//! use titv_core::autodiff::Graph;
//! use titv_core::tensor::Tensor;
//!
//! let mut g = Graph::new();
//! let x = g.param(Tensor::scalar(3.0));
//! let y = g.hadamard(x, x).unwrap();
//! let grads = g.backward(y).unwrap();
//! assert_eq!(grads.wrt(x).item(), 6.0);
//! ```

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Activation, Shape, Tensor};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op<T> {
    Leaf,
    MatVec(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Hadamard(NodeId, NodeId),
    /// `mul * x + add`
    Affine(NodeId, T, T),
    Activate(NodeId, Activation),
    MeanPool(Vec<NodeId>),
    Concat(NodeId, NodeId),
    Dot(NodeId, NodeId),
    BinaryCrossEntropy {
        prob: NodeId,
        label: T,
        pos_weight: T,
    },
    SquaredError {
        pred: NodeId,
        target: T,
    },
}

#[derive(Clone, Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

#[derive(Clone, Debug, Default)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

/// Smallest probability margin used before taking logarithms.
pub fn probability_clamp<T: Scalar>() -> T {
    T::lit(1e-12).max(T::epsilon())
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn with_capacity(n: usize) -> Self {
        Graph {
            nodes: Vec::with_capacity(n),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn needs(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].requires_grad)
    }

    /// Differentiable leaf.
    pub fn param(&mut self, value: Tensor<T>) -> NodeId {
        self.push(value, Op::Leaf, true)
    }

    /// Non-differentiable leaf.
    pub fn constant(&mut self, value: Tensor<T>) -> NodeId {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id.0].value
    }

    pub fn matvec(&mut self, w: NodeId, x: NodeId) -> Result<NodeId> {
        let v = self.value(w).matvec(self.value(x))?;
        let rg = self.needs(&[w, x]);
        Ok(self.push(v, Op::MatVec(w, x), rg))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).add(self.value(b))?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(v, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).sub(self.value(b))?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(v, Op::Sub(a, b), rg))
    }

    pub fn hadamard(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).hadamard(self.value(b))?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(v, Op::Hadamard(a, b), rg))
    }

    /// `mul * a + add`, element-wise.
    pub fn affine(&mut self, a: NodeId, mul: T, add: T) -> NodeId {
        let v = self.value(a).map(|x| mul * x + add);
        let rg = self.needs(&[a]);
        self.push(v, Op::Affine(a, mul, add), rg)
    }

    pub fn scale(&mut self, a: NodeId, k: T) -> NodeId {
        self.affine(a, k, T::zero())
    }

    /// `1 - a`, element-wise.
    pub fn one_minus(&mut self, a: NodeId) -> NodeId {
        self.affine(a, -T::one(), T::one())
    }

    pub fn activate(&mut self, a: NodeId, kind: Activation) -> NodeId {
        if kind == Activation::Identity {
            return a;
        }
        let v = self.value(a).activate(kind);
        let rg = self.needs(&[a]);
        self.push(v, Op::Activate(a, kind), rg)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        self.activate(a, Activation::Sigmoid)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        self.activate(a, Activation::Tanh)
    }

    pub fn mean_pool(&mut self, xs: &[NodeId]) -> Result<NodeId> {
        let vals: Vec<Tensor<T>> = xs.iter().map(|&x| self.value(x).clone()).collect();
        let v = Tensor::mean_pool(&vals)?;
        let rg = self.needs(xs);
        Ok(self.push(v, Op::MeanPool(xs.to_vec()), rg))
    }

    pub fn concat(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).concat(self.value(b))?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(v, Op::Concat(a, b), rg))
    }

    /// Inner product, producing a scalar node.
    pub fn dot(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).dot(self.value(b))?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(Tensor::scalar(v), Op::Dot(a, b), rg))
    }

    /// Weighted binary cross-entropy of a probability node against a 0/1
    /// label. The probability is clamped away from 0 and 1 before the log.
    pub fn binary_cross_entropy(
        &mut self,
        prob: NodeId,
        label: T,
        pos_weight: T,
    ) -> Result<NodeId> {
        if label != T::zero() && label != T::one() {
            return Err(Error::Contract(format!(
                "cross-entropy label must be 0 or 1, got {label}"
            )));
        }
        let p = self.scalar_of(prob, "binary_cross_entropy")?;
        let loss = bce_value(p, label, pos_weight);
        let rg = self.needs(&[prob]);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::BinaryCrossEntropy {
                prob,
                label,
                pos_weight,
            },
            rg,
        ))
    }

    pub fn squared_error(&mut self, pred: NodeId, target: T) -> Result<NodeId> {
        let p = self.scalar_of(pred, "squared_error")?;
        let rg = self.needs(&[pred]);
        let d = p - target;
        Ok(self.push(Tensor::scalar(d * d), Op::SquaredError { pred, target }, rg))
    }

    fn scalar_of(&self, id: NodeId, op: &'static str) -> Result<T> {
        let v = self.value(id);
        if v.len() != 1 {
            return Err(Error::Dimension {
                op,
                left: v.shape(),
                right: Shape::Scalar,
            });
        }
        Ok(v.item())
    }

    /// Propagates d(loss)/d(node) from a scalar root to every node that
    /// requires a gradient.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients<T>> {
        if self.value(loss).len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar root, got shape {}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::filled(self.value(loss).shape(), T::one()));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            let g_data = g.data();
            match &node.op {
                Op::Leaf => unreachable!(),
                Op::MatVec(w, x) => {
                    let wv = self.value(*w);
                    let xv = self.value(*x);
                    let cols = wv.cols();
                    if self.nodes[w.0].requires_grad {
                        let acc = slot(&mut grads, *w, wv.shape());
                        let d = acc.data_mut();
                        for (r, &gr) in g_data.iter().enumerate() {
                            if gr == T::zero() {
                                continue;
                            }
                            let row = &mut d[r * cols..(r + 1) * cols];
                            for (a, &xc) in row.iter_mut().zip(xv.data()) {
                                *a += gr * xc;
                            }
                        }
                    }
                    if self.nodes[x.0].requires_grad {
                        let acc = slot(&mut grads, *x, xv.shape());
                        let d = acc.data_mut();
                        let wd = wv.data();
                        for (r, &gr) in g_data.iter().enumerate() {
                            let row = &wd[r * cols..(r + 1) * cols];
                            for (a, &wrc) in d.iter_mut().zip(row) {
                                *a += gr * wrc;
                            }
                        }
                    }
                }
                Op::Add(a, b) => {
                    self.acc_if(&mut grads, *a, |d| add_into(d, g_data));
                    self.acc_if(&mut grads, *b, |d| add_into(d, g_data));
                }
                Op::Sub(a, b) => {
                    self.acc_if(&mut grads, *a, |d| add_into(d, g_data));
                    self.acc_if(&mut grads, *b, |d| {
                        for (x, &gv) in d.iter_mut().zip(g_data) {
                            *x -= gv;
                        }
                    });
                }
                Op::Hadamard(a, b) => {
                    let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                    self.acc_if(&mut grads, *a, |d| {
                        for ((x, &gv), &o) in d.iter_mut().zip(g_data).zip(bv) {
                            *x += gv * o;
                        }
                    });
                    self.acc_if(&mut grads, *b, |d| {
                        for ((x, &gv), &o) in d.iter_mut().zip(g_data).zip(av) {
                            *x += gv * o;
                        }
                    });
                }
                Op::Affine(a, mul, _) => {
                    let mul = *mul;
                    self.acc_if(&mut grads, *a, |d| {
                        for (x, &gv) in d.iter_mut().zip(g_data) {
                            *x += mul * gv;
                        }
                    });
                }
                Op::Activate(a, kind) => {
                    let y = node.value.data();
                    self.acc_if(&mut grads, *a, |d| {
                        for ((x, &gv), &yv) in d.iter_mut().zip(g_data).zip(y) {
                            *x += gv * kind.derivative_from_output(yv);
                        }
                    });
                }
                Op::MeanPool(xs) => {
                    let inv = T::one() / T::from_usize(xs.len()).unwrap();
                    for &x in xs {
                        self.acc_if(&mut grads, x, |d| {
                            for (v, &gv) in d.iter_mut().zip(g_data) {
                                *v += gv * inv;
                            }
                        });
                    }
                }
                Op::Concat(a, b) => {
                    let n = self.value(*a).len();
                    self.acc_if(&mut grads, *a, |d| add_into(d, &g_data[..n]));
                    self.acc_if(&mut grads, *b, |d| add_into(d, &g_data[n..]));
                }
                Op::Dot(a, b) => {
                    let gv = g_data[0];
                    let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                    self.acc_if(&mut grads, *a, |d| {
                        for (x, &o) in d.iter_mut().zip(bv) {
                            *x += gv * o;
                        }
                    });
                    self.acc_if(&mut grads, *b, |d| {
                        for (x, &o) in d.iter_mut().zip(av) {
                            *x += gv * o;
                        }
                    });
                }
                Op::BinaryCrossEntropy {
                    prob,
                    label,
                    pos_weight,
                } => {
                    let p = self.value(*prob).item();
                    let dp = bce_derivative(p, *label, *pos_weight) * g_data[0];
                    self.acc_if(&mut grads, *prob, |d| d[0] += dp);
                }
                Op::SquaredError { pred, target } => {
                    let p = self.value(*pred).item();
                    let dp = T::lit(2.0) * (p - *target) * g_data[0];
                    self.acc_if(&mut grads, *pred, |d| d[0] += dp);
                }
            }
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn acc_if(&self, grads: &mut [Option<Tensor<T>>], id: NodeId, f: impl FnOnce(&mut [T])) {
        if self.nodes[id.0].requires_grad {
            f(slot(grads, id, self.nodes[id.0].value.shape()).data_mut());
        }
    }
}

fn slot<T: Scalar>(grads: &mut [Option<Tensor<T>>], id: NodeId, shape: Shape) -> &mut Tensor<T> {
    grads[id.0].get_or_insert_with(|| Tensor::zeros(shape))
}

fn add_into<T: Scalar>(dst: &mut [T], src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

pub(crate) fn bce_value<T: Scalar>(p: T, label: T, pos_weight: T) -> T {
    let eps = probability_clamp::<T>();
    let pc = p.max(eps).min(T::one() - eps);
    -(pos_weight * label * pc.ln()) - (T::one() - label) * (T::one() - pc).ln()
}

fn bce_derivative<T: Scalar>(p: T, label: T, pos_weight: T) -> T {
    let eps = probability_clamp::<T>();
    if p < eps || p > T::one() - eps {
        return T::zero();
    }
    -(pos_weight * label / p) + (T::one() - label) / (T::one() - p)
}

/// Result of one backward sweep.
#[derive(Clone, Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient for `id`, or `None` if the loss does not depend on it.
    pub fn get(&self, id: NodeId) -> Option<&Tensor<T>> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    /// Gradient for a node of the given graph, zeros when unreachable.
    pub fn wrt_in(&self, graph: &Graph<T>, id: NodeId) -> Tensor<T> {
        self.get(id)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(graph.value(id).shape()))
    }

    /// Gradient for `id`. Panics when the node was not reached; use
    /// [`Gradients::wrt_in`] when that can happen.
    pub fn wrt(&self, id: NodeId) -> &Tensor<T> {
        self.get(id).expect("node not reached by backward pass")
    }

    pub fn take(&mut self, id: NodeId) -> Option<Tensor<T>> {
        self.grads.get_mut(id.0).and_then(Option::take)
    }
}
