//! GRU and FiLM-modulated GRU cells and their bidirectional unrolling.
//!
//! The FiLM-GRU modulates the raw input feature-wise before the gate
//! projections: `x' = β ⊙ x_t + θ`, then
//!
//! ```text
//! z_t = σ(W_z x' + U_z h_{t-1})
//! r_t = σ(W_r x' + U_r h_{t-1})
//! h̃_t = tanh(W_h x' + r_t ⊙ (U_h h_{t-1}))
//! h_t = (1 - z_t) ⊙ h̃_t + z_t ⊙ h_{t-1}
//! ```
//!
//! With no modulation this is the standard GRU. Gates carry no bias terms.

use crate::autodiff::{Graph, NodeId};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};

use super::params::{BiGru, GateSet};

pub type BiGruNodes = BiGru<NodeId>;

/// One recurrence step on the graph. `film` is an optional `(β, θ)` pair.
pub fn gru_step<T: Scalar>(
    g: &mut Graph<T>,
    x: NodeId,
    h_prev: NodeId,
    gates: &GateSet<NodeId>,
    film: Option<(NodeId, NodeId)>,
) -> Result<NodeId> {
    let x_in = match film {
        Some((beta, theta)) => {
            let scaled = g.hadamard(beta, x)?;
            g.add(scaled, theta)?
        }
        None => x,
    };
    let wz = g.matvec(gates.w_z, x_in)?;
    let uz = g.matvec(gates.u_z, h_prev)?;
    let z_pre = g.add(wz, uz)?;
    let z = g.sigmoid(z_pre);

    let wr = g.matvec(gates.w_r, x_in)?;
    let ur = g.matvec(gates.u_r, h_prev)?;
    let r_pre = g.add(wr, ur)?;
    let r = g.sigmoid(r_pre);

    let wh = g.matvec(gates.w_h, x_in)?;
    let uh = g.matvec(gates.u_h, h_prev)?;
    let gated = g.hadamard(r, uh)?;
    let cand_pre = g.add(wh, gated)?;
    let cand = g.tanh(cand_pre);

    let keep = g.one_minus(z);
    let fresh = g.hadamard(keep, cand)?;
    let carried = g.hadamard(z, h_prev)?;
    g.add(fresh, carried)
}

/// Runs both directions over `xs` and returns `[forward_t; backward_t]` per
/// window. Initial states are zero.
pub(crate) fn birnn_nodes<T: Scalar>(
    g: &mut Graph<T>,
    xs: &[NodeId],
    rnn: &BiGruNodes,
    hidden: usize,
    film: Option<(NodeId, NodeId)>,
) -> Result<Vec<NodeId>> {
    if xs.is_empty() {
        return Err(Error::Contract("recurrent pass over zero windows".into()));
    }
    let zero = g.constant(Tensor::zeros(Shape::Vector(hidden)));
    let mut fwd = Vec::with_capacity(xs.len());
    let mut h = zero;
    for &x in xs {
        h = gru_step(g, x, h, &rnn.forward, film)?;
        fwd.push(h);
    }
    let mut bwd = vec![zero; xs.len()];
    let mut h = zero;
    for (t, &x) in xs.iter().enumerate().rev() {
        h = gru_step(g, x, h, &rnn.backward, film)?;
        bwd[t] = h;
    }
    fwd.into_iter()
        .zip(bwd)
        .map(|(f, b)| g.concat(f, b))
        .collect()
}

fn gate_constants<T: Scalar>(g: &mut Graph<T>, gates: &GateSet<Tensor<T>>) -> GateSet<NodeId> {
    gates.as_ref().map(|t| g.constant(t.clone()))
}

fn bigru_constants<T: Scalar>(g: &mut Graph<T>, rnn: &BiGru<Tensor<T>>) -> BiGruNodes {
    BiGru {
        forward: gate_constants(g, &rnn.forward),
        backward: gate_constants(g, &rnn.backward),
    }
}

fn hidden_of<T: Scalar>(gates: &GateSet<Tensor<T>>) -> usize {
    gates.u_z.rows()
}

fn window_rows<T: Scalar>(g: &mut Graph<T>, x: &Tensor<T>) -> Result<Vec<NodeId>> {
    match x.shape() {
        Shape::Matrix(rows, _) => Ok((0..rows)
            .map(|t| g.constant(Tensor::vector(x.row(t).to_vec())))
            .collect()),
        other => Err(Error::Dimension {
            op: "birnn_forward",
            left: other,
            right: Shape::Matrix(0, 0),
        }),
    }
}

/// Standard GRU step on plain tensors.
pub fn gru_cell<T: Scalar>(
    x: &Tensor<T>,
    h_prev: &Tensor<T>,
    gates: &GateSet<Tensor<T>>,
) -> Result<Tensor<T>> {
    let mut g = Graph::new();
    let ids = gate_constants(&mut g, gates);
    let xn = g.constant(x.clone());
    let hn = g.constant(h_prev.clone());
    let out = gru_step(&mut g, xn, hn, &ids, None)?;
    Ok(g.value(out).clone())
}

/// FiLM-modulated GRU step on plain tensors.
pub fn film_gru_cell<T: Scalar>(
    x: &Tensor<T>,
    h_prev: &Tensor<T>,
    beta: &Tensor<T>,
    theta: &Tensor<T>,
    gates: &GateSet<Tensor<T>>,
) -> Result<Tensor<T>> {
    let mut g = Graph::new();
    let ids = gate_constants(&mut g, gates);
    let xn = g.constant(x.clone());
    let hn = g.constant(h_prev.clone());
    let b = g.constant(beta.clone());
    let th = g.constant(theta.clone());
    let out = gru_step(&mut g, xn, hn, &ids, Some((b, th)))?;
    Ok(g.value(out).clone())
}

/// `β ⊙ x + θ`.
pub fn film<T: Scalar>(x: &Tensor<T>, beta: &Tensor<T>, theta: &Tensor<T>) -> Result<Tensor<T>> {
    beta.hadamard(x)?.add(theta)
}

/// Bidirectional GRU over the rows of a `T×D` matrix.
pub fn birnn_forward<T: Scalar>(x: &Tensor<T>, rnn: &BiGru<Tensor<T>>) -> Result<Vec<Tensor<T>>> {
    let mut g = Graph::new();
    let ids = bigru_constants(&mut g, rnn);
    let xs = window_rows(&mut g, x)?;
    let out = birnn_nodes(&mut g, &xs, &ids, hidden_of(&rnn.forward), None)?;
    Ok(out.into_iter().map(|n| g.value(n).clone()).collect())
}

/// Bidirectional FiLM-GRU over the rows of a `T×D` matrix.
pub fn film_birnn_forward<T: Scalar>(
    x: &Tensor<T>,
    beta: &Tensor<T>,
    theta: &Tensor<T>,
    rnn: &BiGru<Tensor<T>>,
) -> Result<Vec<Tensor<T>>> {
    let mut g = Graph::new();
    let ids = bigru_constants(&mut g, rnn);
    let xs = window_rows(&mut g, x)?;
    let b = g.constant(beta.clone());
    let th = g.constant(theta.clone());
    let out = birnn_nodes(&mut g, &xs, &ids, hidden_of(&rnn.forward), Some((b, th)))?;
    Ok(out.into_iter().map(|n| g.value(n).clone()).collect())
}
