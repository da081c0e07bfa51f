use crate::autodiff::{Graph, NodeId};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};

use super::gru::birnn_nodes;
use super::params::{ParamSet, Parameters};
use super::{ModelConfig, Task};

/// Graph handles of every intermediate of one forward pass. Entries of
/// modules skipped by the variant are `None`.
#[derive(Clone, Debug)]
pub struct ForwardNodes {
    pub inputs: Vec<NodeId>,
    pub q: Option<Vec<NodeId>>,
    pub s: Option<NodeId>,
    pub beta: Option<NodeId>,
    pub theta: Option<NodeId>,
    pub h: Option<Vec<NodeId>>,
    pub alpha: Option<Vec<NodeId>>,
    pub xi: Vec<NodeId>,
    pub c: NodeId,
    pub logit: NodeId,
    pub y_hat: NodeId,
}

/// Every intermediate quantity of one forward pass. Quantities of a module
/// removed by the variant are recorded as zeros.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardTrace<T> {
    pub q: Vec<Tensor<T>>,
    pub s: Tensor<T>,
    pub beta: Tensor<T>,
    pub theta: Tensor<T>,
    pub h: Vec<Tensor<T>>,
    pub alpha: Vec<Tensor<T>>,
    pub xi: Vec<Tensor<T>>,
    pub c: Tensor<T>,
    /// `⟨w, c⟩ + b`
    pub logit: T,
    pub y_hat: T,
}

/// `(β, θ) = (W_β s + b_β, W_θ s + b_θ)`.
pub fn film_generator<T: Scalar>(
    s: &Tensor<T>,
    w_beta: &Tensor<T>,
    b_beta: &Tensor<T>,
    w_theta: &Tensor<T>,
    b_theta: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    Ok((
        w_beta.matvec(s)?.add(b_beta)?,
        w_theta.matvec(s)?.add(b_theta)?,
    ))
}

/// `α_t = tanh(W_α h_t + b_α)`.
pub fn attention<T: Scalar>(
    h: &Tensor<T>,
    w_alpha: &Tensor<T>,
    b_alpha: &Tensor<T>,
) -> Result<Tensor<T>> {
    Ok(w_alpha
        .matvec(h)?
        .add(b_alpha)?
        .activate(crate::tensor::Activation::Tanh))
}

fn check_input<T: Scalar>(x: &Tensor<T>, config: &ModelConfig) -> Result<()> {
    let want = Shape::Matrix(config.windows, config.features);
    if x.shape() != want {
        return Err(Error::Dimension {
            op: "forward",
            left: x.shape(),
            right: want,
        });
    }
    Ok(())
}

/// Builds the forward pass for one `T×D` sample on `g`.
pub fn build_forward<T: Scalar>(
    g: &mut Graph<T>,
    p: &ParamSet<NodeId>,
    x: &Tensor<T>,
    config: &ModelConfig,
) -> Result<ForwardNodes> {
    check_input(x, config)?;
    let inputs: Vec<NodeId> = (0..config.windows)
        .map(|t| g.constant(Tensor::vector(x.row(t).to_vec())))
        .collect();

    let (mut q, mut s, mut beta, mut theta) = (None, None, None, None);
    if config.variant.uses_invariant() {
        let qs = birnn_nodes(g, &inputs, &p.invariant_rnn, config.film_dim, None)?;
        let pooled = g.mean_pool(&qs)?;
        let wb = g.matvec(p.w_beta, pooled)?;
        let b = g.add(wb, p.b_beta)?;
        let wt = g.matvec(p.w_theta, pooled)?;
        let th = g.add(wt, p.b_theta)?;
        q = Some(qs);
        s = Some(pooled);
        beta = Some(b);
        theta = Some(th);
    }

    let (mut h, mut alpha) = (None, None);
    if config.variant.uses_variant() {
        let film = beta.zip(theta);
        let hs = birnn_nodes(g, &inputs, &p.variant_rnn, config.rnn_dim, film)?;
        let mut alphas = Vec::with_capacity(hs.len());
        for &ht in &hs {
            let a = g.matvec(p.w_alpha, ht)?;
            let a = g.add(a, p.b_alpha)?;
            alphas.push(g.tanh(a));
        }
        h = Some(hs);
        alpha = Some(alphas);
    }

    let xi: Vec<NodeId> = match (beta, &alpha) {
        (Some(b), Some(al)) => al.iter().map(|&a| g.add(b, a)).collect::<Result<_>>()?,
        (Some(b), None) => vec![b; config.windows],
        (None, Some(al)) => al.clone(),
        (None, None) => unreachable!("every variant keeps at least one module"),
    };

    let mut c = g.hadamard(xi[0], inputs[0])?;
    for t in 1..config.windows {
        let term = g.hadamard(xi[t], inputs[t])?;
        c = g.add(c, term)?;
    }
    let wc = g.dot(p.w_out, c)?;
    let logit = g.add(wc, p.b_out)?;
    let y_hat = match config.task {
        Task::Classification => g.sigmoid(logit),
        Task::Regression => logit,
    };
    Ok(ForwardNodes {
        inputs,
        q,
        s,
        beta,
        theta,
        h,
        alpha,
        xi,
        c,
        logit,
        y_hat,
    })
}

/// Adds the task loss on top of a forward pass: weighted cross-entropy for
/// classification, squared error for regression.
pub fn build_loss<T: Scalar>(
    g: &mut Graph<T>,
    nodes: &ForwardNodes,
    target: T,
    task: Task,
    pos_weight: T,
) -> Result<NodeId> {
    match task {
        Task::Classification => g.binary_cross_entropy(nodes.y_hat, target, pos_weight),
        Task::Regression => g.squared_error(nodes.y_hat, target),
    }
}

fn register<T: Scalar>(
    g: &mut Graph<T>,
    params: &Parameters<T>,
    trainable: bool,
) -> ParamSet<NodeId> {
    params.as_ref().map(|t| {
        if trainable {
            g.param(t.clone())
        } else {
            g.constant(t.clone())
        }
    })
}

impl<T: Scalar> ForwardTrace<T> {
    fn collect(g: &Graph<T>, n: &ForwardNodes, config: &ModelConfig) -> Self {
        let val = |id: NodeId| g.value(id).clone();
        let zeros = |len: usize| Tensor::zeros(Shape::Vector(len));
        let tt = config.windows;
        let d = config.features;
        ForwardTrace {
            q: n.q
                .as_ref()
                .map(|v| v.iter().map(|&i| val(i)).collect())
                .unwrap_or_else(|| vec![zeros(2 * config.film_dim); tt]),
            s: n.s.map(val).unwrap_or_else(|| zeros(2 * config.film_dim)),
            beta: n.beta.map(val).unwrap_or_else(|| zeros(d)),
            theta: n.theta.map(val).unwrap_or_else(|| zeros(d)),
            h: n.h
                .as_ref()
                .map(|v| v.iter().map(|&i| val(i)).collect())
                .unwrap_or_else(|| vec![zeros(2 * config.rnn_dim); tt]),
            alpha: n
                .alpha
                .as_ref()
                .map(|v| v.iter().map(|&i| val(i)).collect())
                .unwrap_or_else(|| vec![zeros(d); tt]),
            xi: n.xi.iter().map(|&i| val(i)).collect(),
            c: val(n.c),
            logit: g.value(n.logit).item(),
            y_hat: g.value(n.y_hat).item(),
        }
    }
}

/// Full forward pass over one sample, retaining every intermediate.
pub fn forward<T: Scalar>(
    x: &Tensor<T>,
    params: &Parameters<T>,
    config: &ModelConfig,
) -> Result<ForwardTrace<T>> {
    let mut g = Graph::with_capacity(512);
    let ids = register(&mut g, params, false);
    let nodes = build_forward(&mut g, &ids, x, config)?;
    Ok(ForwardTrace::collect(&g, &nodes, config))
}

/// Model output `ŷ` for one sample.
pub fn predict<T: Scalar>(
    x: &Tensor<T>,
    params: &Parameters<T>,
    config: &ModelConfig,
) -> Result<T> {
    let mut g = Graph::with_capacity(512);
    let ids = register(&mut g, params, false);
    let nodes = build_forward(&mut g, &ids, x, config)?;
    Ok(g.value(nodes.y_hat).item())
}

/// Loss, prediction and parameter gradients for one labelled sample.
#[derive(Clone, Debug)]
pub struct SampleGradient<T> {
    pub loss: T,
    pub y_hat: T,
    pub grads: Parameters<T>,
}

pub fn sample_gradient<T: Scalar>(
    x: &Tensor<T>,
    target: T,
    params: &Parameters<T>,
    config: &ModelConfig,
    pos_weight: T,
) -> Result<SampleGradient<T>> {
    let mut g = Graph::with_capacity(1024);
    let ids = register(&mut g, params, true);
    let nodes = build_forward(&mut g, &ids, x, config)?;
    let loss = build_loss(&mut g, &nodes, target, config.task, pos_weight)?;
    let mut grads = g.backward(loss)?;
    let grad_set = ids.map(|id| {
        grads
            .take(id)
            .unwrap_or_else(|| Tensor::zeros(g.value(id).shape()))
    });
    Ok(SampleGradient {
        loss: g.value(loss).item(),
        y_hat: g.value(nodes.y_hat).item(),
        grads: grad_set,
    })
}
