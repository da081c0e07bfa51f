//! Central finite-difference verification of analytic gradients.

use crate::autodiff::{Graph, NodeId};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Relative errors are computed against
/// `max(|analytic|, |numeric|, FLOOR·max(1, |loss|))`.
///
/// A central difference at `ε = 1e-5` carries rounding noise of roughly
/// `ulp(loss)/ε ≈ 1e-11·|loss|`; the floor keeps coordinates whose true
/// gradient is at that noise level from reporting noise as error.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-5;

/// Worst coordinate found by [`finite_diff_report`].
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// (parameter index, flat coordinate) of the worst error.
    pub worst: Option<(usize, usize)>,
    pub analytic: f64,
    pub numeric: f64,
    pub coordinates: usize,
}

fn evaluate<T, F>(f: &F, params: &[Tensor<T>]) -> Result<(Graph<T>, Vec<NodeId>, NodeId)>
where
    T: Scalar,
    F: Fn(&mut Graph<T>, &[NodeId]) -> Result<NodeId>,
{
    let mut g = Graph::new();
    let ids: Vec<NodeId> = params.iter().map(|p| g.param(p.clone())).collect();
    let loss = f(&mut g, &ids)?;
    Ok((g, ids, loss))
}

/// Compares the tape's gradient of `f` against `(f(p+ε) − f(p−ε)) / 2ε` for
/// every coordinate of every parameter and returns the worst relative error.
///
/// `f` builds a scalar loss on the supplied graph from the parameter leaves.
pub fn finite_diff_check<T, F>(f: F, params: &[Tensor<T>], epsilon: f64) -> Result<f64>
where
    T: Scalar,
    F: Fn(&mut Graph<T>, &[NodeId]) -> Result<NodeId>,
{
    finite_diff_report(f, params, epsilon).map(|r| r.max_rel_error)
}

pub fn finite_diff_report<T, F>(f: F, params: &[Tensor<T>], epsilon: f64) -> Result<GradCheckReport>
where
    T: Scalar,
    F: Fn(&mut Graph<T>, &[NodeId]) -> Result<NodeId>,
{
    if !(epsilon > 0.0) {
        return Err(Error::Contract(format!(
            "epsilon must be > 0, got {epsilon}"
        )));
    }
    let (g, ids, loss) = evaluate(&f, params)?;
    let base = g.value(loss).item();
    let (g2, _, loss2) = evaluate(&f, params)?;
    let again = g2.value(loss2).item();
    if base.as_f64().to_bits() != again.as_f64().to_bits() {
        return Err(Error::NonDeterministic {
            first: base.as_f64(),
            second: again.as_f64(),
        });
    }
    let grads = g.backward(loss)?;
    let floor = RELATIVE_ERROR_FLOOR * base.as_f64().abs().max(1.0);

    let eps = T::lit(epsilon);
    let two_eps = T::lit(2.0 * epsilon);
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        analytic: 0.0,
        numeric: 0.0,
        coordinates: 0,
    };
    let mut work: Vec<Tensor<T>> = params.to_vec();
    for (pi, id) in ids.iter().enumerate() {
        let analytic = grads.wrt_in(&g, *id);
        for k in 0..params[pi].len() {
            let orig = params[pi].data()[k];
            work[pi].data_mut()[k] = orig + eps;
            let (gp, _, lp) = evaluate(&f, &work)?;
            work[pi].data_mut()[k] = orig - eps;
            let (gm, _, lm) = evaluate(&f, &work)?;
            work[pi].data_mut()[k] = orig;
            let numeric = ((gp.value(lp).item() - gm.value(lm).item()) / two_eps).as_f64();
            let a = analytic.data()[k].as_f64();
            let denom = a.abs().max(numeric.abs()).max(floor);
            let rel = (a - numeric).abs() / denom;
            report.coordinates += 1;
            if rel > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = rel;
                report.worst = Some((pi, k));
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}
