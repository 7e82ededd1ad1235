//! Central finite-difference gradient checking.

use super::graph::{Graph, NodeId};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Compares the autodiff gradient of a scalar function against central
/// differences, coordinate by coordinate.
///
/// `f` receives a fresh graph and the leaf holding the input, and returns the
/// scalar output node. The result is
/// `max_i |analytic_i − cd_i| / max(|analytic_i|, |cd_i|, 1e-8)`.
pub fn finite_difference_check<'a, F>(f: F, input: &Tensor, epsilon: f64) -> Result<f64>
where
    F: Fn(&mut Graph<'a>, NodeId) -> Result<NodeId>,
{
    if !(epsilon > 0.0) {
        return Err(Error::Contract(format!("epsilon must be positive, got {epsilon}")));
    }
    let analytic = {
        let mut graph = Graph::new();
        let x = graph.input(input.clone(), true);
        let out = f(&mut graph, x)?;
        let mut grads = graph.backward(out)?;
        grads.take(x).unwrap_or_else(|| Tensor::zeros(input.shape()))
    };

    let eval = |point: Tensor| -> Result<f64> {
        let mut graph = Graph::new();
        let x = graph.input(point, false);
        let out = f(&mut graph, x)?;
        Ok(graph.value(out).data()[0])
    };

    let mut worst: f64 = 0.0;
    let mut probe = input.clone();
    for i in 0..input.numel() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + epsilon;
        let up = eval(probe.clone())?;
        probe.data_mut()[i] = orig - epsilon;
        let down = eval(probe.clone())?;
        probe.data_mut()[i] = orig;

        let numeric = (up - down) / (2.0 * epsilon);
        let a = analytic.data()[i];
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max(err);
    }
    Ok(worst)
}
