//! Finite-difference gradients, used as an independent oracle for the
//! symbolic differentiation path.

use crate::error::{DiffError, Result};
use crate::graph::{Graph, NodeId};
use crate::paramset::ParamSet;

/// Central-difference gradient of a scalar root with respect to named
/// parameters: (f(x + h) - f(x - h)) / 2h per element.
///
/// The output is congruent to the symbolic [`crate::gradient`] over the same
/// names, so the two can be compared entry by entry.
pub fn finite_difference_gradient(
    graph: &Graph,
    root: NodeId,
    bindings: &ParamSet,
    wrt: &[&str],
    step: f64,
) -> Result<ParamSet> {
    if !(step > 0.0) || !step.is_finite() {
        return Err(DiffError::BadStep(step));
    }
    if !graph.shape(root).is_empty() {
        return Err(DiffError::NonScalarRoot(graph.shape(root).to_vec()));
    }

    let mut out = ParamSet::new();
    let mut work = bindings.clone();
    for name in wrt {
        bindings.require(name)?;
        let n = bindings.get(name).expect("checked above").len();
        let mut grad = Vec::with_capacity(n);
        for i in 0..n {
            let original = bindings.get(name).expect("checked above").data()[i];
            work.get_mut(name).expect("same names").data_mut()[i] = original + step;
            let up = graph.eval(root, &work)?.item();
            work.get_mut(name).expect("same names").data_mut()[i] = original - step;
            let down = graph.eval(root, &work)?.item();
            work.get_mut(name).expect("same names").data_mut()[i] = original;
            grad.push((up - down) / (2.0 * step));
        }
        let shape = bindings.get(name).expect("checked above").shape().to_vec();
        out.insert(
            *name,
            crate::tensor::Tensor::new(&shape, grad).map_err(|_| DiffError::NonFinite {
                node: root.index(),
                op: "finite_difference",
            })?,
        )?;
    }
    Ok(out)
}

/// Largest relative error between two congruent sets, with a floor that
/// keeps near-zero entries from blowing up the ratio:
/// max over elements of |a - b| / max(|a|, |b|, floor).
pub fn max_relative_error(a: &ParamSet, b: &ParamSet, floor: f64) -> Result<f64> {
    a.ensure_congruent(b)?;
    let mut worst = 0.0f64;
    for ((_, ta), (_, tb)) in a.iter().zip(b.iter()) {
        for (&va, &vb) in ta.data().iter().zip(tb.data().iter()) {
            let denom = va.abs().max(vb.abs()).max(floor);
            worst = worst.max((va - vb).abs() / denom);
        }
    }
    Ok(worst)
}
