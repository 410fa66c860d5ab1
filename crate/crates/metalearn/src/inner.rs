//! The within-task adaptation step, in two forms: a graph-level builder
//! whose output stays differentiable (used during meta-training, where the
//! outer gradient must flow through the update), and a plain numeric
//! version for evaluation-time adaptation.

use diffcore::{gradient, Graph, NodeId, ParamSet, Tensor};
use netmodels::{MaskSource, NodeMap};

use crate::config::InnerLoopConfig;
use crate::error::{MetaError, Result};
use crate::task::{TaskBatch, TaskModel};

/// Result of building the adaptation chain into a graph.
pub struct InnerBuild {
    /// Weight map after the final step; entries are update-expression nodes.
    pub adapted: NodeMap,
    /// Support loss at the pre-update weights (the adaptation signal).
    pub support_loss: NodeId,
}

/// Extends the graph with `steps` sequential updates
/// `w <- w - alpha_w * d(support loss)/dw`, one loss rebuild per step,
/// reusing the same step-size nodes throughout. With `second_order` false
/// the inner gradients pass through a detach, so the outer gradient sees
/// them as constants while the explicit `-alpha * g` term keeps the
/// step sizes trainable.
pub fn build_inner_update(
    g: &mut Graph,
    model: &dyn TaskModel,
    weights: &NodeMap,
    alpha: &NodeMap,
    support: &TaskBatch,
    steps: usize,
    second_order: bool,
    mut dropout: MaskSource<'_>,
) -> Result<InnerBuild> {
    if steps == 0 {
        return Err(MetaError::Config("inner loop needs at least one step".into()));
    }
    let names: Vec<String> = weights.iter().map(|(n, _)| n.to_string()).collect();
    let mut current = weights.clone();
    let mut first_loss = None;
    for _ in 0..steps {
        let masks: MaskSource<'_> =
            dropout.as_mut().map(|f| &mut **f as &mut dyn FnMut(&[usize]) -> Tensor);
        let loss = model.loss(g, &current, support, masks)?;
        first_loss.get_or_insert(loss);

        let wrt: Vec<NodeId> = names
            .iter()
            .map(|n| current.get(n))
            .collect::<std::result::Result<_, _>>()?;
        let grads = g.grad(loss, &wrt)?;

        let mut next = NodeMap::new();
        for (name, (&w, &grad)) in names.iter().zip(wrt.iter().zip(&grads)) {
            let grad = if second_order { grad } else { g.detach(grad)? };
            let a = alpha.get(&format!("alpha/{name}"))?;
            let scaled = g.mul(a, grad)?;
            next.insert(name, g.sub(w, scaled)?);
        }
        current = next;
    }
    Ok(InnerBuild {
        adapted: current,
        support_loss: first_loss.expect("at least one step"),
    })
}

/// Numeric adaptation for evaluation: `steps` plain gradient steps on the
/// support loss, no dropout, returning the adapted weights. The step-size
/// set must hold one `alpha/{name}` entry per weight.
pub fn inner_update(
    model: &dyn TaskModel,
    params: &ParamSet,
    alpha: &ParamSet,
    support: &TaskBatch,
    config: &InnerLoopConfig,
) -> Result<ParamSet> {
    config.validate()?;
    model.check_scope(config.scope)?;
    let names: Vec<&str> = params.names().collect();
    for name in &names {
        let a = alpha
            .get(&format!("alpha/{name}"))
            .ok_or_else(|| MetaError::Config(format!("no step size for weight `{name}`")))?;
        if a.shape() != params.get(name).expect("own name").shape() {
            return Err(MetaError::Config(format!("step-size shape mismatch for `{name}`")));
        }
    }

    let mut current = params.clone();
    for _ in 0..config.steps {
        let mut g = Graph::new();
        let weights = NodeMap::params(&mut g, &current)?;
        let loss = model.loss(&mut g, &weights, support, None)?;
        let grads = gradient(&g, loss, &current, &names)?;
        for name in &names {
            let a = alpha.get(&format!("alpha/{name}")).expect("checked above");
            let gv = grads.get(name).expect("gradient names mirror weights");
            let p = current.get_mut(name).expect("own name");
            for ((pv, av), gvv) in p.data_mut().iter_mut().zip(a.data()).zip(gv.data()) {
                *pv -= av * gvv;
            }
        }
    }
    Ok(current)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::InnerScope;
    use crate::task::QuadraticToy;
    use diffcore::Tensor;

    fn toy_alpha(value: f64) -> ParamSet {
        let mut a = ParamSet::new();
        a.insert("alpha/theta", Tensor::scalar(value)).unwrap();
        a
    }

    #[test]
    fn zero_step_size_is_the_identity() {
        let params = QuadraticToy::params(1.5);
        let out = inner_update(
            &QuadraticToy,
            &params,
            &toy_alpha(0.0),
            &QuadraticToy::batch(0.0),
            &InnerLoopConfig::default(),
        )
        .unwrap();
        assert_eq!(out.get("theta").unwrap().item(), 1.5);
    }

    #[test]
    fn quadratic_step_matches_hand_arithmetic() {
        // Loss theta^2 at theta=1 with step 0.1: theta' = 1 - 0.1*2 = 0.8.
        let params = QuadraticToy::params(1.0);
        let out = inner_update(
            &QuadraticToy,
            &params,
            &toy_alpha(0.1),
            &QuadraticToy::batch(0.0),
            &InnerLoopConfig::default(),
        )
        .unwrap();
        assert!((out.get("theta").unwrap().item() - 0.8).abs() < 1e-15);
    }

    #[test]
    fn extra_steps_reuse_the_same_step_size() {
        // Two steps on theta^2: theta <- 0.8 theta each time.
        let params = QuadraticToy::params(1.0);
        let cfg = InnerLoopConfig { steps: 2, ..InnerLoopConfig::default() };
        let out = inner_update(
            &QuadraticToy,
            &params,
            &toy_alpha(0.1),
            &QuadraticToy::batch(0.0),
            &cfg,
        )
        .unwrap();
        assert!((out.get("theta").unwrap().item() - 0.64).abs() < 1e-15);
    }

    #[test]
    fn scope_mismatch_is_a_structured_error() {
        let params = QuadraticToy::params(1.0);
        let cfg = InnerLoopConfig { scope: InnerScope::AbpOnly, ..InnerLoopConfig::default() };
        let err = inner_update(
            &QuadraticToy,
            &params,
            &toy_alpha(0.1),
            &QuadraticToy::batch(0.0),
            &cfg,
        )
        .unwrap_err();
        assert!(matches!(err, MetaError::Scope(_)));
    }
}
