//! The outer optimization loop: build one graph per meta-batch that chains
//! every task's adaptation and query loss into a single scalar objective,
//! differentiate it once with respect to the initialization (and, when
//! trainable, the step sizes), and descend.
//!
//! Building the whole two-level objective into one graph is what makes the
//! gradient honest: the reverse pass runs through the adaptation update
//! itself, so curvature terms appear automatically, and switching them off
//! is a single detach in the update expression rather than a different
//! algorithm.

use diffcore::{Graph, NodeId, ParamSet, Tensor};
use episodes::{derive_rng, STREAM_DROPOUT};
use netmodels::{MaskSource, NodeMap};
use rand::Rng;

use crate::config::{InnerLoopConfig, MetaConfig};
use crate::error::{MetaError, Result};
use crate::inner::build_inner_update;
use crate::task::{accuracy, TaskModel, TaskPair};

/// Adds `l1 * sum|w| + l2 * sum w^2` over every weight whose name ends in
/// `.w` (matrices and filters; biases, normalization parameters, and step
/// sizes are exempt). With both coefficients zero the loss node is
/// returned unchanged.
pub fn apply_regularization(
    g: &mut Graph,
    loss: NodeId,
    weights: &NodeMap,
    l1: f64,
    l2: f64,
) -> Result<NodeId> {
    if l1 == 0.0 && l2 == 0.0 {
        return Ok(loss);
    }
    let mut total = loss;
    for (name, w) in weights.iter() {
        if !name.ends_with(".w") {
            continue;
        }
        if l1 != 0.0 {
            let a = g.abs(w)?;
            let s = g.reduce_sum(a)?;
            let scaled = g.scalar_mul(s, l1)?;
            total = g.add(total, scaled)?;
        }
        if l2 != 0.0 {
            let sq = g.mul(w, w)?;
            let s = g.reduce_sum(sq)?;
            let scaled = g.scalar_mul(s, l2)?;
            total = g.add(total, scaled)?;
        }
    }
    Ok(total)
}

/// Everything the optimizer mutates across iterations.
#[derive(Debug, Clone)]
pub struct TrainState {
    /// The shared initialization the outer loop optimizes.
    pub params: ParamSet,
    /// Per-weight step sizes, one `alpha/{name}` entry per weight.
    pub alpha: ParamSet,
    /// Completed outer iterations.
    pub iteration: u64,
    /// Root seed; every stochastic choice derives from it and the
    /// iteration counter, which is what makes resumption exact.
    pub seed: u64,
}

impl TrainState {
    /// Fresh state with uniformly initialized step sizes.
    pub fn new(params: ParamSet, inner: &InnerLoopConfig, seed: u64) -> TrainState {
        let alpha = netmodels::init_alpha(&params, inner.alpha_init);
        TrainState { params, alpha, iteration: 0, seed }
    }
}

/// What one outer step measured and applied.
#[derive(Debug, Clone)]
pub struct StepMetrics {
    /// Iteration index this step executed as (pre-increment).
    pub iteration: u64,
    /// Learning rate that was applied.
    pub beta: f64,
    /// Regularized mean query loss — the quantity differentiated.
    pub meta_loss: f64,
    /// Mean pre-adaptation support loss across the batch.
    pub support_loss_mean: f64,
    /// Mean query accuracy across tasks that expose logits.
    pub query_accuracy_mean: f64,
    /// The exact gradients applied, keyed like the state they update.
    pub grads: ParamSet,
}

fn mask_factory(rng: rand_chacha::ChaCha8Rng, rate: f64) -> impl FnMut(&[usize]) -> Tensor {
    let mut rng = rng;
    move |shape: &[usize]| {
        let keep = 1.0 / (1.0 - rate);
        Tensor::from_fn(shape, |_| if rng.random::<f64>() < rate { 0.0 } else { keep })
            .expect("mask shapes come from graph nodes")
    }
}

/// One outer update over a batch of tasks. The batch length must equal
/// `meta.meta_batch`; task order is the reduction order, fixed by the
/// caller.
pub fn meta_step(
    state: &mut TrainState,
    model: &dyn TaskModel,
    tasks: &[TaskPair],
    inner: &InnerLoopConfig,
    meta: &MetaConfig,
) -> Result<StepMetrics> {
    inner.validate()?;
    meta.validate()?;
    model.check_scope(inner.scope)?;
    if tasks.len() != meta.meta_batch {
        return Err(MetaError::Config(format!(
            "expected {} tasks per step, got {}",
            meta.meta_batch,
            tasks.len()
        )));
    }
    let it = state.iteration;
    let run = |state: &mut TrainState| -> Result<StepMetrics> {
        let mut g = Graph::new();
        let weights = NodeMap::params(&mut g, &state.params)?;
        let alpha_nodes = if inner.alpha_trainable {
            NodeMap::params(&mut g, &state.alpha)?
        } else {
            NodeMap::constants(&mut g, &state.alpha)?
        };

        let mut support_losses = Vec::with_capacity(tasks.len());
        let mut logit_nodes: Vec<Option<NodeId>> = Vec::with_capacity(tasks.len());
        let mut query_sum: Option<NodeId> = None;
        for (slot, task) in tasks.iter().enumerate() {
            let stream_index = it * meta.meta_batch as u64 + slot as u64;
            let rng = derive_rng(state.seed, STREAM_DROPOUT, stream_index);
            let mut factory = mask_factory(rng, meta.dropout);
            let dropout_on = meta.dropout > 0.0;

            let mut support_masks: MaskSource<'_> = if dropout_on && inner.dropout_in_inner {
                Some(&mut factory)
            } else {
                None
            };
            let built = build_inner_update(
                &mut g,
                model,
                &weights,
                &alpha_nodes,
                &task.support,
                inner.steps,
                meta.second_order,
                support_masks.take(),
            )?;
            support_losses.push(built.support_loss);

            let query_masks: MaskSource<'_> =
                if dropout_on { Some(&mut factory) } else { None };
            let q = model.loss(&mut g, &built.adapted, &task.query, query_masks)?;
            query_sum = Some(match query_sum {
                Some(acc) => g.add(acc, q)?,
                None => q,
            });
            logit_nodes.push(model.logits(&mut g, &built.adapted, &task.query)?);
        }
        let mean_query =
            g.scalar_mul(query_sum.expect("meta_batch >= 1"), 1.0 / tasks.len() as f64)?;
        let meta_loss = apply_regularization(&mut g, mean_query, &weights, meta.l1, meta.l2)?;

        let mut wrt_names: Vec<String> = state.params.names().map(str::to_string).collect();
        if inner.alpha_trainable {
            wrt_names.extend(state.alpha.names().map(str::to_string));
        }
        let wrt_nodes: Vec<NodeId> = wrt_names
            .iter()
            .map(|n| {
                if let Ok(id) = weights.get(n) {
                    Ok(id)
                } else {
                    alpha_nodes.get(n)
                }
            })
            .collect::<std::result::Result<_, _>>()?;
        let grad_nodes = g.grad(meta_loss, &wrt_nodes)?;

        let mut roots = vec![meta_loss];
        roots.extend_from_slice(&support_losses);
        roots.extend(logit_nodes.iter().flatten().copied());
        roots.extend_from_slice(&grad_nodes);

        let bindings = if inner.alpha_trainable {
            state.params.merged(&state.alpha)?
        } else {
            state.params.clone()
        };
        let values = g.eval_many(&roots, &bindings)?;

        let meta_loss_value = values[0].item();
        let support_loss_mean = values[1..1 + tasks.len()]
            .iter()
            .map(Tensor::item)
            .sum::<f64>()
            / tasks.len() as f64;

        let logit_count = logit_nodes.iter().flatten().count();
        let logit_values = &values[1 + tasks.len()..1 + tasks.len() + logit_count];
        let mut acc_sum = 0.0;
        let mut cursor = 0usize;
        for (task, node) in tasks.iter().zip(&logit_nodes) {
            if node.is_some() {
                acc_sum += accuracy(&logit_values[cursor], &task.query.labels);
                cursor += 1;
            }
        }
        let query_accuracy_mean = if logit_count > 0 { acc_sum / logit_count as f64 } else { 0.0 };

        let grad_values = &values[1 + tasks.len() + logit_count..];
        let mut grads = ParamSet::new();
        for (name, value) in wrt_names.iter().zip(grad_values) {
            grads.insert(name.clone(), value.clone())?;
        }

        let beta = meta.beta_at(it);
        let theta_grads = grads.filtered(|n| !n.starts_with("alpha/"));
        state.params.descend(&theta_grads, beta)?;
        if inner.alpha_trainable {
            let alpha_grads = grads.filtered(|n| n.starts_with("alpha/"));
            state.alpha.descend(&alpha_grads, beta)?;
        }
        state.iteration += 1;

        Ok(StepMetrics {
            iteration: it,
            beta,
            meta_loss: meta_loss_value,
            support_loss_mean,
            query_accuracy_mean,
            grads,
        })
    };
    run(state).map_err(|e| match e {
        e @ MetaError::AtIteration { .. } => e,
        other => other.at(it),
    })
}

/// One logged line of training progress.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub iteration: u64,
    pub beta: f64,
    pub meta_loss: f64,
    pub support_loss: f64,
    pub query_accuracy: f64,
}

/// Supplies the task for a given global episode index (iteration-slot
/// flattened), so the stream is a pure function of the index and resumed
/// runs replay it exactly.
pub type TaskSource<'a> = &'a mut dyn FnMut(u64) -> Result<TaskPair>;

/// Runs outer iterations `state.iteration .. meta.iterations`, logging
/// every `log_every` steps (and at the final step). Each row is also
/// handed to `on_row` when present, which is how callers stream metrics
/// to disk without owning the loop.
pub fn meta_train(
    state: &mut TrainState,
    model: &dyn TaskModel,
    source: TaskSource<'_>,
    inner: &InnerLoopConfig,
    meta: &MetaConfig,
    log_every: u64,
    mut on_row: Option<&mut dyn FnMut(&MetricsRow) -> Result<()>>,
) -> Result<Vec<MetricsRow>> {
    inner.validate()?;
    meta.validate()?;
    if log_every == 0 {
        return Err(MetaError::Config("log_every must be positive".into()));
    }
    let mut rows = Vec::new();
    while state.iteration < meta.iterations {
        let it = state.iteration;
        let mut tasks = Vec::with_capacity(meta.meta_batch);
        for slot in 0..meta.meta_batch as u64 {
            let index = it * meta.meta_batch as u64 + slot;
            tasks.push(source(index).map_err(|e| e.at(it))?);
        }
        let metrics = meta_step(state, model, &tasks, inner, meta)?;
        let done = state.iteration;
        if done % log_every == 0 || done == meta.iterations {
            let row = MetricsRow {
                iteration: done,
                beta: metrics.beta,
                meta_loss: metrics.meta_loss,
                support_loss: metrics.support_loss_mean,
                query_accuracy: metrics.query_accuracy_mean,
            };
            if let Some(f) = on_row.as_mut() {
                f(&row)?;
            }
            rows.push(row);
        }
    }
    Ok(rows)
}
