//! The evaluation protocol: adapt on each task's support set with the
//! same inner loop used in training (no dropout), score the query set,
//! and average. Tasks are independent, so they may run on a thread pool;
//! per-task results are collected by task index and reduced sequentially,
//! which keeps the statistics bit-identical at any thread count.

use diffcore::{Graph, ParamSet};
use metalearn::{accuracy, inner_update, InnerLoopConfig, TaskModel, TaskPair};
use netmodels::NodeMap;
use rayon::prelude::*;

use crate::error::{EvalError, Result};
use crate::report::EvalReport;

fn task_accuracy<M: TaskModel>(
    model: &M,
    params: &ParamSet,
    alpha: &ParamSet,
    inner: &InnerLoopConfig,
    pair: &TaskPair,
) -> Result<f64> {
    let adapted = inner_update(model, params, alpha, &pair.support, inner)?;
    let mut g = Graph::new();
    let weights = NodeMap::params(&mut g, &adapted)?;
    let node = model
        .logits(&mut g, &weights, &pair.query)?
        .ok_or_else(|| EvalError::Config("model exposes no logits to score".into()))?;
    let logits = g.eval(node, &adapted)?;
    Ok(accuracy(&logits, &pair.query.labels))
}

/// Evaluates adapted query accuracy over `task_count` tasks drawn from
/// `source` at indices `0..task_count`. `threads = 1` is the sequential
/// reference; any other count must (and does) reproduce it exactly.
pub fn evaluate_tasks<M, F>(
    model: &M,
    params: &ParamSet,
    alpha: &ParamSet,
    inner: &InnerLoopConfig,
    source: F,
    task_count: usize,
    threads: usize,
) -> Result<EvalReport>
where
    M: TaskModel + Sync,
    F: Fn(u64) -> metalearn::Result<TaskPair> + Sync,
{
    if task_count == 0 {
        return Err(EvalError::Config("evaluation needs at least one task".into()));
    }
    if threads == 0 {
        return Err(EvalError::Config("thread count must be at least one".into()));
    }
    let run_one = |t: u64| -> Result<f64> {
        let pair = source(t)?;
        task_accuracy(model, params, alpha, inner, &pair)
    };
    let accuracies: Vec<f64> = if threads == 1 {
        let mut acc = Vec::with_capacity(task_count);
        for t in 0..task_count as u64 {
            acc.push(run_one(t)?);
        }
        acc
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| EvalError::Config(format!("thread pool: {e}")))?;
        pool.install(|| {
            (0..task_count as u64)
                .into_par_iter()
                .map(run_one)
                .collect::<Result<Vec<f64>>>()
        })?
    };
    EvalReport::from_accuracies(accuracies)
}
