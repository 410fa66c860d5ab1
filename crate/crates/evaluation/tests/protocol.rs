//! The evaluation loop end to end: adaptation-then-scoring over a task
//! stream, reference determinism, and thread-count independence.

use diffcore::{Graph, NodeId, ParamSet, Tensor};
use episodes::{generate_synthetic, EpisodeSpec, SyntheticSpec};
use evaluation::{cross_test, evaluate_tasks, EvalError};
use metalearn::{
    image_task_source, AmlModel, InnerLoopConfig, InnerScope, MetaError, TaskBatch, TaskModel,
    TaskPair,
};
use netmodels::{
    init_task_net, ConvStackConfig, GateVariant, HeadConfig, NodeMap, TaskNetConfig,
};

/// A model whose logits are the targets themselves: always correct, with
/// a harmless quadratic loss so adaptation has a gradient to follow.
struct OracleModel;

impl TaskModel for OracleModel {
    fn loss(
        &self,
        g: &mut Graph,
        weights: &NodeMap,
        _batch: &TaskBatch,
        _dropout: netmodels::MaskSource<'_>,
    ) -> metalearn::Result<NodeId> {
        let w = weights.get("w")?;
        let sq = g.mul(w, w)?;
        Ok(g.reduce_sum(sq)?)
    }

    fn logits(
        &self,
        g: &mut Graph,
        _weights: &NodeMap,
        batch: &TaskBatch,
    ) -> metalearn::Result<Option<NodeId>> {
        Ok(Some(g.constant(batch.targets.clone())))
    }

    fn scope(&self) -> InnerScope {
        InnerScope::All
    }
}

fn oracle_params() -> (ParamSet, ParamSet) {
    let mut p = ParamSet::new();
    p.insert("w", Tensor::scalar(0.5).with_requires_grad(true)).unwrap();
    let a = netmodels::init_alpha(&p, 0.01);
    (p, a)
}

fn toy_task(ways: usize, rows: usize) -> TaskPair {
    let targets =
        Tensor::from_fn(&[rows, ways], |i| f64::from(i % ways == (i / ways) % ways)).unwrap();
    let labels: Vec<usize> = (0..rows).map(|r| r % ways).collect();
    let batch = TaskBatch { inputs: Tensor::zeros(&[rows, 1]), targets, labels };
    TaskPair { support: batch.clone(), query: batch }
}

#[test]
fn an_always_correct_model_reports_mean_one_interval_zero() {
    let (params, alpha) = oracle_params();
    let report = evaluate_tasks(
        &OracleModel,
        &params,
        &alpha,
        &InnerLoopConfig::default(),
        |_| Ok(toy_task(5, 10)),
        25,
        1,
    )
    .unwrap();
    assert_eq!(report.mean, 1.0);
    assert_eq!(report.ci95, 0.0);
    assert_eq!(report.accuracies.len(), 25);
}

#[test]
fn zero_tasks_or_zero_threads_are_rejected() {
    let (params, alpha) = oracle_params();
    let inner = InnerLoopConfig::default();
    let source = |_: u64| Ok(toy_task(5, 5));
    assert!(matches!(
        evaluate_tasks(&OracleModel, &params, &alpha, &inner, source, 0, 1),
        Err(EvalError::Config(_))
    ));
    assert!(matches!(
        evaluate_tasks(&OracleModel, &params, &alpha, &inner, source, 5, 0),
        Err(EvalError::Config(_))
    ));
}

#[test]
fn task_stream_errors_propagate() {
    let (params, alpha) = oracle_params();
    let result = evaluate_tasks(
        &OracleModel,
        &params,
        &alpha,
        &InnerLoopConfig::default(),
        |t| {
            if t == 3 {
                Err(MetaError::Config("stream break".into()))
            } else {
                Ok(toy_task(5, 5))
            }
        },
        10,
        1,
    );
    assert!(result.is_err());
}

fn tiny_net() -> TaskNetConfig {
    TaskNetConfig {
        stack: ConvStackConfig {
            input: (8, 8, 1),
            blocks: 2,
            channels: 6,
            out_channels: 6,
            kernel: 3,
            bn_before_relu: true,
            bn_epsilon: 1e-5,
        },
        attention_bias: false,
        head: HeadConfig { layers: 1, ways: 3 },
        variant: GateVariant::Attention,
    }
}

#[test]
fn thread_counts_do_not_change_a_single_bit() {
    let cfg = tiny_net();
    let model = AmlModel { cfg: cfg.clone() };
    let params = init_task_net(&cfg, 61).unwrap();
    let alpha = netmodels::init_alpha(&params, 0.01);
    let inner = InnerLoopConfig::default();
    let dataset = generate_synthetic(
        &SyntheticSpec { height: 8, width: 8, channels: 1, noise: 0.1, prototype_cells: 4 },
        5,
        20,
        777,
    )
    .unwrap();
    let spec = EpisodeSpec { ways: 3, shots: 1, queries: 4 };

    let run = |threads: usize| {
        let source = image_task_source(&dataset, spec, 424_242);
        evaluate_tasks(&model, &params, &alpha, &inner, source, 24, threads).unwrap()
    };
    let reference = run(1);
    let parallel = run(4);
    assert_eq!(reference.accuracies.len(), parallel.accuracies.len());
    for (a, b) in reference.accuracies.iter().zip(&parallel.accuracies) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
    assert_eq!(reference.mean.to_bits(), parallel.mean.to_bits());
    assert_eq!(reference.ci95.to_bits(), parallel.ci95.to_bits());

    // And the sequential reference reproduces itself.
    let again = run(1);
    assert_eq!(reference.accuracies, again.accuracies);
}

#[test]
fn cross_test_wires_the_full_grid() {
    let (params, alpha) = oracle_params();
    let inner = InnerLoopConfig::default();
    let mut calls = Vec::new();
    let matrix = cross_test(|train, test| {
        calls.push((train, test));
        evaluate_tasks(
            &OracleModel,
            &params,
            &alpha,
            &inner,
            |_| Ok(toy_task(5, test)),
            4,
            1,
        )
    })
    .unwrap();
    assert_eq!(calls.len(), 25);
    assert_eq!(calls[0], (1, 1));
    assert_eq!(calls[24], (9, 9));
    assert!(matrix.a.iter().flatten().all(|&v| v == 100.0));
}
