//! Finite-difference check of the full composed objective: support loss,
//! in-graph adaptation of every weight, query loss at the adapted
//! weights, plus the weight-decay terms — differentiated in one reverse
//! pass with respect to the initialization and the step sizes.
//!
//! Tolerances follow the usual allclose form
//! `max|a - f| <= atol + rtol * max(|a|_inf, |f|_inf)` with atol 1e-9
//! covering finite-difference round-off on blocks whose true gradient is
//! at or near zero.

use diffcore::{finite_difference_gradient, gradient, Graph, Tensor};
use metalearn::{
    apply_regularization, build_inner_update, AmlModel, TaskBatch, TaskModel, TaskPair,
};
use netmodels::{
    init_alpha, init_task_net, ConvStackConfig, GateVariant, HeadConfig, NodeMap, TaskNetConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STEP: f64 = 1e-6;
const RTOL: f64 = 1e-5;
const ATOL: f64 = 1e-9;

fn small_net() -> TaskNetConfig {
    TaskNetConfig {
        stack: ConvStackConfig {
            input: (6, 6, 1),
            blocks: 2,
            channels: 8,
            out_channels: 8,
            kernel: 3,
            bn_before_relu: true,
            bn_epsilon: 1e-5,
        },
        attention_bias: true,
        head: HeadConfig { layers: 2, ways: 2 },
        variant: GateVariant::Attention,
    }
}

fn one_shot_pair(rng: &mut ChaCha8Rng) -> TaskPair {
    let image = |rng: &mut ChaCha8Rng| {
        Tensor::from_fn(&[1, 6, 6, 1], |_| rng.random_range(0.0..1.0)).unwrap()
    };
    let batch = |rng: &mut ChaCha8Rng| {
        let a = image(rng);
        let b = image(rng);
        let mut data = a.data().to_vec();
        data.extend_from_slice(b.data());
        TaskBatch {
            inputs: Tensor::new(&[2, 6, 6, 1], data).unwrap(),
            targets: Tensor::new(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap(),
            labels: vec![0, 1],
        }
    };
    TaskPair { support: batch(rng), query: batch(rng) }
}

#[test]
fn composed_two_level_objective_matches_central_differences() {
    let cfg = small_net();
    let model = AmlModel { cfg: cfg.clone() };
    let params = init_task_net(&cfg, 20260814).unwrap();
    let alpha = init_alpha(&params, 0.01);
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let task = one_shot_pair(&mut rng);

    let mut g = Graph::new();
    let weights = NodeMap::params(&mut g, &params).unwrap();
    let alpha_nodes = NodeMap::params(&mut g, &alpha).unwrap();
    let built = build_inner_update(
        &mut g,
        &model,
        &weights,
        &alpha_nodes,
        &task.support,
        1,    // steps
        true, // differentiate through the update
        None,
    )
    .unwrap();
    let query = model.loss(&mut g, &built.adapted, &task.query, None).unwrap();
    let objective = apply_regularization(&mut g, query, &weights, 0.001, 0.00001).unwrap();

    let bindings = params.merged(&alpha).unwrap();
    let names: Vec<&str> = bindings.names().collect();

    let analytic = gradient(&g, objective, &bindings, &names).unwrap();
    let fd = finite_difference_gradient(&g, objective, &bindings, &names, STEP).unwrap();

    let mut checked = 0usize;
    for name in &names {
        let a = analytic.get(name).unwrap();
        let f = fd.get(name).unwrap();
        let mut worst = 0.0f64;
        for (&av, &fv) in a.data().iter().zip(f.data()) {
            worst = worst.max((av - fv).abs());
        }
        let scale = a.max_abs().max(f.max_abs());
        assert!(
            worst <= ATOL + RTOL * scale,
            "{name}: |a-f| = {worst:.3e} vs scale {scale:.3e}"
        );
        checked += a.len();
    }
    assert!(checked > 1500, "both initialization and step sizes must be covered, got {checked}");
}

#[test]
fn plain_gate_variant_passes_the_same_check() {
    // The ungated variant shares every weight name; its composed gradient
    // must also survive the finite-difference probe.
    let cfg = TaskNetConfig { variant: GateVariant::PlainConv, ..small_net() };
    let model = AmlModel { cfg: cfg.clone() };
    let params = init_task_net(&cfg, 77).unwrap();
    let alpha = init_alpha(&params, 0.01);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let task = one_shot_pair(&mut rng);

    let mut g = Graph::new();
    let weights = NodeMap::params(&mut g, &params).unwrap();
    let alpha_nodes = NodeMap::params(&mut g, &alpha).unwrap();
    let built = build_inner_update(
        &mut g,
        &model,
        &weights,
        &alpha_nodes,
        &task.support,
        1,
        true,
        None,
    )
    .unwrap();
    let query = model.loss(&mut g, &built.adapted, &task.query, None).unwrap();
    let objective = apply_regularization(&mut g, query, &weights, 0.001, 0.00001).unwrap();

    let bindings = params.merged(&alpha).unwrap();
    let names: Vec<&str> = bindings.names().collect();
    let analytic = gradient(&g, objective, &bindings, &names).unwrap();
    let fd = finite_difference_gradient(&g, objective, &bindings, &names, STEP).unwrap();
    for name in &names {
        let a = analytic.get(name).unwrap();
        let f = fd.get(name).unwrap();
        let mut worst = 0.0f64;
        for (&av, &fv) in a.data().iter().zip(f.data()) {
            worst = worst.max((av - fv).abs());
        }
        let scale = a.max_abs().max(f.max_abs());
        assert!(
            worst <= ATOL + RTOL * scale,
            "{name}: |a-f| = {worst:.3e} vs scale {scale:.3e}"
        );
    }
}
