//! End-to-end differentiability: the analytic gradient of a composed
//! forward-plus-cross-entropy objective must agree with central finite
//! differences on a miniature network.
//!
//! Comparison is per parameter block with a two-term bound,
//! `max|a - f| <= atol + rtol * max(inf_norm(a), inf_norm(f))`. The
//! relative term (1e-6) catches structural mistakes in any block carrying
//! real signal. The absolute term (1e-9) absorbs two round-off floors that
//! a pure ratio cannot: central differences at step 1e-6 resolve nothing
//! below about |L|·eps/h ~ 1e-10, and blocks whose true gradient is exactly
//! zero (a conv bias feeding batch norm is cancelled by the mean
//! subtraction) leave ~1e-16 summation residue on the analytic side.

use diffcore::{finite_difference_gradient, gradient, Graph, ParamSet, Tensor};
use netmodels::{
    abp_forward, init_abp, init_task_net, task_net_forward, AbpConfig, ConvStackConfig,
    GateVariant, HeadConfig, NodeMap, TaskNetConfig,
};

const STEP: f64 = 1e-6;
const RTOL: f64 = 1e-6;
const ATOL: f64 = 1e-9;

fn check_all_blocks(
    graph: &Graph,
    root: diffcore::NodeId,
    bindings: &ParamSet,
) {
    let names: Vec<&str> = bindings.names().collect();
    let analytic = gradient(graph, root, bindings, &names).unwrap();
    let numeric = finite_difference_gradient(graph, root, bindings, &names, STEP).unwrap();
    for name in &names {
        let (a, f) = (analytic.get(name).unwrap(), numeric.get(name).unwrap());
        let diff = a
            .data()
            .iter()
            .zip(f.data())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        let bound = ATOL + RTOL * a.max_abs().max(f.max_abs());
        assert!(diff <= bound, "{name}: max diff {diff:.3e} exceeds {bound:.3e}");
    }
}

fn one_hot(rows: &[usize], ways: usize) -> Tensor {
    Tensor::from_fn(&[rows.len(), ways], |i| {
        if i % ways == rows[i / ways] {
            1.0
        } else {
            0.0
        }
    })
    .unwrap()
}

fn miniature(variant: GateVariant) -> TaskNetConfig {
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
        head: HeadConfig { layers: 1, ways: 2 },
        variant,
    }
}

fn images(b: usize, h: usize, w: usize, c: usize) -> Tensor {
    Tensor::from_fn(&[b, h, w, c], |i| {
        let x = (i as u64).wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(11) % 7919;
        x as f64 / 7919.0 - 0.5
    })
    .unwrap()
}

#[test]
fn task_net_objective_gradient_matches_finite_differences() {
    for variant in [GateVariant::Attention, GateVariant::PlainConv] {
        let cfg = miniature(variant);
        let params = init_task_net(&cfg, 5).unwrap();

        let mut g = Graph::new();
        let x = g.constant(images(4, 6, 6, 1));
        let weights = NodeMap::params(&mut g, &params).unwrap();
        let nodes = task_net_forward(&mut g, x, &weights, &cfg, None).unwrap();
        let targets = g.constant(one_hot(&[0, 1, 0, 1], 2));
        let ce = g.softmax_cross_entropy(nodes.logits, targets).unwrap();
        let loss = g.reduce_mean(ce).unwrap();

        check_all_blocks(&g, loss, &params);
    }
}

#[test]
fn abp_objective_gradient_matches_finite_differences() {
    let cfg = AbpConfig {
        feature_dim: 12,
        attention_bias: true,
        head: HeadConfig { layers: 2, ways: 3 },
    };
    let params = init_abp(&cfg, 9).unwrap();

    let mut g = Graph::new();
    let feats = g.constant(images(6, 1, 1, 12));
    let weights = NodeMap::params(&mut g, &params).unwrap();
    let nodes = abp_forward(&mut g, feats, &weights, &cfg, None).unwrap();
    let targets = g.constant(one_hot(&[0, 1, 2, 0, 1, 2], 3));
    let ce = g.softmax_cross_entropy(nodes.logits, targets).unwrap();
    let loss = g.reduce_mean(ce).unwrap();

    check_all_blocks(&g, loss, &params);
}
