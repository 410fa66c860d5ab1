//! Finite-difference verification of every primitive operation.
//!
//! Each case builds a scalar objective `sum(op(...) * r)` with a fixed
//! random cotangent `r`, differentiates it symbolically, and compares
//! against central differences with step 1e-6.
//!
//! Comparison convention: for each parameter block,
//! `max |a - f| / max(||a||_inf, ||f||_inf, 1e-12) < 1e-6`.
//! Central differences at h = 1e-6 carry an absolute roundoff floor of
//! roughly `|objective| * 2^-52 / h` (about 1e-7 here), independent of the
//! size of the individual gradient entry, so a per-entry denominator would
//! flag noise on small entries as failures. Normalizing by the block's
//! largest gradient keeps the test sensitive to structural mistakes, which
//! perturb entries at full gradient scale; exact bit-level structure is
//! covered separately by the adjoint identity tests next to the kernels.

use diffcore::{finite_difference_gradient, gradient, Graph, NodeId, ParamSet, Tensor};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

const STEP: f64 = 1e-6;
const TOL: f64 = 1e-6;
const ROUNDS: usize = 100;

/// Worst per-block error, each block normalized by its largest gradient
/// magnitude.
fn block_relative_error(analytic: &ParamSet, fd: &ParamSet) -> f64 {
    let mut worst = 0.0f64;
    for ((_, a), (_, f)) in analytic.iter().zip(fd.iter()) {
        let scale = a.max_abs().max(f.max_abs()).max(1e-12);
        for (&va, &vf) in a.data().iter().zip(f.data().iter()) {
            worst = worst.max((va - vf).abs() / scale);
        }
    }
    worst
}

struct Case {
    graph: Graph,
    root: NodeId,
    bindings: ParamSet,
}

/// Contracts an op output against a fixed random cotangent so every output
/// element influences the scalar root.
fn contract(g: &mut Graph, out: NodeId, rng: &mut ChaCha8Rng) -> NodeId {
    let shape = g.shape(out).to_vec();
    let r = Tensor::from_fn(&shape, |_| rng.random_range(-1.0..1.0)).unwrap();
    let rc = g.constant(r);
    let prod = g.mul(out, rc).unwrap();
    g.reduce_sum(prod).unwrap()
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    Tensor::from_fn(shape, |_| rng.random_range(lo..hi)).unwrap()
}

/// Values bounded away from zero, for ops with a kink or pole at zero.
fn away_from_zero(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    Tensor::from_fn(shape, |_| {
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        sign * rng.random_range(0.05..1.0)
    })
    .unwrap()
}

fn check(case: &Case, names: &[&str], op_label: &str) {
    let analytic = gradient(&case.graph, case.root, &case.bindings, names).unwrap();
    let fd =
        finite_difference_gradient(&case.graph, case.root, &case.bindings, names, STEP).unwrap();
    analytic.ensure_congruent(&fd).unwrap();
    let err = block_relative_error(&analytic, &fd);
    assert!(
        err < TOL,
        "{op_label}: max relative error {err:.3e} exceeds {TOL:.0e}"
    );
}

fn run_rounds(op_label: &str, mut build: impl FnMut(&mut ChaCha8Rng) -> (Case, Vec<&'static str>)) {
    for round in 0..ROUNDS {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5EED_0000 + round as u64);
        let (case, names) = build(&mut rng);
        check(&case, &names, &format!("{op_label} (round {round})"));
    }
}

#[test]
fn gradcheck_add_sub_mul_with_broadcasting() {
    for op in ["add", "sub", "mul"] {
        run_rounds(op, |rng| {
            let mut g = Graph::new();
            let a = g.param("a", &[2, 3, 4]).unwrap();
            let b = g.param("b", &[2, 1, 4]).unwrap();
            let out = match op {
                "add" => g.add(a, b).unwrap(),
                "sub" => g.sub(a, b).unwrap(),
                _ => g.mul(a, b).unwrap(),
            };
            let root = contract(&mut g, out, rng);
            let mut bindings = ParamSet::new();
            bindings.insert("a", uniform(rng, &[2, 3, 4], -1.0, 1.0)).unwrap();
            bindings.insert("b", uniform(rng, &[2, 1, 4], -1.0, 1.0)).unwrap();
            (Case { graph: g, root, bindings }, vec!["a", "b"])
        });
    }
}

#[test]
fn gradcheck_scalar_broadcast_operands() {
    run_rounds("mul by rank-0", |rng| {
        let mut g = Graph::new();
        let a = g.param("a", &[3, 2]).unwrap();
        let s = g.param("s", &[]).unwrap();
        let out = g.mul(a, s).unwrap();
        let root = contract(&mut g, out, rng);
        let mut bindings = ParamSet::new();
        bindings.insert("a", uniform(rng, &[3, 2], -1.0, 1.0)).unwrap();
        bindings.insert("s", uniform(rng, &[], -1.0, 1.0)).unwrap();
        (Case { graph: g, root, bindings }, vec!["a", "s"])
    });
}

#[test]
fn gradcheck_scalar_mul() {
    run_rounds("scalar_mul", |rng| {
        let mut g = Graph::new();
        let a = g.param("a", &[4, 3]).unwrap();
        let out = g.scalar_mul(a, -1.75).unwrap();
        let root = contract(&mut g, out, rng);
        let mut bindings = ParamSet::new();
        bindings.insert("a", uniform(rng, &[4, 3], -1.0, 1.0)).unwrap();
        (Case { graph: g, root, bindings }, vec!["a"])
    });
}

#[test]
fn gradcheck_matmul_and_transpose() {
    run_rounds("matmul/transpose", |rng| {
        let mut g = Graph::new();
        let a = g.param("a", &[3, 4]).unwrap();
        let b = g.param("b", &[4, 2]).unwrap();
        let prod = g.matmul(a, b).unwrap();
        let out = g.transpose(prod).unwrap();
        let root = contract(&mut g, out, rng);
        let mut bindings = ParamSet::new();
        bindings.insert("a", uniform(rng, &[3, 4], -1.0, 1.0)).unwrap();
        bindings.insert("b", uniform(rng, &[4, 2], -1.0, 1.0)).unwrap();
        (Case { graph: g, root, bindings }, vec!["a", "b"])
    });
}

#[test]
fn gradcheck_conv2d() {
    run_rounds("conv2d", |rng| {
        let mut g = Graph::new();
        let x = g.param("x", &[2, 4, 5, 2]).unwrap();
        let w = g.param("w", &[3, 3, 2, 3]).unwrap();
        let out = g.conv2d(x, w).unwrap();
        let root = contract(&mut g, out, rng);
        let mut bindings = ParamSet::new();
        bindings.insert("x", uniform(rng, &[2, 4, 5, 2], -1.0, 1.0)).unwrap();
        bindings.insert("w", uniform(rng, &[3, 3, 2, 3], -1.0, 1.0)).unwrap();
        (Case { graph: g, root, bindings }, vec!["x", "w"])
    });
}

#[test]
fn gradcheck_conv2d_input_grad() {
    run_rounds("conv2d_input_grad", |rng| {
        let mut g = Graph::new();
        let gy = g.param("gy", &[1, 4, 4, 3]).unwrap();
        let w = g.param("w", &[3, 3, 2, 3]).unwrap();
        let out = g.conv2d_input_grad(gy, w).unwrap();
        let root = contract(&mut g, out, rng);
        let mut bindings = ParamSet::new();
        bindings.insert("gy", uniform(rng, &[1, 4, 4, 3], -1.0, 1.0)).unwrap();
        bindings.insert("w", uniform(rng, &[3, 3, 2, 3], -1.0, 1.0)).unwrap();
        (Case { graph: g, root, bindings }, vec!["gy", "w"])
    });
}

#[test]
fn gradcheck_conv2d_weight_grad() {
    run_rounds("conv2d_weight_grad", |rng| {
        let mut g = Graph::new();
        let x = g.param("x", &[1, 4, 4, 2]).unwrap();
        let gy = g.param("gy", &[1, 4, 4, 3]).unwrap();
        let out = g.conv2d_weight_grad(x, gy, 3, 3).unwrap();
        let root = contract(&mut g, out, rng);
        let mut bindings = ParamSet::new();
        bindings.insert("x", uniform(rng, &[1, 4, 4, 2], -1.0, 1.0)).unwrap();
        bindings.insert("gy", uniform(rng, &[1, 4, 4, 3], -1.0, 1.0)).unwrap();
        (Case { graph: g, root, bindings }, vec!["x", "gy"])
    });
}

/// Pool inputs use distinct well-separated values so no finite-difference
/// step crosses an argmax boundary.
fn pool_input(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n: usize = shape.iter().product();
    let mut levels: Vec<f64> = (0..n).map(|i| i as f64 * 0.1).collect();
    // Fisher-Yates shuffle with the test RNG.
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        levels.swap(i, j);
    }
    Tensor::new(shape, levels).unwrap()
}

#[test]
fn gradcheck_max_pool_family() {
    run_rounds("max_pool2", |rng| {
        let mut g = Graph::new();
        let x = g.param("x", &[1, 5, 5, 2]).unwrap();
        let out = g.max_pool2(x).unwrap();
        let root = contract(&mut g, out, rng);
        let mut bindings = ParamSet::new();
        bindings.insert("x", pool_input(rng, &[1, 5, 5, 2])).unwrap();
        (Case { graph: g, root, bindings }, vec!["x"])
    });
    run_rounds("max_pool_vjp", |rng| {
        let mut g = Graph::new();
        let x = g.param("x", &[1, 4, 4, 2]).unwrap();
        let v = g.param("v", &[1, 2, 2, 2]).unwrap();
        let out = g.max_pool_vjp(x, v).unwrap();
        let root = contract(&mut g, out, rng);
        let mut bindings = ParamSet::new();
        bindings.insert("x", pool_input(rng, &[1, 4, 4, 2])).unwrap();
        bindings.insert("v", uniform(rng, &[1, 2, 2, 2], -1.0, 1.0)).unwrap();
        (Case { graph: g, root, bindings }, vec!["x", "v"])
    });
    run_rounds("max_pool_sel", |rng| {
        let mut g = Graph::new();
        let x = g.param("x", &[1, 4, 4, 2]).unwrap();
        let z = g.param("z", &[1, 4, 4, 2]).unwrap();
        let out = g.max_pool_sel(x, z).unwrap();
        let root = contract(&mut g, out, rng);
        let mut bindings = ParamSet::new();
        bindings.insert("x", pool_input(rng, &[1, 4, 4, 2])).unwrap();
        bindings.insert("z", uniform(rng, &[1, 4, 4, 2], -1.0, 1.0)).unwrap();
        (Case { graph: g, root, bindings }, vec!["x", "z"])
    });
}

#[test]
fn gradcheck_elementwise_nonlinearities() {
    // relu and abs need inputs away from their kink at zero.
    for op in ["relu", "abs"] {
        run_rounds(op, |rng| {
            let mut g = Graph::new();
            let x = g.param("x", &[3, 4]).unwrap();
            let out = match op {
                "relu" => g.relu(x).unwrap(),
                _ => g.abs(x).unwrap(),
            };
            let root = contract(&mut g, out, rng);
            let mut bindings = ParamSet::new();
            bindings.insert("x", away_from_zero(rng, &[3, 4])).unwrap();
            (Case { graph: g, root, bindings }, vec!["x"])
        });
    }
    run_rounds("sigmoid", |rng| {
        let mut g = Graph::new();
        let x = g.param("x", &[3, 4]).unwrap();
        let out = g.sigmoid(x).unwrap();
        let root = contract(&mut g, out, rng);
        let mut bindings = ParamSet::new();
        bindings.insert("x", uniform(rng, &[3, 4], -3.0, 3.0)).unwrap();
        (Case { graph: g, root, bindings }, vec!["x"])
    });
    run_rounds("rsqrt", |rng| {
        let mut g = Graph::new();
        let x = g.param("x", &[3, 4]).unwrap();
        let out = g.rsqrt(x).unwrap();
        let root = contract(&mut g, out, rng);
        let mut bindings = ParamSet::new();
        bindings.insert("x", uniform(rng, &[3, 4], 0.5, 2.0)).unwrap();
        (Case { graph: g, root, bindings }, vec!["x"])
    });
}

#[test]
fn gradcheck_step_and_sign_have_zero_gradient() {
    // Both ops are locally constant away from zero, so analytic and
    // finite-difference gradients must both vanish.
    for op in ["step", "sign"] {
        run_rounds(op, |rng| {
            let mut g = Graph::new();
            let x = g.param("x", &[3, 3]).unwrap();
            let out = match op {
                "step" => g.step(x).unwrap(),
                _ => g.sign(x).unwrap(),
            };
            let root = contract(&mut g, out, rng);
            let mut bindings = ParamSet::new();
            bindings.insert("x", away_from_zero(rng, &[3, 3])).unwrap();
            (Case { graph: g, root, bindings }, vec!["x"])
        });
    }
}

#[test]
fn gradcheck_softmax() {
    run_rounds("softmax", |rng| {
        let mut g = Graph::new();
        let x = g.param("x", &[4, 5]).unwrap();
        let out = g.softmax(x).unwrap();
        let root = contract(&mut g, out, rng);
        let mut bindings = ParamSet::new();
        bindings.insert("x", uniform(rng, &[4, 5], -2.0, 2.0)).unwrap();
        (Case { graph: g, root, bindings }, vec!["x"])
    });
}

#[test]
fn gradcheck_softmax_cross_entropy() {
    run_rounds("softmax_cross_entropy", |rng| {
        let mut g = Graph::new();
        let x = g.param("x", &[4, 5]).unwrap();
        let t = g.param("t", &[4, 5]).unwrap();
        let out = g.softmax_cross_entropy(x, t).unwrap();
        let root = contract(&mut g, out, rng);
        let mut bindings = ParamSet::new();
        bindings.insert("x", uniform(rng, &[4, 5], -2.0, 2.0)).unwrap();
        // Targets are distribution rows (softmax of random logits).
        let raw = uniform(rng, &[4, 5], -1.0, 1.0);
        let mut gt = Graph::new();
        let r = gt.constant(raw);
        let sm = gt.softmax(r).unwrap();
        let t_val = gt.eval(sm, &ParamSet::new()).unwrap();
        bindings.insert("t", t_val).unwrap();
        (Case { graph: g, root, bindings }, vec!["x", "t"])
    });
}

#[test]
fn gradcheck_shape_plumbing() {
    run_rounds("broadcast_to", |rng| {
        let mut g = Graph::new();
        let x = g.param("x", &[2, 1, 3]).unwrap();
        let out = g.broadcast_to(x, &[2, 4, 3]).unwrap();
        let root = contract(&mut g, out, rng);
        let mut bindings = ParamSet::new();
        bindings.insert("x", uniform(rng, &[2, 1, 3], -1.0, 1.0)).unwrap();
        (Case { graph: g, root, bindings }, vec!["x"])
    });
    run_rounds("sum_to", |rng| {
        let mut g = Graph::new();
        let x = g.param("x", &[2, 4, 3]).unwrap();
        let out = g.sum_to(x, &[2, 1, 3]).unwrap();
        let root = contract(&mut g, out, rng);
        let mut bindings = ParamSet::new();
        bindings.insert("x", uniform(rng, &[2, 4, 3], -1.0, 1.0)).unwrap();
        (Case { graph: g, root, bindings }, vec!["x"])
    });
    run_rounds("reshape", |rng| {
        let mut g = Graph::new();
        let x = g.param("x", &[2, 6]).unwrap();
        let out = g.reshape(x, &[3, 4]).unwrap();
        let root = contract(&mut g, out, rng);
        let mut bindings = ParamSet::new();
        bindings.insert("x", uniform(rng, &[2, 6], -1.0, 1.0)).unwrap();
        (Case { graph: g, root, bindings }, vec!["x"])
    });
    run_rounds("concat/slice", |rng| {
        let mut g = Graph::new();
        let a = g.param("a", &[2, 3, 2]).unwrap();
        let b = g.param("b", &[2, 2, 2]).unwrap();
        let cat = g.concat(&[a, b], 1).unwrap();
        let out = g.slice(cat, 1, 1, 3).unwrap();
        let root = contract(&mut g, out, rng);
        let mut bindings = ParamSet::new();
        bindings.insert("a", uniform(rng, &[2, 3, 2], -1.0, 1.0)).unwrap();
        bindings.insert("b", uniform(rng, &[2, 2, 2], -1.0, 1.0)).unwrap();
        (Case { graph: g, root, bindings }, vec!["a", "b"])
    });
    run_rounds("pad", |rng| {
        let mut g = Graph::new();
        let x = g.param("x", &[2, 3]).unwrap();
        let out = g.pad(x, 1, 2, 1).unwrap();
        let root = contract(&mut g, out, rng);
        let mut bindings = ParamSet::new();
        bindings.insert("x", uniform(rng, &[2, 3], -1.0, 1.0)).unwrap();
        (Case { graph: g, root, bindings }, vec!["x"])
    });
}

#[test]
fn gradcheck_spatial_resampling() {
    run_rounds("upsample2", |rng| {
        let mut g = Graph::new();
        let x = g.param("x", &[1, 3, 2, 2]).unwrap();
        let out = g.upsample2(x).unwrap();
        let root = contract(&mut g, out, rng);
        let mut bindings = ParamSet::new();
        bindings.insert("x", uniform(rng, &[1, 3, 2, 2], -1.0, 1.0)).unwrap();
        (Case { graph: g, root, bindings }, vec!["x"])
    });
    run_rounds("sum_pool2", |rng| {
        let mut g = Graph::new();
        let x = g.param("x", &[1, 4, 6, 2]).unwrap();
        let out = g.sum_pool2(x).unwrap();
        let root = contract(&mut g, out, rng);
        let mut bindings = ParamSet::new();
        bindings.insert("x", uniform(rng, &[1, 4, 6, 2], -1.0, 1.0)).unwrap();
        (Case { graph: g, root, bindings }, vec!["x"])
    });
    run_rounds("resize_area", |rng| {
        let mut g = Graph::new();
        let x = g.param("x", &[1, 5, 7, 2]).unwrap();
        let out = g.resize_area(x, 11, 3).unwrap();
        let root = contract(&mut g, out, rng);
        let mut bindings = ParamSet::new();
        bindings.insert("x", uniform(rng, &[1, 5, 7, 2], -1.0, 1.0)).unwrap();
        (Case { graph: g, root, bindings }, vec!["x"])
    });
    run_rounds("resize_area_t", |rng| {
        let mut g = Graph::new();
        let x = g.param("x", &[1, 4, 6, 2]).unwrap();
        let out = g.resize_area_t(x, 7, 5).unwrap();
        let root = contract(&mut g, out, rng);
        let mut bindings = ParamSet::new();
        bindings.insert("x", uniform(rng, &[1, 4, 6, 2], -1.0, 1.0)).unwrap();
        (Case { graph: g, root, bindings }, vec!["x"])
    });
}

#[test]
fn gradcheck_composite_batch_norm() {
    run_rounds("batch_norm", |rng| {
        let mut g = Graph::new();
        let x = g.param("x", &[3, 2, 2, 4]).unwrap();
        let scale = g.param("scale", &[1, 1, 1, 4]).unwrap();
        let shift = g.param("shift", &[1, 1, 1, 4]).unwrap();
        let out = g.batch_norm(x, scale, shift, 1e-5).unwrap();
        let root = contract(&mut g, out, rng);
        let mut bindings = ParamSet::new();
        bindings.insert("x", uniform(rng, &[3, 2, 2, 4], -1.0, 1.0)).unwrap();
        bindings.insert("scale", uniform(rng, &[1, 1, 1, 4], 0.5, 1.5)).unwrap();
        bindings.insert("shift", uniform(rng, &[1, 1, 1, 4], -0.5, 0.5)).unwrap();
        (
            Case { graph: g, root, bindings },
            vec!["x", "scale", "shift"],
        )
    });
}

#[test]
fn gradcheck_composite_pool_mse_dropout() {
    run_rounds("global_avg_pool + mse", |rng| {
        let mut g = Graph::new();
        let x = g.param("x", &[2, 3, 3, 2]).unwrap();
        let pooled = g.global_avg_pool(x).unwrap();
        let target = g.constant(uniform(rng, &[2, 1, 1, 2], -1.0, 1.0));
        let root = g.mse(pooled, target).unwrap();
        let mut bindings = ParamSet::new();
        bindings.insert("x", uniform(rng, &[2, 3, 3, 2], -1.0, 1.0)).unwrap();
        (Case { graph: g, root, bindings }, vec!["x"])
    });
    run_rounds("dropout mask", |rng| {
        let mut g = Graph::new();
        let x = g.param("x", &[4, 5]).unwrap();
        let rate = 0.4;
        let mask = Tensor::from_fn(&[4, 5], |_| {
            if rng.random_bool(1.0 - rate) { 1.0 / (1.0 - rate) } else { 0.0 }
        })
        .unwrap();
        let dropped = g.dropout(x, mask).unwrap();
        let root = contract(&mut g, dropped, rng);
        let mut bindings = ParamSet::new();
        bindings.insert("x", uniform(rng, &[4, 5], -1.0, 1.0)).unwrap();
        (Case { graph: g, root, bindings }, vec!["x"])
    });
}

#[test]
fn gradcheck_detach_blocks_gradient_exactly() {
    // y = x * detach(x): dy/dx must be exactly detach(x), i.e. the value of
    // x, not 2x.
    let mut g = Graph::new();
    let x = g.param("x", &[3]).unwrap();
    let d = g.detach(x).unwrap();
    let prod = g.mul(x, d).unwrap();
    let root = g.reduce_sum(prod).unwrap();
    let mut bindings = ParamSet::new();
    bindings
        .insert("x", Tensor::new(&[3], vec![1.5, -2.0, 0.5]).unwrap())
        .unwrap();
    let grad = gradient(&g, root, &bindings, &["x"]).unwrap();
    assert_eq!(grad.get("x").unwrap().data(), &[1.5, -2.0, 0.5]);
}
