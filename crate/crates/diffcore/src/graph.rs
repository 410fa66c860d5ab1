//! Computation graphs.
//!
//! A [`Graph`] is an append-only arena of nodes. Node ids are indices into
//! the arena and are topologically ordered by construction: every input of a
//! node has a smaller id. Shapes are inferred eagerly, so malformed wiring
//! fails at build time rather than during evaluation.
//!
//! Differentiation ([`Graph::grad`]) appends ordinary nodes that compute the
//! vector-Jacobian products, which means the result of one differentiation
//! pass can itself be differentiated. That property is what the meta-learning
//! layers rely on for gradients of post-update losses.

use std::sync::Arc;

use crate::error::{DiffError, Result};
use crate::tensor::Tensor;

/// Handle to a node inside a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(pub(crate) usize);

impl NodeId {
    pub fn index(&self) -> usize {
        self.0
    }
}

/// Primitive operations. Every op has a vector-Jacobian product expressible
/// in terms of other ops from this same list, so graphs stay closed under
/// differentiation.
#[derive(Debug, Clone)]
pub(crate) enum Op {
    /// Trainable leaf, bound by name at evaluation time.
    Param(String),
    /// Baked-in value.
    Const(Arc<Tensor>),

    // Elementwise arithmetic with size-1 broadcasting (same rank, or a
    // rank-0 scalar against anything).
    Add,
    Sub,
    Mul,
    /// Multiply by a compile-time scalar.
    ScalarMul(f64),

    // Dense linear algebra on rank-2 tensors.
    MatMul,
    Transpose,

    // 2-d convolution family, NHWC layout, stride 1, zero "same" padding,
    // odd kernel extents. The three ops are each other's adjoints.
    Conv2d,
    Conv2dInputGrad,
    Conv2dWeightGrad { kh: usize, kw: usize },

    // 2x2 stride-2 max pooling with ceil-mode edge windows. `MaxPoolVjp`
    // scatters window gradients back to the argmax positions; `MaxPoolSel`
    // gathers values at the argmax positions. Pool selection indices are
    // treated as locally constant, so their own derivative is zero.
    MaxPool2,
    MaxPoolVjp,
    MaxPoolSel,

    // Elementwise nonlinearities.
    Relu,
    /// Heaviside step of the input; derivative treated as zero.
    Step,
    /// Sign of the input; derivative treated as zero.
    Sign,
    Abs,
    Sigmoid,
    /// 1/sqrt(x); inputs must stay positive.
    Rsqrt,

    /// Softmax over the last axis.
    Softmax,
    /// Fused softmax cross-entropy per row: inputs (logits, targets), both
    /// (b, n); output (b,). Computed with a max-shifted log-sum-exp so large
    /// logits do not overflow.
    SoftmaxXent,

    // Shape plumbing. The node's own shape is the target shape.
    BroadcastTo,
    SumTo,
    Reshape,
    Concat { axis: usize },
    Slice { axis: usize, start: usize, len: usize },
    Pad { axis: usize, before: usize },

    // Spatial resampling on NHWC tensors. `Upsample2` repeats each pixel
    // 2x2; `SumPool2` sums 2x2 blocks (its adjoint). `ResizeArea` is
    // area-weighted resampling to an arbitrary spatial size; `ResizeAreaT`
    // applies the transposed weight matrix.
    Upsample2,
    SumPool2,
    ResizeArea,
    ResizeAreaT,

    /// Identity in the forward pass, blocks gradient flow in the backward
    /// pass. Used to cut higher-order terms in first-order training modes.
    Detach,
}

impl Op {
    pub(crate) fn name(&self) -> &'static str {
        match self {
            Op::Param(_) => "param",
            Op::Const(_) => "const",
            Op::Add => "add",
            Op::Sub => "sub",
            Op::Mul => "mul",
            Op::ScalarMul(_) => "scalar_mul",
            Op::MatMul => "matmul",
            Op::Transpose => "transpose",
            Op::Conv2d => "conv2d",
            Op::Conv2dInputGrad => "conv2d_input_grad",
            Op::Conv2dWeightGrad { .. } => "conv2d_weight_grad",
            Op::MaxPool2 => "max_pool2",
            Op::MaxPoolVjp => "max_pool_vjp",
            Op::MaxPoolSel => "max_pool_sel",
            Op::Relu => "relu",
            Op::Step => "step",
            Op::Sign => "sign",
            Op::Abs => "abs",
            Op::Sigmoid => "sigmoid",
            Op::Rsqrt => "rsqrt",
            Op::Softmax => "softmax",
            Op::SoftmaxXent => "softmax_cross_entropy",
            Op::BroadcastTo => "broadcast_to",
            Op::SumTo => "sum_to",
            Op::Reshape => "reshape",
            Op::Concat { .. } => "concat",
            Op::Slice { .. } => "slice",
            Op::Pad { .. } => "pad",
            Op::Upsample2 => "upsample2",
            Op::SumPool2 => "sum_pool2",
            Op::ResizeArea => "resize_area",
            Op::ResizeAreaT => "resize_area_t",
            Op::Detach => "detach",
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Node {
    pub(crate) op: Op,
    pub(crate) inputs: Vec<NodeId>,
    pub(crate) shape: Vec<usize>,
}

/// Append-only computation graph.
#[derive(Debug, Clone, Default)]
pub struct Graph {
    pub(crate) nodes: Vec<Node>,
}

fn shape_err(op: &'static str, detail: String) -> DiffError {
    DiffError::Shape { op, detail }
}

/// Broadcast result of two shapes: equal rank with per-axis extents that
/// match or are 1, or a rank-0 scalar against anything.
fn broadcast_shape(op: &'static str, a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    if a.is_empty() {
        return Ok(b.to_vec());
    }
    if b.is_empty() {
        return Ok(a.to_vec());
    }
    if a.len() != b.len() {
        return Err(shape_err(
            op,
            format!("rank mismatch: {:?} vs {:?}", a, b),
        ));
    }
    let mut out = Vec::with_capacity(a.len());
    for (&x, &y) in a.iter().zip(b.iter()) {
        if x == y || x == 1 || y == 1 {
            out.push(x.max(y));
        } else {
            return Err(shape_err(
                op,
                format!("incompatible extents in {:?} vs {:?}", a, b),
            ));
        }
    }
    Ok(out)
}

fn ceil_half(n: usize) -> usize {
    n.div_ceil(2)
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Shape of a node.
    pub fn shape(&self, id: NodeId) -> &[usize] {
        &self.nodes[id.0].shape
    }

    /// Human-readable op name of a node, for diagnostics.
    pub fn op_name(&self, id: NodeId) -> &'static str {
        self.nodes[id.0].op.name()
    }

    fn push(&mut self, op: Op, inputs: Vec<NodeId>, shape: Vec<usize>) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node { op, inputs, shape });
        id
    }

    fn check(&self, op: &'static str, ids: &[NodeId]) -> Result<()> {
        for id in ids {
            if id.0 >= self.nodes.len() {
                return Err(shape_err(op, format!("node id {} out of range", id.0)));
            }
        }
        Ok(())
    }

    // ── leaves ──────────────────────────────────────────────────────────

    /// Declares a named parameter leaf. Declaring the same name twice with
    /// the same shape returns the original node; a different shape is an
    /// error.
    pub fn param(&mut self, name: &str, shape: &[usize]) -> Result<NodeId> {
        for (i, node) in self.nodes.iter().enumerate() {
            if let Op::Param(existing) = &node.op {
                if existing == name {
                    if node.shape == shape {
                        return Ok(NodeId(i));
                    }
                    return Err(DiffError::ParamShapeConflict {
                        name: name.to_string(),
                        old: node.shape.clone(),
                        new: shape.to_vec(),
                    });
                }
            }
        }
        Ok(self.push(Op::Param(name.to_string()), vec![], shape.to_vec()))
    }

    /// Embeds a constant tensor.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        let shape = value.shape().to_vec();
        self.push(Op::Const(Arc::new(value)), vec![], shape)
    }

    /// Convenience scalar constant.
    pub fn scalar(&mut self, value: f64) -> NodeId {
        self.constant(Tensor::scalar(value))
    }

    // ── elementwise arithmetic ──────────────────────────────────────────

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check("add", &[a, b])?;
        let shape = broadcast_shape("add", self.shape(a), self.shape(b))?;
        Ok(self.push(Op::Add, vec![a, b], shape))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check("sub", &[a, b])?;
        let shape = broadcast_shape("sub", self.shape(a), self.shape(b))?;
        Ok(self.push(Op::Sub, vec![a, b], shape))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check("mul", &[a, b])?;
        let shape = broadcast_shape("mul", self.shape(a), self.shape(b))?;
        Ok(self.push(Op::Mul, vec![a, b], shape))
    }

    pub fn scalar_mul(&mut self, a: NodeId, factor: f64) -> Result<NodeId> {
        self.check("scalar_mul", &[a])?;
        if !factor.is_finite() {
            return Err(shape_err("scalar_mul", format!("non-finite factor {factor}")));
        }
        let shape = self.shape(a).to_vec();
        Ok(self.push(Op::ScalarMul(factor), vec![a], shape))
    }

    // ── dense linear algebra ────────────────────────────────────────────

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check("matmul", &[a, b])?;
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(shape_err(
                "matmul",
                format!("expected (m,k)x(k,n), got {:?} x {:?}", sa, sb),
            ));
        }
        let shape = vec![sa[0], sb[1]];
        Ok(self.push(Op::MatMul, vec![a, b], shape))
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId> {
        self.check("transpose", &[a])?;
        let s = self.shape(a);
        if s.len() != 2 {
            return Err(shape_err("transpose", format!("expected rank 2, got {:?}", s)));
        }
        let shape = vec![s[1], s[0]];
        Ok(self.push(Op::Transpose, vec![a], shape))
    }

    // ── convolution family ──────────────────────────────────────────────

    fn conv_shapes(
        op: &'static str,
        x: &[usize],
        w: &[usize],
    ) -> Result<(usize, usize, usize, usize, usize, usize, usize)> {
        if x.len() != 4 || w.len() != 4 {
            return Err(shape_err(
                op,
                format!("expected image (b,h,w,ci) and kernel (kh,kw,ci,co), got {:?} and {:?}", x, w),
            ));
        }
        let (b, h, wd, ci) = (x[0], x[1], x[2], x[3]);
        let (kh, kw, wci, co) = (w[0], w[1], w[2], w[3]);
        if kh % 2 == 0 || kw % 2 == 0 {
            return Err(shape_err(op, format!("kernel extents must be odd, got {}x{}", kh, kw)));
        }
        if wci != ci {
            return Err(shape_err(
                op,
                format!("kernel expects {} input channels, image has {}", wci, ci),
            ));
        }
        Ok((b, h, wd, ci, kh, kw, co))
    }

    /// 2-d convolution: image (b,h,w,ci) with kernel (kh,kw,ci,co), stride 1
    /// and zero padding chosen so the spatial size is preserved.
    pub fn conv2d(&mut self, x: NodeId, w: NodeId) -> Result<NodeId> {
        self.check("conv2d", &[x, w])?;
        let (b, h, wd, _ci, _kh, _kw, co) =
            Self::conv_shapes("conv2d", self.shape(x), self.shape(w))?;
        Ok(self.push(Op::Conv2d, vec![x, w], vec![b, h, wd, co]))
    }

    /// Adjoint of `conv2d` with respect to the image: takes the output
    /// cotangent (b,h,w,co) and the kernel, returns (b,h,w,ci).
    pub fn conv2d_input_grad(&mut self, gy: NodeId, w: NodeId) -> Result<NodeId> {
        self.check("conv2d_input_grad", &[gy, w])?;
        let (sg, sw) = (self.shape(gy), self.shape(w));
        if sg.len() != 4 || sw.len() != 4 {
            return Err(shape_err(
                "conv2d_input_grad",
                format!("expected rank-4 inputs, got {:?} and {:?}", sg, sw),
            ));
        }
        if sw[0] % 2 == 0 || sw[1] % 2 == 0 {
            return Err(shape_err(
                "conv2d_input_grad",
                format!("kernel extents must be odd, got {}x{}", sw[0], sw[1]),
            ));
        }
        if sg[3] != sw[3] {
            return Err(shape_err(
                "conv2d_input_grad",
                format!("cotangent channels {} do not match kernel output channels {}", sg[3], sw[3]),
            ));
        }
        let shape = vec![sg[0], sg[1], sg[2], sw[2]];
        Ok(self.push(Op::Conv2dInputGrad, vec![gy, w], shape))
    }

    /// Adjoint of `conv2d` with respect to the kernel: takes the image
    /// (b,h,w,ci) and the output cotangent (b,h,w,co), returns
    /// (kh,kw,ci,co).
    pub fn conv2d_weight_grad(
        &mut self,
        x: NodeId,
        gy: NodeId,
        kh: usize,
        kw: usize,
    ) -> Result<NodeId> {
        self.check("conv2d_weight_grad", &[x, gy])?;
        let (sx, sg) = (self.shape(x), self.shape(gy));
        if sx.len() != 4 || sg.len() != 4 {
            return Err(shape_err(
                "conv2d_weight_grad",
                format!("expected rank-4 inputs, got {:?} and {:?}", sx, sg),
            ));
        }
        if kh % 2 == 0 || kw % 2 == 0 {
            return Err(shape_err(
                "conv2d_weight_grad",
                format!("kernel extents must be odd, got {}x{}", kh, kw),
            ));
        }
        if sx[0] != sg[0] || sx[1] != sg[1] || sx[2] != sg[2] {
            return Err(shape_err(
                "conv2d_weight_grad",
                format!("image {:?} and cotangent {:?} disagree on batch or spatial extents", sx, sg),
            ));
        }
        let shape = vec![kh, kw, sx[3], sg[3]];
        Ok(self.push(Op::Conv2dWeightGrad { kh, kw }, vec![x, gy], shape))
    }

    // ── pooling ─────────────────────────────────────────────────────────

    /// 2x2 stride-2 max pooling with ceil-mode windows: odd trailing rows
    /// or columns form smaller windows instead of being dropped, so
    /// repeated pooling always reaches 1x1. Ties select the first element
    /// in row-major window order.
    pub fn max_pool2(&mut self, x: NodeId) -> Result<NodeId> {
        self.check("max_pool2", &[x])?;
        let s = self.shape(x);
        if s.len() != 4 {
            return Err(shape_err("max_pool2", format!("expected (b,h,w,c), got {:?}", s)));
        }
        let shape = vec![s[0], ceil_half(s[1]), ceil_half(s[2]), s[3]];
        Ok(self.push(Op::MaxPool2, vec![x], shape))
    }

    /// Scatters pooled-space values back to the argmax positions of `x`.
    pub fn max_pool_vjp(&mut self, x: NodeId, g: NodeId) -> Result<NodeId> {
        self.check("max_pool_vjp", &[x, g])?;
        let (sx, sg) = (self.shape(x), self.shape(g));
        let want = vec![sx[0], ceil_half(sx[1]), ceil_half(sx[2]), sx[3]];
        if sx.len() != 4 || sg != want.as_slice() {
            return Err(shape_err(
                "max_pool_vjp",
                format!("image {:?} implies pooled shape {:?}, got {:?}", sx, want, sg),
            ));
        }
        let shape = sx.to_vec();
        Ok(self.push(Op::MaxPoolVjp, vec![x, g], shape))
    }

    /// Gathers values of `z` at the argmax positions of `x`; the pooled
    /// counterpart of `max_pool_vjp`.
    pub fn max_pool_sel(&mut self, x: NodeId, z: NodeId) -> Result<NodeId> {
        self.check("max_pool_sel", &[x, z])?;
        let (sx, sz) = (self.shape(x), self.shape(z));
        if sx.len() != 4 || sx != sz {
            return Err(shape_err(
                "max_pool_sel",
                format!("selector {:?} and values {:?} must share a rank-4 shape", sx, sz),
            ));
        }
        let shape = vec![sx[0], ceil_half(sx[1]), ceil_half(sx[2]), sx[3]];
        Ok(self.push(Op::MaxPoolSel, vec![x, z], shape))
    }

    // ── nonlinearities ──────────────────────────────────────────────────

    fn unary(&mut self, op: Op, name: &'static str, x: NodeId) -> Result<NodeId> {
        self.check(name, &[x])?;
        let shape = self.shape(x).to_vec();
        Ok(self.push(op, vec![x], shape))
    }

    pub fn relu(&mut self, x: NodeId) -> Result<NodeId> {
        self.unary(Op::Relu, "relu", x)
    }

    pub fn step(&mut self, x: NodeId) -> Result<NodeId> {
        self.unary(Op::Step, "step", x)
    }

    pub fn sign(&mut self, x: NodeId) -> Result<NodeId> {
        self.unary(Op::Sign, "sign", x)
    }

    pub fn abs(&mut self, x: NodeId) -> Result<NodeId> {
        self.unary(Op::Abs, "abs", x)
    }

    pub fn sigmoid(&mut self, x: NodeId) -> Result<NodeId> {
        self.unary(Op::Sigmoid, "sigmoid", x)
    }

    /// Reciprocal square root. Evaluation fails if the input is not
    /// strictly positive.
    pub fn rsqrt(&mut self, x: NodeId) -> Result<NodeId> {
        self.unary(Op::Rsqrt, "rsqrt", x)
    }

    pub fn detach(&mut self, x: NodeId) -> Result<NodeId> {
        self.unary(Op::Detach, "detach", x)
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, x: NodeId) -> Result<NodeId> {
        self.check("softmax", &[x])?;
        if self.shape(x).is_empty() {
            return Err(shape_err("softmax", "input must have rank >= 1".to_string()));
        }
        let shape = self.shape(x).to_vec();
        Ok(self.push(Op::Softmax, vec![x], shape))
    }

    /// Per-row softmax cross-entropy: logits and targets both (b,n), output
    /// (b,). Targets are expected to be distributions (rows sum to one),
    /// though the op itself only requires matching shapes.
    pub fn softmax_cross_entropy(&mut self, logits: NodeId, targets: NodeId) -> Result<NodeId> {
        self.check("softmax_cross_entropy", &[logits, targets])?;
        let (sl, st) = (self.shape(logits), self.shape(targets));
        if sl.len() != 2 || sl != st {
            return Err(shape_err(
                "softmax_cross_entropy",
                format!("expected matching (b,n) inputs, got {:?} and {:?}", sl, st),
            ));
        }
        let shape = vec![sl[0]];
        Ok(self.push(Op::SoftmaxXent, vec![logits, targets], shape))
    }

    // ── shape plumbing ──────────────────────────────────────────────────

    /// Broadcasts size-1 axes up to `target` (same rank; rank-0 inputs must
    /// be reshaped first).
    pub fn broadcast_to(&mut self, x: NodeId, target: &[usize]) -> Result<NodeId> {
        self.check("broadcast_to", &[x])?;
        let s = self.shape(x);
        if s == target {
            return Ok(x);
        }
        if s.len() != target.len()
            || s.iter().zip(target).any(|(&a, &t)| a != t && a != 1)
        {
            return Err(shape_err(
                "broadcast_to",
                format!("cannot broadcast {:?} to {:?}", s, target),
            ));
        }
        Ok(self.push(Op::BroadcastTo, vec![x], target.to_vec()))
    }

    /// Sums axes down to `target` (same rank, target axes are 1 where they
    /// shrink). The adjoint of `broadcast_to`.
    pub fn sum_to(&mut self, x: NodeId, target: &[usize]) -> Result<NodeId> {
        self.check("sum_to", &[x])?;
        let s = self.shape(x);
        if s == target {
            return Ok(x);
        }
        if s.len() != target.len()
            || s.iter().zip(target).any(|(&a, &t)| a != t && t != 1)
        {
            return Err(shape_err(
                "sum_to",
                format!("cannot sum {:?} down to {:?}", s, target),
            ));
        }
        Ok(self.push(Op::SumTo, vec![x], target.to_vec()))
    }

    pub fn reshape(&mut self, x: NodeId, target: &[usize]) -> Result<NodeId> {
        self.check("reshape", &[x])?;
        let s = self.shape(x);
        let (have, want): (usize, usize) = (s.iter().product(), target.iter().product());
        if have != want {
            return Err(shape_err(
                "reshape",
                format!("element count mismatch: {:?} -> {:?}", s, target),
            ));
        }
        if s == target {
            return Ok(x);
        }
        Ok(self.push(Op::Reshape, vec![x], target.to_vec()))
    }

    pub fn concat(&mut self, parts: &[NodeId], axis: usize) -> Result<NodeId> {
        self.check("concat", parts)?;
        if parts.is_empty() {
            return Err(shape_err("concat", "no inputs".to_string()));
        }
        let first = self.shape(parts[0]).to_vec();
        if axis >= first.len() {
            return Err(shape_err(
                "concat",
                format!("axis {} out of range for rank {}", axis, first.len()),
            ));
        }
        let mut total = 0usize;
        for &p in parts {
            let s = self.shape(p);
            if s.len() != first.len()
                || s.iter().zip(&first).enumerate().any(|(i, (&a, &b))| i != axis && a != b)
            {
                return Err(shape_err(
                    "concat",
                    format!("input shape {:?} incompatible with {:?} along axis {}", s, first, axis),
                ));
            }
            total += s[axis];
        }
        let mut shape = first;
        shape[axis] = total;
        Ok(self.push(Op::Concat { axis }, parts.to_vec(), shape))
    }

    pub fn slice(&mut self, x: NodeId, axis: usize, start: usize, len: usize) -> Result<NodeId> {
        self.check("slice", &[x])?;
        let s = self.shape(x);
        if axis >= s.len() || start + len > s[axis] || len == 0 {
            return Err(shape_err(
                "slice",
                format!("range {}..{} on axis {} of {:?}", start, start + len, axis, s),
            ));
        }
        let mut shape = s.to_vec();
        shape[axis] = len;
        Ok(self.push(Op::Slice { axis, start, len }, vec![x], shape))
    }

    /// Zero padding along one axis; the adjoint of `slice`.
    pub fn pad(&mut self, x: NodeId, axis: usize, before: usize, after: usize) -> Result<NodeId> {
        self.check("pad", &[x])?;
        let s = self.shape(x);
        if axis >= s.len() {
            return Err(shape_err("pad", format!("axis {} out of range for {:?}", axis, s)));
        }
        let mut shape = s.to_vec();
        shape[axis] += before + after;
        Ok(self.push(Op::Pad { axis, before }, vec![x], shape))
    }

    // ── spatial resampling ──────────────────────────────────────────────

    /// Nearest-neighbour 2x upsampling of an NHWC tensor.
    pub fn upsample2(&mut self, x: NodeId) -> Result<NodeId> {
        self.check("upsample2", &[x])?;
        let s = self.shape(x);
        if s.len() != 4 {
            return Err(shape_err("upsample2", format!("expected (b,h,w,c), got {:?}", s)));
        }
        let shape = vec![s[0], s[1] * 2, s[2] * 2, s[3]];
        Ok(self.push(Op::Upsample2, vec![x], shape))
    }

    /// Sums 2x2 blocks; requires even spatial extents. The adjoint of
    /// `upsample2`.
    pub fn sum_pool2(&mut self, x: NodeId) -> Result<NodeId> {
        self.check("sum_pool2", &[x])?;
        let s = self.shape(x);
        if s.len() != 4 || s[1] % 2 != 0 || s[2] % 2 != 0 {
            return Err(shape_err(
                "sum_pool2",
                format!("expected (b,2h,2w,c), got {:?}", s),
            ));
        }
        let shape = vec![s[0], s[1] / 2, s[2] / 2, s[3]];
        Ok(self.push(Op::SumPool2, vec![x], shape))
    }

    /// Area-weighted resampling of an NHWC tensor to a new spatial size.
    /// Each output pixel is the average of the input region it covers, so
    /// the map is linear in the input.
    pub fn resize_area(&mut self, x: NodeId, oh: usize, ow: usize) -> Result<NodeId> {
        self.check("resize_area", &[x])?;
        let s = self.shape(x);
        if s.len() != 4 || oh == 0 || ow == 0 {
            return Err(shape_err(
                "resize_area",
                format!("expected (b,h,w,c) and positive target, got {:?} -> {}x{}", s, oh, ow),
            ));
        }
        let shape = vec![s[0], oh, ow, s[3]];
        Ok(self.push(Op::ResizeArea, vec![x], shape))
    }

    /// Transpose of the `resize_area` weight matrix: maps a cotangent on
    /// the (oh,ow) grid back to the (h,w) grid.
    pub fn resize_area_t(&mut self, g: NodeId, h: usize, w: usize) -> Result<NodeId> {
        self.check("resize_area_t", &[g])?;
        let s = self.shape(g);
        if s.len() != 4 || h == 0 || w == 0 {
            return Err(shape_err(
                "resize_area_t",
                format!("expected (b,oh,ow,c) and positive target, got {:?} -> {}x{}", s, h, w),
            ));
        }
        let shape = vec![s[0], h, w, s[3]];
        Ok(self.push(Op::ResizeAreaT, vec![g], shape))
    }

    // ── composite builders ──────────────────────────────────────────────

    /// Sum of all elements as a rank-0 scalar.
    pub fn reduce_sum(&mut self, x: NodeId) -> Result<NodeId> {
        let ones = vec![1usize; self.shape(x).len()];
        let summed = self.sum_to(x, &ones)?;
        self.reshape(summed, &[])
    }

    /// Mean of all elements as a rank-0 scalar.
    pub fn reduce_mean(&mut self, x: NodeId) -> Result<NodeId> {
        let n: usize = self.shape(x).iter().product::<usize>().max(1);
        let total = self.reduce_sum(x)?;
        self.scalar_mul(total, 1.0 / n as f64)
    }

    /// Mean squared error between two same-shaped tensors, as a scalar.
    pub fn mse(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err(
                "mse",
                format!("shape mismatch: {:?} vs {:?}", self.shape(a), self.shape(b)),
            ));
        }
        let d = self.sub(a, b)?;
        let sq = self.mul(d, d)?;
        self.reduce_mean(sq)
    }

    /// Global average pooling: (b,h,w,c) -> (b,1,1,c).
    pub fn global_avg_pool(&mut self, x: NodeId) -> Result<NodeId> {
        let s = self.shape(x);
        if s.len() != 4 {
            return Err(shape_err(
                "global_avg_pool",
                format!("expected (b,h,w,c), got {:?}", s),
            ));
        }
        let (b, h, w, c) = (s[0], s[1], s[2], s[3]);
        let summed = self.sum_to(x, &[b, 1, 1, c])?;
        self.scalar_mul(summed, 1.0 / (h * w) as f64)
    }

    /// Multiplies an NHWC feature map by per-channel gates (b,1,1,c).
    pub fn channel_mul(&mut self, x: NodeId, gates: NodeId) -> Result<NodeId> {
        let (sx, sg) = (self.shape(x).to_vec(), self.shape(gates));
        if sx.len() != 4 || sg.len() != 4 || sg[0] != sx[0] || sg[1] != 1 || sg[2] != 1 || sg[3] != sx[3] {
            return Err(shape_err(
                "channel_mul",
                format!("expected (b,h,w,c) x (b,1,1,c), got {:?} x {:?}", sx, sg),
            ));
        }
        self.mul(x, gates)
    }

    /// Batch normalization over an NHWC tensor with per-channel trainable
    /// scale and shift, both shaped (1,1,1,c). Statistics are computed from
    /// the batch itself (there is no running-average mode), which keeps the
    /// whole transform differentiable to any order.
    pub fn batch_norm(
        &mut self,
        x: NodeId,
        scale: NodeId,
        shift: NodeId,
        epsilon: f64,
    ) -> Result<NodeId> {
        let s = self.shape(x).to_vec();
        if s.len() != 4 {
            return Err(shape_err("batch_norm", format!("expected (b,h,w,c), got {:?}", s)));
        }
        let c = s[3];
        let stat_shape = [1usize, 1, 1, c];
        for (name, id) in [("scale", scale), ("shift", shift)] {
            if self.shape(id) != stat_shape {
                return Err(shape_err(
                    "batch_norm",
                    format!("{} must have shape {:?}, got {:?}", name, stat_shape, self.shape(id)),
                ));
            }
        }
        let count = (s[0] * s[1] * s[2]) as f64;
        let sum = self.sum_to(x, &stat_shape)?;
        let mean = self.scalar_mul(sum, 1.0 / count)?;
        let centered = self.sub(x, mean)?;
        let sq = self.mul(centered, centered)?;
        let var_sum = self.sum_to(sq, &stat_shape)?;
        let var = self.scalar_mul(var_sum, 1.0 / count)?;
        let eps = self.constant(Tensor::full(&stat_shape, epsilon));
        let var_eps = self.add(var, eps)?;
        let inv_std = self.rsqrt(var_eps)?;
        let normal = self.mul(centered, inv_std)?;
        let scaled = self.mul(normal, scale)?;
        self.add(scaled, shift)
    }

    /// Flattens (b, ...) to (b, rest).
    pub fn flatten(&mut self, x: NodeId) -> Result<NodeId> {
        let s = self.shape(x);
        if s.is_empty() {
            return Err(shape_err("flatten", "input must have rank >= 1".to_string()));
        }
        let b = s[0];
        let rest: usize = s[1..].iter().product();
        self.reshape(x, &[b, rest])
    }

    /// Multiplies by a fixed dropout mask (entries 0 or 1/(1-rate), built by
    /// the caller from its own RNG). Baking the mask in as a constant keeps
    /// evaluation deterministic and differentiation exact.
    pub fn dropout(&mut self, x: NodeId, mask: Tensor) -> Result<NodeId> {
        if mask.shape() != self.shape(x) {
            return Err(shape_err(
                "dropout",
                format!("mask shape {:?} does not match input {:?}", mask.shape(), self.shape(x)),
            ));
        }
        let m = self.constant(mask);
        self.mul(x, m)
    }

    // ── internal accessors for evaluation and differentiation ──────────

    pub(crate) fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_are_topologically_ordered() {
        let mut g = Graph::new();
        let a = g.param("a", &[2, 2]).unwrap();
        let b = g.param("b", &[2, 2]).unwrap();
        let c = g.add(a, b).unwrap();
        let d = g.mul(c, a).unwrap();
        assert!(a.0 < c.0 && b.0 < c.0 && c.0 < d.0);
    }

    #[test]
    fn param_redeclaration_same_shape_is_shared() {
        let mut g = Graph::new();
        let a = g.param("w", &[3]).unwrap();
        let b = g.param("w", &[3]).unwrap();
        assert_eq!(a, b);
        let err = g.param("w", &[4]).unwrap_err();
        assert!(matches!(err, DiffError::ParamShapeConflict { .. }));
    }

    #[test]
    fn shape_errors_surface_at_build_time() {
        let mut g = Graph::new();
        let a = g.param("a", &[2, 3]).unwrap();
        let b = g.param("b", &[4, 5]).unwrap();
        assert!(g.add(a, b).is_err());
        assert!(g.matmul(a, b).is_err());
        let x = g.param("x", &[1, 8, 8, 3]).unwrap();
        let k = g.param("k", &[2, 2, 3, 4]).unwrap(); // even kernel
        assert!(g.conv2d(x, k).is_err());
    }

    #[test]
    fn broadcast_rules() {
        assert_eq!(broadcast_shape("t", &[2, 1, 4], &[2, 3, 1]).unwrap(), vec![2, 3, 4]);
        assert_eq!(broadcast_shape("t", &[], &[5, 2]).unwrap(), vec![5, 2]);
        assert!(broadcast_shape("t", &[2, 3], &[3, 2]).is_err());
        assert!(broadcast_shape("t", &[2, 3], &[2, 3, 1]).is_err());
    }

    #[test]
    fn ceil_mode_pooling_shapes() {
        let mut g = Graph::new();
        let x = g.param("x", &[1, 7, 7, 2]).unwrap();
        let p1 = g.max_pool2(x).unwrap();
        assert_eq!(g.shape(p1), &[1, 4, 4, 2]);
        let p2 = g.max_pool2(p1).unwrap();
        assert_eq!(g.shape(p2), &[1, 2, 2, 2]);
        let p3 = g.max_pool2(p2).unwrap();
        assert_eq!(g.shape(p3), &[1, 1, 1, 2]);
    }

    #[test]
    fn conv_same_padding_preserves_spatial_shape() {
        let mut g = Graph::new();
        let x = g.param("x", &[2, 9, 11, 3]).unwrap();
        let k = g.param("k", &[3, 5, 3, 8]).unwrap();
        let y = g.conv2d(x, k).unwrap();
        assert_eq!(g.shape(y), &[2, 9, 11, 8]);
    }
}
