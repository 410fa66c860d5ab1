//! Symbolic reverse-mode differentiation.
//!
//! [`Graph::grad`] appends, for a scalar root, the nodes that compute its
//! gradient with respect to a set of existing nodes, and returns their ids.
//! Because the appended nodes are ordinary ops, the returned gradients can
//! be fed back into further graph construction and differentiated again.
//! That is how losses of gradient-updated parameters get exact second-order
//! derivatives.
//!
//! Ops with measure-zero kinks (`relu`, max pooling) differentiate to their
//! almost-everywhere derivative; `step`, `sign` and pooling selections are
//! treated as locally constant, so their contribution is zero.

use crate::error::{DiffError, Result};
use crate::graph::{Graph, NodeId, Op};
use crate::paramset::ParamSet;
use crate::tensor::Tensor;

impl Graph {
    /// Appends gradient nodes of scalar `root` with respect to each node of
    /// `wrt`, returning one id per entry in the same order.
    ///
    /// Nodes that do not influence the root get a zero constant of their
    /// shape. `detach` nodes pass values forward but stop gradients.
    pub fn grad(&mut self, root: NodeId, wrt: &[NodeId]) -> Result<Vec<NodeId>> {
        if root.index() >= self.node_count() {
            return Err(DiffError::BadNodeId(root.index()));
        }
        for w in wrt {
            if w.index() >= self.node_count() {
                return Err(DiffError::BadNodeId(w.index()));
            }
        }
        if !self.shape(root).is_empty() {
            return Err(DiffError::NonScalarRoot(self.shape(root).to_vec()));
        }

        // Adjoint slots for every node that existed when differentiation
        // started. Ancestors of the root all have ids <= root, because
        // inputs always precede their consumers.
        let limit = root.index() + 1;
        let mut adjoint: Vec<Option<NodeId>> = vec![None; limit];
        adjoint[root.index()] = Some(self.scalar(1.0));

        for i in (0..limit).rev() {
            let Some(gout) = adjoint[i] else { continue };
            let node = self.node(NodeId(i));
            let op = node.op.clone();
            let inputs = node.inputs.clone();
            let contributions = self.vjp(NodeId(i), &op, &inputs, gout)?;
            for (input, contrib) in contributions {
                let slot = &mut adjoint[input.index()];
                *slot = Some(match *slot {
                    Some(existing) => self.add(existing, contrib)?,
                    None => contrib,
                });
            }
        }

        let mut out = Vec::with_capacity(wrt.len());
        for w in wrt {
            let id = match adjoint.get(w.index()).copied().flatten() {
                Some(g) => g,
                None => {
                    let shape = self.shape(*w).to_vec();
                    self.constant(Tensor::zeros(&shape))
                }
            };
            out.push(id);
        }
        Ok(out)
    }

    /// Vector-Jacobian product of one node: pairs of (input, contribution).
    fn vjp(
        &mut self,
        node: NodeId,
        op: &Op,
        inputs: &[NodeId],
        gout: NodeId,
    ) -> Result<Vec<(NodeId, NodeId)>> {
        // Reduces a cotangent back to an operand's shape after implicit
        // broadcasting in elementwise ops.
        macro_rules! fit {
            ($g:expr, $operand:expr) => {{
                let target = self.shape($operand).to_vec();
                if self.shape($g) == target.as_slice() {
                    $g
                } else if target.is_empty() {
                    let flat: Vec<usize> = vec![1; self.shape($g).len()];
                    let summed = self.sum_to($g, &flat)?;
                    self.reshape(summed, &[])?
                } else {
                    self.sum_to($g, &target)?
                }
            }};
        }

        Ok(match op {
            Op::Param(_) | Op::Const(_) | Op::Step | Op::Sign | Op::Detach => vec![],

            Op::Add => {
                let ga = fit!(gout, inputs[0]);
                let gb = fit!(gout, inputs[1]);
                vec![(inputs[0], ga), (inputs[1], gb)]
            }
            Op::Sub => {
                let ga = fit!(gout, inputs[0]);
                let neg = self.scalar_mul(gout, -1.0)?;
                let gb = fit!(neg, inputs[1]);
                vec![(inputs[0], ga), (inputs[1], gb)]
            }
            Op::Mul => {
                let ga_full = self.mul(gout, inputs[1])?;
                let gb_full = self.mul(gout, inputs[0])?;
                let ga = fit!(ga_full, inputs[0]);
                let gb = fit!(gb_full, inputs[1]);
                vec![(inputs[0], ga), (inputs[1], gb)]
            }
            Op::ScalarMul(c) => {
                let g = self.scalar_mul(gout, *c)?;
                vec![(inputs[0], g)]
            }

            Op::MatMul => {
                let bt = self.transpose(inputs[1])?;
                let ga = self.matmul(gout, bt)?;
                let at = self.transpose(inputs[0])?;
                let gb = self.matmul(at, gout)?;
                vec![(inputs[0], ga), (inputs[1], gb)]
            }
            Op::Transpose => {
                let g = self.transpose(gout)?;
                vec![(inputs[0], g)]
            }

            Op::Conv2d => {
                let (kh, kw) = {
                    let ks = self.shape(inputs[1]);
                    (ks[0], ks[1])
                };
                let gx = self.conv2d_input_grad(gout, inputs[1])?;
                let gw = self.conv2d_weight_grad(inputs[0], gout, kh, kw)?;
                vec![(inputs[0], gx), (inputs[1], gw)]
            }
            Op::Conv2dInputGrad => {
                // Node z = input_grad(gy, w) is linear in gy and in w:
                // z = sum over taps of gy and w, so its adjoints reuse the
                // same convolution family.
                let (kh, kw) = {
                    let ks = self.shape(inputs[1]);
                    (ks[0], ks[1])
                };
                let g_gy = self.conv2d(gout, inputs[1])?;
                let g_w = self.conv2d_weight_grad(gout, inputs[0], kh, kw)?;
                vec![(inputs[0], g_gy), (inputs[1], g_w)]
            }
            Op::Conv2dWeightGrad { .. } => {
                let g_x = self.conv2d_input_grad(inputs[1], gout)?;
                let g_gy = self.conv2d(inputs[0], gout)?;
                vec![(inputs[0], g_x), (inputs[1], g_gy)]
            }

            Op::MaxPool2 => {
                let g = self.max_pool_vjp(inputs[0], gout)?;
                vec![(inputs[0], g)]
            }
            Op::MaxPoolVjp => {
                // Selection indices come from inputs[0] and are locally
                // constant; only the scattered values inputs[1] carry
                // gradient.
                let g = self.max_pool_sel(inputs[0], gout)?;
                vec![(inputs[1], g)]
            }
            Op::MaxPoolSel => {
                let g = self.max_pool_vjp(inputs[0], gout)?;
                vec![(inputs[1], g)]
            }

            Op::Relu => {
                let s = self.step(inputs[0])?;
                let g = self.mul(gout, s)?;
                vec![(inputs[0], g)]
            }
            Op::Abs => {
                let s = self.sign(inputs[0])?;
                let g = self.mul(gout, s)?;
                vec![(inputs[0], g)]
            }
            Op::Sigmoid => {
                // d sigmoid = s * (1 - s), written in terms of the node's
                // own output so the chain stays differentiable.
                let ones = self.constant(Tensor::ones(self.shape(node)));
                let one_minus = self.sub(ones, node)?;
                let ds = self.mul(node, one_minus)?;
                let g = self.mul(gout, ds)?;
                vec![(inputs[0], g)]
            }
            Op::Rsqrt => {
                // d x^(-1/2) = -1/2 x^(-3/2) = -1/2 r^3.
                let r2 = self.mul(node, node)?;
                let r3 = self.mul(r2, node)?;
                let g = self.mul(gout, r3)?;
                let g = self.scalar_mul(g, -0.5)?;
                vec![(inputs[0], g)]
            }

            Op::Softmax => {
                // g_x = s * (g - sum_last(g * s)), with the row sums
                // broadcast back over the last axis.
                let shape = self.shape(node).to_vec();
                let mut rowsum_shape = shape.clone();
                *rowsum_shape.last_mut().expect("rank >= 1") = 1;
                let gs = self.mul(gout, node)?;
                let rowsum = self.sum_to(gs, &rowsum_shape)?;
                let spread = self.broadcast_to(rowsum, &shape)?;
                let diff = self.sub(gout, spread)?;
                let g = self.mul(node, diff)?;
                vec![(inputs[0], g)]
            }
            Op::SoftmaxXent => {
                // Row loss: l = lse(x) * sum(t) - <t, x>. Exactly:
                //   dl/dx = softmax(x) * sum(t) - t
                //   dl/dt = lse(x) - x
                // lse(x) is recovered through the identity
                // lse(x) = l + <t, x> for distribution rows (sum(t) = 1),
                // which is the supported target contract.
                let (b, n) = {
                    let s = self.shape(inputs[0]);
                    (s[0], s[1])
                };
                let gcol = self.reshape(gout, &[b, 1])?;
                let gfull = self.broadcast_to(gcol, &[b, n])?;

                let sm = self.softmax(inputs[0])?;
                let tsum = self.sum_to(inputs[1], &[b, 1])?;
                let tspread = self.broadcast_to(tsum, &[b, n])?;
                let scaled_sm = self.mul(sm, tspread)?;
                let dlogits = self.sub(scaled_sm, inputs[1])?;
                let gx = self.mul(gfull, dlogits)?;

                let tx = self.mul(inputs[0], inputs[1])?;
                let txsum = self.sum_to(tx, &[b, 1])?;
                let lrow = self.reshape(node, &[b, 1])?;
                let lse = self.add(lrow, txsum)?;
                let lse_spread = self.broadcast_to(lse, &[b, n])?;
                let dtargets = self.sub(lse_spread, inputs[0])?;
                let gt = self.mul(gfull, dtargets)?;

                vec![(inputs[0], gx), (inputs[1], gt)]
            }

            Op::BroadcastTo => {
                let target = self.shape(inputs[0]).to_vec();
                let g = self.sum_to(gout, &target)?;
                vec![(inputs[0], g)]
            }
            Op::SumTo => {
                let target = self.shape(inputs[0]).to_vec();
                let g = self.broadcast_to(gout, &target)?;
                vec![(inputs[0], g)]
            }
            Op::Reshape => {
                let target = self.shape(inputs[0]).to_vec();
                let g = self.reshape(gout, &target)?;
                vec![(inputs[0], g)]
            }
            Op::Concat { axis } => {
                let axis = *axis;
                let mut offset = 0usize;
                let mut out = Vec::with_capacity(inputs.len());
                for &input in inputs {
                    let len = self.shape(input)[axis];
                    let g = self.slice(gout, axis, offset, len)?;
                    out.push((input, g));
                    offset += len;
                }
                out
            }
            Op::Slice { axis, start, len } => {
                let dim = self.shape(inputs[0])[*axis];
                let g = self.pad(gout, *axis, *start, dim - start - len)?;
                vec![(inputs[0], g)]
            }
            Op::Pad { axis, before } => {
                let dim = self.shape(inputs[0])[*axis];
                let g = self.slice(gout, *axis, *before, dim)?;
                vec![(inputs[0], g)]
            }

            Op::Upsample2 => {
                let g = self.sum_pool2(gout)?;
                vec![(inputs[0], g)]
            }
            Op::SumPool2 => {
                let g = self.upsample2(gout)?;
                vec![(inputs[0], g)]
            }
            Op::ResizeArea => {
                let (h, w) = {
                    let s = self.shape(inputs[0]);
                    (s[1], s[2])
                };
                let g = self.resize_area_t(gout, h, w)?;
                vec![(inputs[0], g)]
            }
            Op::ResizeAreaT => {
                let (oh, ow) = {
                    let s = self.shape(inputs[0]);
                    (s[1], s[2])
                };
                let g = self.resize_area(gout, oh, ow)?;
                vec![(inputs[0], g)]
            }
        })
    }

    /// Finds the `param` leaf with the given name, if declared.
    pub fn find_param(&self, name: &str) -> Option<NodeId> {
        (0..self.node_count()).map(NodeId).find(|&id| {
            matches!(&self.node(id).op, Op::Param(n) if n == name)
        })
    }
}

/// Evaluates the gradient of a scalar root with respect to named parameters.
///
/// The result is congruent to `wrt` (same names, order and shapes, taken
/// from `bindings`). Parameters never declared in the graph come back as
/// zeros. The graph itself is left untouched; differentiation happens on a
/// private copy.
pub fn gradient(
    graph: &Graph,
    root: NodeId,
    bindings: &ParamSet,
    wrt: &[&str],
) -> Result<ParamSet> {
    let mut scratch = graph.clone();
    let mut targets = Vec::with_capacity(wrt.len());
    for name in wrt {
        let tensor = bindings.require(name)?;
        let id = match scratch.find_param(name) {
            Some(id) => id,
            // Declaring the missing leaf keeps the bookkeeping uniform; its
            // gradient is a zero tensor of the bound shape.
            None => scratch.param(name, tensor.shape())?,
        };
        targets.push(id);
    }
    let grads = scratch.grad(root, &targets)?;
    let values = scratch.eval_many(&grads, bindings)?;
    let mut out = ParamSet::new();
    for (name, value) in wrt.iter().zip(values) {
        out.insert(*name, value)?;
    }
    Ok(out)
}
