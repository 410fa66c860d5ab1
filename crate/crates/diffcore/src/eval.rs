//! Graph evaluation.
//!
//! Nodes are computed in id order (which is topological by construction),
//! restricted to the ancestors of the requested roots. Shared subgraphs are
//! computed once. Every kernel result is checked for NaN/infinity so a
//! numerical blow-up is reported at the node that produced it instead of
//! surfacing later as a corrupted loss.

use std::sync::Arc;

use crate::error::{DiffError, Result};
use crate::graph::{Graph, NodeId, Op};
use crate::kernels;
use crate::paramset::ParamSet;
use crate::tensor::Tensor;

impl Graph {
    /// Evaluates a single node. See [`Graph::eval_many`].
    pub fn eval(&self, root: NodeId, bindings: &ParamSet) -> Result<Tensor> {
        Ok(self.eval_many(&[root], bindings)?.pop().expect("one root"))
    }

    /// Evaluates several roots in one pass, sharing common subgraphs.
    ///
    /// `bindings` supplies the value of every `param` leaf reachable from
    /// the roots; extra bindings are ignored. Binding shapes must match the
    /// declared parameter shapes exactly.
    pub fn eval_many(&self, roots: &[NodeId], bindings: &ParamSet) -> Result<Vec<Tensor>> {
        for &r in roots {
            if r.index() >= self.node_count() {
                return Err(DiffError::BadNodeId(r.index()));
            }
        }

        // Mark the ancestors of the roots.
        let mut needed = vec![false; self.node_count()];
        let mut stack: Vec<usize> = roots.iter().map(|r| r.index()).collect();
        while let Some(i) = stack.pop() {
            if needed[i] {
                continue;
            }
            needed[i] = true;
            for input in &self.node(NodeId(i)).inputs {
                if !needed[input.index()] {
                    stack.push(input.index());
                }
            }
        }

        let mut values: Vec<Option<Arc<Tensor>>> = vec![None; self.node_count()];
        for i in 0..self.node_count() {
            if !needed[i] {
                continue;
            }
            let value = self.eval_node(NodeId(i), &values, bindings)?;
            if value.data().iter().any(|v| !v.is_finite()) {
                return Err(DiffError::NonFinite {
                    node: i,
                    op: self.op_name(NodeId(i)),
                });
            }
            values[i] = Some(value);
        }

        Ok(roots
            .iter()
            .map(|r| values[r.index()].as_ref().expect("root computed").as_ref().clone())
            .collect())
    }

    fn eval_node(
        &self,
        id: NodeId,
        values: &[Option<Arc<Tensor>>],
        bindings: &ParamSet,
    ) -> Result<Arc<Tensor>> {
        let node = self.node(id);
        let shape = &node.shape;
        let input = |k: usize| -> &Tensor {
            values[node.inputs[k].index()]
                .as_ref()
                .expect("inputs precede node in id order")
        };
        let wrap = |data: Vec<f64>| -> Result<Arc<Tensor>> {
            // Kernels produce exactly the inferred element count; the
            // finiteness check happens in the caller.
            Ok(Arc::new(Tensor::raw(shape.clone(), data)))
        };

        match &node.op {
            Op::Param(name) => {
                let bound = bindings
                    .get(name)
                    .ok_or_else(|| DiffError::MissingBinding(name.clone()))?;
                if bound.shape() != shape.as_slice() {
                    return Err(DiffError::BindingShape {
                        name: name.clone(),
                        got: bound.shape().to_vec(),
                        want: shape.clone(),
                    });
                }
                Ok(Arc::new(bound.clone()))
            }
            Op::Const(t) => Ok(Arc::clone(t)),
            Op::Add => wrap(kernels::broadcast_binary(input(0), input(1), shape, |a, b| a + b)),
            Op::Sub => wrap(kernels::broadcast_binary(input(0), input(1), shape, |a, b| a - b)),
            Op::Mul => wrap(kernels::broadcast_binary(input(0), input(1), shape, |a, b| a * b)),
            Op::ScalarMul(c) => {
                let c = *c;
                wrap(input(0).data().iter().map(|&v| v * c).collect())
            }
            Op::MatMul => wrap(kernels::matmul(input(0), input(1))),
            Op::Transpose => wrap(kernels::transpose(input(0))),
            Op::Conv2d => wrap(kernels::conv2d(input(0), input(1))),
            Op::Conv2dInputGrad => wrap(kernels::conv2d_input_grad(input(0), input(1))),
            Op::Conv2dWeightGrad { kh, kw } => {
                wrap(kernels::conv2d_weight_grad(input(0), input(1), *kh, *kw))
            }
            Op::MaxPool2 => wrap(kernels::max_pool2(input(0))),
            Op::MaxPoolVjp => wrap(kernels::max_pool_vjp(input(0), input(1))),
            Op::MaxPoolSel => wrap(kernels::max_pool_sel(input(0), input(1))),
            Op::Relu => wrap(input(0).data().iter().map(|&v| v.max(0.0)).collect()),
            Op::Step => wrap(
                input(0)
                    .data()
                    .iter()
                    .map(|&v| if v > 0.0 { 1.0 } else { 0.0 })
                    .collect(),
            ),
            Op::Sign => wrap(
                input(0)
                    .data()
                    .iter()
                    .map(|&v| {
                        if v > 0.0 {
                            1.0
                        } else if v < 0.0 {
                            -1.0
                        } else {
                            0.0
                        }
                    })
                    .collect(),
            ),
            Op::Abs => wrap(input(0).data().iter().map(|&v| v.abs()).collect()),
            Op::Sigmoid => wrap(
                input(0)
                    .data()
                    .iter()
                    .map(|&v| {
                        // Evaluate through exp of a non-positive argument on
                        // both branches so neither tail overflows.
                        if v >= 0.0 {
                            1.0 / (1.0 + (-v).exp())
                        } else {
                            let e = v.exp();
                            e / (1.0 + e)
                        }
                    })
                    .collect(),
            ),
            Op::Rsqrt => wrap(input(0).data().iter().map(|&v| 1.0 / v.sqrt()).collect()),
            Op::Softmax => wrap(kernels::softmax(input(0))),
            Op::SoftmaxXent => wrap(kernels::softmax_cross_entropy(input(0), input(1))),
            Op::BroadcastTo => wrap(kernels::broadcast_to(input(0), shape)),
            Op::SumTo => wrap(kernels::sum_to(input(0), shape)),
            Op::Reshape => wrap(input(0).data().to_vec()),
            Op::Concat { axis } => {
                let parts: Vec<&Tensor> = (0..node.inputs.len()).map(input).collect();
                wrap(kernels::concat(&parts, *axis, shape))
            }
            Op::Slice { axis, start, len } => wrap(kernels::slice(input(0), *axis, *start, *len)),
            Op::Pad { axis, before } => wrap(kernels::pad(input(0), *axis, *before, shape)),
            Op::Upsample2 => wrap(kernels::upsample2(input(0))),
            Op::SumPool2 => wrap(kernels::sum_pool2(input(0))),
            Op::ResizeArea => wrap(kernels::resize_area(input(0), shape[1], shape[2])),
            Op::ResizeAreaT => wrap(kernels::resize_area_t(input(0), shape[1], shape[2])),
            Op::Detach => Ok(Arc::clone(
                values[node.inputs[0].index()].as_ref().expect("input computed"),
            )),
        }
    }
}
