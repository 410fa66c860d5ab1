//! Reverse-mode automatic differentiation on dense `f64` tensors.
//!
//! The engine is built around three ideas:
//!
//! * **Append-only graphs.** A [`Graph`] is an arena of nodes whose ids are
//!   topologically ordered by construction. Shapes are inferred when nodes
//!   are created, so wiring mistakes fail early with a structured error.
//! * **Differentiation by graph extension.** [`Graph::grad`] appends
//!   ordinary nodes computing vector-Jacobian products and hands back their
//!   ids. Since the result is just more graph, gradients can be composed
//!   into new expressions and differentiated again, which is what
//!   gradient-through-gradient training procedures need.
//! * **Deterministic scalar kernels.** Every kernel iterates in a fixed
//!   order over plain `f64` buffers. Two runs over the same graph and
//!   bindings produce bit-identical results.
//!
//! [`finite_difference_gradient`] provides an independent derivative oracle
//! for testing the symbolic path.

mod error;
mod eval;
mod fd;
mod grad;
pub mod kernels;
mod graph;
mod paramset;
mod tensor;

pub use error::{DiffError, Result};
pub use fd::{finite_difference_gradient, max_relative_error};
pub use grad::gradient;
pub use graph::{Graph, NodeId};
pub use kernels::resize_area_tensor;
pub use paramset::ParamSet;
pub use tensor::Tensor;
