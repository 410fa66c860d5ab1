use thiserror::Error;

/// Errors produced while constructing or evaluating computation graphs.
#[derive(Debug, Error)]
pub enum DiffError {
    /// A tensor constructor was handed inconsistent shape/data.
    #[error("tensor shape {shape:?} implies {expected} elements, got {got}")]
    TensorSize {
        shape: Vec<usize>,
        expected: usize,
        got: usize,
    },

    /// A tensor constructor was handed NaN or infinite data.
    #[error("tensor data contains a non-finite value at index {0}")]
    TensorNonFinite(usize),

    /// Two shapes that must agree for an operation do not.
    #[error("{op}: {detail}")]
    Shape { op: &'static str, detail: String },

    /// A kernel produced NaN or an infinity during evaluation.
    #[error("node {node} ({op}) produced a non-finite value")]
    NonFinite { node: usize, op: &'static str },

    /// Evaluation was asked for a parameter that has no binding.
    #[error("no binding supplied for parameter '{0}'")]
    MissingBinding(String),

    /// A binding exists but its shape disagrees with the declared parameter.
    #[error("binding for '{name}' has shape {got:?}, parameter was declared with shape {want:?}")]
    BindingShape {
        name: String,
        got: Vec<usize>,
        want: Vec<usize>,
    },

    /// Differentiation roots must be scalars.
    #[error("gradient root must be a scalar, got shape {0:?}")]
    NonScalarRoot(Vec<usize>),

    /// The same parameter name was declared twice with different shapes.
    #[error("parameter '{name}' already declared with shape {old:?}, redeclared with {new:?}")]
    ParamShapeConflict {
        name: String,
        old: Vec<usize>,
        new: Vec<usize>,
    },

    /// A parameter set rejected a duplicate name.
    #[error("duplicate parameter name '{0}'")]
    DuplicateName(String),

    /// A parameter lookup failed.
    #[error("parameter set has no entry named '{0}'")]
    UnknownParam(String),

    /// Two parameter sets that must be congruent (same names, order and
    /// shapes) are not.
    #[error("parameter sets are not congruent: {0}")]
    NotCongruent(String),

    /// Finite differencing was configured with a non-positive step.
    #[error("finite-difference step must be positive and finite, got {0}")]
    BadStep(f64),

    /// A node id referenced a different graph or was out of range.
    #[error("node id {0} is out of range for this graph")]
    BadNodeId(usize),
}

pub type Result<T> = std::result::Result<T, DiffError>;
