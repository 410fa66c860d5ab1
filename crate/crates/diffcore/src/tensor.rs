use crate::error::{DiffError, Result};

/// Dense row-major tensor of `f64` values.
///
/// The shape is a list of extents; a rank-0 tensor (empty shape) is a
/// scalar holding exactly one element. All arithmetic in the engine is done
/// in 64-bit floats so that nested gradients keep enough precision to be
/// checked against finite differences.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    requires_grad: bool,
}

impl Tensor {
    /// Builds a tensor from a shape and row-major data.
    ///
    /// Fails if the element count does not match the shape or if any value
    /// is NaN or infinite.
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(DiffError::TensorSize {
                shape: shape.to_vec(),
                expected,
                got: data.len(),
            });
        }
        if let Some(bad) = data.iter().position(|v| !v.is_finite()) {
            return Err(DiffError::TensorNonFinite(bad));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
            requires_grad: false,
        })
    }

    /// Internal constructor for kernel outputs whose element count is
    /// guaranteed by shape inference. Finiteness is checked by the
    /// evaluator, which can name the offending node.
    pub(crate) fn raw(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor {
            shape,
            data,
            requires_grad: false,
        }
    }

    /// Rank-0 tensor holding a single value.
    pub fn scalar(value: f64) -> Self {
        Tensor::new(&[], vec![value]).expect("scalar must be finite")
    }

    /// Tensor of zeros.
    pub fn zeros(shape: &[usize]) -> Self {
        let n: usize = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; n],
            requires_grad: false,
        }
    }

    /// Tensor of ones.
    pub fn ones(shape: &[usize]) -> Self {
        Tensor::full(shape, 1.0)
    }

    /// Tensor filled with a constant.
    pub fn full(shape: &[usize], value: f64) -> Self {
        let n: usize = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; n],
            requires_grad: false,
        }
    }

    /// Tensor whose linear index `i` holds `f(i)`.
    pub fn from_fn(shape: &[usize], f: impl FnMut(usize) -> f64) -> Result<Self> {
        let n: usize = shape.iter().product();
        Tensor::new(shape, (0..n).map(f).collect())
    }

    /// Marks whether this tensor is a trainable leaf. The flag is carried
    /// through parameter sets; it does not change arithmetic.
    pub fn with_requires_grad(mut self, flag: bool) -> Self {
        self.requires_grad = flag;
        self
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_scalar(&self) -> bool {
        self.shape.is_empty()
    }

    /// The single value of a rank-0 (or one-element) tensor.
    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.data.len(), 1, "item() on tensor with {} elements", self.data.len());
        self.data[0]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Row-major strides for this shape.
    pub fn strides(&self) -> Vec<usize> {
        strides_of(&self.shape)
    }

    /// Value at a 4-d index. Used by image-shaped tensors laid out as
    /// (batch, height, width, channels).
    pub fn at4(&self, b: usize, y: usize, x: usize, c: usize) -> f64 {
        debug_assert_eq!(self.rank(), 4);
        let (h, w, ch) = (self.shape[1], self.shape[2], self.shape[3]);
        self.data[((b * h + y) * w + x) * ch + c]
    }

    /// Reinterprets the data under a new shape with the same element count.
    pub fn reshaped(&self, shape: &[usize]) -> Result<Tensor> {
        Tensor::new(shape, self.data.clone())
    }

    /// Largest absolute element, zero for empty tensors.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Row-major strides for a shape.
pub fn strides_of(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1usize; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * shape[i + 1];
    }
    strides
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn size_mismatch_is_rejected() {
        let err = Tensor::new(&[2, 3], vec![1.0; 5]).unwrap_err();
        assert!(matches!(err, DiffError::TensorSize { .. }));
    }

    #[test]
    fn non_finite_is_rejected() {
        let err = Tensor::new(&[2], vec![1.0, f64::NAN]).unwrap_err();
        assert!(matches!(err, DiffError::TensorNonFinite(1)));
    }

    #[test]
    fn scalar_has_empty_shape_and_one_element() {
        let s = Tensor::scalar(3.5);
        assert_eq!(s.shape(), &[] as &[usize]);
        assert_eq!(s.len(), 1);
        assert_eq!(s.item(), 3.5);
    }

    #[test]
    fn strides_are_row_major() {
        let t = Tensor::zeros(&[2, 3, 4]);
        assert_eq!(t.strides(), vec![12, 4, 1]);
    }

    #[test]
    fn at4_indexes_row_major_nhwc() {
        let t = Tensor::from_fn(&[2, 3, 4, 5], |i| i as f64).unwrap();
        assert_eq!(t.at4(1, 2, 3, 4), (((1 * 3 + 2) * 4 + 3) * 5 + 4) as f64);
    }
}
