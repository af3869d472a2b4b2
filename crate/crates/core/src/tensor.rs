//! Dense row-major tensor value type.
//!
//! Image features use an H x W x C layout with the channel axis fastest, so a
//! spectral (last-axis) difference walks contiguous memory. `Tensor` itself is
//! a plain value; gradient bookkeeping lives on the tape.

use crate::scalar::Scalar;

/// Dense N-dimensional array, row-major, last axis fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T: Scalar> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Self {
        assert!(
            shape.iter().all(|&e| e > 0),
            "tensor extents must be positive, got {shape:?}"
        );
        assert_eq!(
            data.len(),
            shape.iter().product::<usize>(),
            "data length {} does not match shape {:?}",
            data.len(),
            shape
        );
        Tensor { shape, data }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor::new(shape, vec![T::zero(); n])
    }

    pub fn full(shape: Vec<usize>, value: T) -> Self {
        let n = shape.iter().product();
        Tensor::new(shape, vec![value; n])
    }

    pub fn scalar(value: T) -> Self {
        Tensor::new(vec![1], vec![value])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        false // extents are positive by construction
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// Value at a multi-index.
    pub fn at(&self, index: &[usize]) -> T {
        self.data[self.offset(index)]
    }

    pub fn at_mut(&mut self, index: &[usize]) -> &mut T {
        let off = self.offset(index);
        &mut self.data[off]
    }

    fn offset(&self, index: &[usize]) -> usize {
        assert_eq!(index.len(), self.shape.len(), "index rank mismatch");
        let mut off = 0;
        for (axis, (&i, &e)) in index.iter().zip(&self.shape).enumerate() {
            assert!(i < e, "index {i} out of bounds on axis {axis} (extent {e})");
            off = off * e + i;
        }
        off
    }

    /// Same data, new shape with identical element count.
    pub fn reshape(mut self, shape: Vec<usize>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            self.data.len(),
            "reshape {:?} -> {:?} changes element count",
            self.shape,
            shape
        );
        assert!(shape.iter().all(|&e| e > 0));
        self.shape = shape;
        self
    }

    pub fn iter(&self) -> std::slice::Iter<'_, T> {
        self.data.iter()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Map to a different scalar type through f64.
    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor::new(
            self.shape.clone(),
            self.data.iter().map(|&v| U::from_f64_lossy(v.into_f64())).collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indexing_is_row_major_channel_fastest() {
        let t = Tensor::new(vec![2, 2, 3], (0..12).map(|v| v as f64).collect());
        assert_eq!(t.at(&[0, 0, 0]), 0.0);
        assert_eq!(t.at(&[0, 0, 2]), 2.0);
        assert_eq!(t.at(&[0, 1, 0]), 3.0);
        assert_eq!(t.at(&[1, 0, 0]), 6.0);
        assert_eq!(t.at(&[1, 1, 2]), 11.0);
    }

    #[test]
    #[should_panic(expected = "does not match shape")]
    fn rejects_bad_data_length() {
        let _ = Tensor::new(vec![2, 2], vec![1.0f64; 3]);
    }

    #[test]
    #[should_panic(expected = "positive")]
    fn rejects_zero_extent() {
        let _ = Tensor::<f64>::zeros(vec![2, 0]);
    }
}
