use super::scalar::Scalar;
use crate::error::{Error, Result};

/// Dense row-major tensor.
///
/// `shape` may be empty, which denotes a scalar holding one value.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<S> {
    shape: Vec<usize>,
    values: Vec<S>,
    requires_grad: bool,
    grad: Option<Vec<S>>,
}

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl<S: Scalar> Tensor<S> {
    /// Builds a tensor, rejecting a shape/length mismatch and non-finite values.
    pub fn new(shape: Vec<usize>, values: Vec<S>) -> Result<Self> {
        if numel(&shape) != values.len() {
            return Err(Error::Shape(format!(
                "shape {:?} holds {} values but {} were given",
                shape,
                numel(&shape),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { op: "construct" });
        }
        Ok(Self {
            shape,
            values,
            requires_grad: false,
            grad: None,
        })
    }

    /// Internal constructor for values already known to be finite and well-shaped.
    pub(crate) fn from_parts(shape: Vec<usize>, values: Vec<S>) -> Self {
        debug_assert_eq!(numel(&shape), values.len());
        Self {
            shape,
            values,
            requires_grad: false,
            grad: None,
        }
    }

    pub fn scalar(v: S) -> Result<Self> {
        Self::new(vec![], vec![v])
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::from_parts(shape.to_vec(), vec![S::zero(); numel(shape)])
    }

    /// A `[1, n]` row.
    pub fn row(values: &[S]) -> Result<Self> {
        Self::new(vec![1, values.len()], values.to_vec())
    }

    /// A `[rows, cols]` matrix from nested rows; all rows must share a length.
    pub fn from_rows(rows: &[Vec<S>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Self::new(
            vec![rows.len(), cols],
            rows.iter().flatten().copied().collect(),
        )
    }

    pub fn requiring_grad(mut self) -> Self {
        self.requires_grad = true;
        self
    }

    pub fn set_requires_grad(&mut self, on: bool) {
        self.requires_grad = on;
        if !on {
            self.grad = None;
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    /// Mutable access for optimizers. Callers must keep values finite.
    pub fn values_mut(&mut self) -> &mut [S] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn grad(&self) -> Option<&[S]> {
        self.grad.as_deref()
    }

    pub fn zero_grad(&mut self) {
        self.grad = None;
    }

    /// Adds `delta` into the accumulated gradient.
    pub fn accumulate_grad(&mut self, delta: &[S]) -> Result<()> {
        if delta.len() != self.values.len() {
            return Err(Error::Dimension {
                op: "accumulate_grad",
                left: self.shape.clone(),
                right: vec![delta.len()],
            });
        }
        match &mut self.grad {
            Some(g) => g.iter_mut().zip(delta).for_each(|(g, d)| *g = *g + *d),
            None => self.grad = Some(delta.to_vec()),
        }
        Ok(())
    }

    /// Element `(i, j)` of a rank-2 tensor.
    pub fn at(&self, i: usize, j: usize) -> S {
        self.values[i * self.shape[1] + j]
    }

    pub fn item(&self) -> Result<S> {
        if self.values.len() != 1 {
            return Err(Error::Shape(format!(
                "item() on tensor of shape {:?}",
                self.shape
            )));
        }
        Ok(self.values[0])
    }

    pub fn reshape(mut self, shape: Vec<usize>) -> Result<Self> {
        if numel(&shape) != self.values.len() {
            return Err(Error::Dimension {
                op: "reshape",
                left: self.shape,
                right: shape,
            });
        }
        self.shape = shape;
        self.grad = None;
        Ok(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_shape_mismatch() {
        assert!(Tensor::<f64>::new(vec![2, 2], vec![1.0; 3]).is_err());
    }

    #[test]
    fn rejects_non_finite() {
        let err = Tensor::<f64>::new(vec![2], vec![1.0, f64::NAN]).unwrap_err();
        assert!(matches!(err, Error::NonFinite { .. }));
        assert!(Tensor::<f32>::new(vec![1], vec![f32::INFINITY]).is_err());
    }

    #[test]
    fn scalar_has_empty_shape() {
        let t = Tensor::scalar(3.0f64).unwrap();
        assert!(t.shape().is_empty());
        assert_eq!(t.item().unwrap(), 3.0);
    }

    #[test]
    fn grad_accumulates() {
        let mut t = Tensor::<f64>::zeros(&[2]).requiring_grad();
        t.accumulate_grad(&[1.0, 2.0]).unwrap();
        t.accumulate_grad(&[1.0, 2.0]).unwrap();
        assert_eq!(t.grad().unwrap(), &[2.0, 4.0]);
        assert!(t.accumulate_grad(&[1.0]).is_err());
        t.zero_grad();
        assert!(t.grad().is_none());
    }
}
