//! Flat registry of learnable parameters.
//!
//! Layers hold `ParamId`s into one `ParamSet`; binding loads every parameter
//! onto a tape as gradient leaves in registration order, which is also the
//! checkpoint serialization order.

use rand::Rng;

use crate::scalar::Scalar;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Centered uniform init with fan-in scaling: U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
pub fn uniform_init<T: Scalar>(
    shape: Vec<usize>,
    fan_in: usize,
    rng: &mut impl Rng,
) -> Tensor<T> {
    assert!(fan_in >= 1);
    let bound = 1.0 / (fan_in as f64).sqrt();
    let n = shape.iter().product();
    Tensor::new(
        shape,
        (0..n)
            .map(|_| T::from_f64_lossy((rng.gen::<f64>() * 2.0 - 1.0) * bound))
            .collect(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(pub(crate) usize);

pub struct ParamSet<T: Scalar> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
}

impl<T: Scalar> Default for ParamSet<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ParamSet<T> {
    pub fn new() -> Self {
        ParamSet { names: Vec::new(), tensors: Vec::new() }
    }

    pub fn alloc(&mut self, name: impl Into<String>, tensor: Tensor<T>) -> ParamId {
        self.names.push(name.into());
        self.tensors.push(tensor);
        ParamId(self.tensors.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of learnable scalars.
    pub fn total_scalars(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.tensors[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(|n| n.as_str()).zip(self.tensors.iter())
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<T>)> {
        self.names.iter().map(|n| n.as_str()).zip(self.tensors.iter_mut())
    }

    /// Load every parameter onto the tape as a gradient leaf.
    pub fn bind(&self, tape: &mut Tape<T>) -> BoundParams {
        let vars = self.tensors.iter().map(|t| tape.leaf(t.clone(), true)).collect();
        BoundParams { vars }
    }
}

/// Tape handles for one bound parameter set.
pub struct BoundParams {
    vars: Vec<Var>,
}

impl BoundParams {
    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    /// Gradients in registration order; zeros where no gradient flowed.
    pub fn gradients<T: Scalar>(&self, tape: &Tape<T>) -> Vec<Vec<T>> {
        self.vars
            .iter()
            .map(|&v| match tape.grad(v) {
                Some(g) => g.to_vec(),
                None => vec![T::zero(); tape.data(v).len()],
            })
            .collect()
    }
}
