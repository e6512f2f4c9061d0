//! Named parameters with gradients and freeze masks.

use super::matrix::Matrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

/// A trainable tensor. Entries whose `freeze_mask` is set are never touched by
/// the optimizer.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub value: Matrix,
    pub grad: Matrix,
    freeze_mask: Vec<bool>,
}

impl Parameter {
    pub fn new(name: impl Into<String>, value: Matrix) -> Self {
        let (rows, cols) = value.shape();
        Self {
            name: name.into(),
            grad: Matrix::zeros(rows, cols),
            freeze_mask: vec![false; rows * cols],
            value,
        }
    }

    pub fn with_freeze_mask(mut self, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != self.freeze_mask.len() {
            return Err(Error::Shape {
                op: "freeze_mask",
                left: self.value.shape(),
                right: (mask.len(), 1),
            });
        }
        self.freeze_mask = mask;
        Ok(self)
    }

    /// Freezes every entry.
    pub fn frozen(mut self) -> Self {
        self.freeze_mask.iter_mut().for_each(|f| *f = true);
        self
    }

    #[inline]
    pub fn is_frozen(&self, row: usize, col: usize) -> bool {
        self.freeze_mask[row * self.value.cols() + col]
    }

    pub fn freeze_mask(&self) -> &[bool] {
        &self.freeze_mask
    }

    pub fn frozen_count(&self) -> usize {
        self.freeze_mask.iter().filter(|f| **f).count()
    }

    pub fn is_fully_frozen(&self) -> bool {
        self.freeze_mask.iter().all(|f| *f)
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    /// Adds `delta` into the gradient buffer.
    pub fn accumulate(&mut self, delta: &Matrix) -> Result<()> {
        self.grad.add_assign(delta)
    }
}

/// Ordered parameter registry. Ids are stable insertion indices.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Parameter>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, param: Parameter) -> ParamId {
        self.params.push(param);
        ParamId(self.params.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Matrix {
        &self.params[id.0].value
    }

    pub fn accumulate(&mut self, id: ParamId, delta: &Matrix) -> Result<()> {
        self.params[id.0].accumulate(delta)
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.params.iter_mut()
    }

    pub fn zero_grads(&mut self) {
        self.params.iter_mut().for_each(Parameter::zero_grad);
    }

    /// Number of scalar entries across all parameters.
    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.value.as_slice().len()).sum()
    }

    /// Copies values (not gradients) from a store with identical layout.
    pub fn copy_values_from(&mut self, other: &ParamStore) -> Result<()> {
        if self.params.len() != other.params.len() {
            return Err(Error::Contract("parameter stores differ in length".into()));
        }
        for (a, b) in self.params.iter_mut().zip(&other.params) {
            a.value.check_same_shape("copy_values_from", &b.value)?;
            a.value = b.value.clone();
        }
        Ok(())
    }
}
