use std::collections::BTreeMap;

use rand::Rng;

use super::matrix::Matrix;
use crate::error::{MeraError, Result};

/// One learnable tensor with its gradient slot and Adam moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub value: Matrix,
    pub grad: Matrix,
    pub first_moment: Matrix,
    pub second_moment: Matrix,
}

impl Parameter {
    fn new(value: Matrix) -> Self {
        let (r, c) = value.shape();
        Parameter {
            value,
            grad: Matrix::zeros(r, c),
            first_moment: Matrix::zeros(r, c),
            second_moment: Matrix::zeros(r, c),
        }
    }
}

/// Named learnable tensors, iterated in name order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParameterStore {
    entries: BTreeMap<String, Parameter>,
    step: u64,
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Matrix) -> Result<()> {
        let name = name.into();
        if self.entries.contains_key(&name) {
            return Err(MeraError::Parameter(format!(
                "duplicate parameter name `{name}`"
            )));
        }
        self.entries.insert(name, Parameter::new(value));
        Ok(())
    }

    /// Uniform in ±sqrt(6 / (fan_in + fan_out)).
    pub fn insert_xavier<R: Rng>(
        &mut self,
        name: impl Into<String>,
        fan_in: usize,
        fan_out: usize,
        rng: &mut R,
    ) -> Result<()> {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data = (0..fan_in * fan_out)
            .map(|_| rng.gen_range(-bound..=bound))
            .collect();
        self.insert(name, Matrix::new(fan_in, fan_out, data)?)
    }

    pub fn insert_zeros(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        cols: usize,
    ) -> Result<()> {
        self.insert(name, Matrix::zeros(rows, cols))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn get(&self, name: &str) -> Result<&Parameter> {
        self.entries
            .get(name)
            .ok_or_else(|| MeraError::Lookup(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Parameter> {
        self.entries
            .get_mut(name)
            .ok_or_else(|| MeraError::Lookup(name.to_string()))
    }

    pub fn value(&self, name: &str) -> Result<&Matrix> {
        self.get(name).map(|p| &p.value)
    }

    pub fn grad(&self, name: &str) -> Result<&Matrix> {
        self.get(name).map(|p| &p.grad)
    }

    /// Replaces a value in place; the shape must not change.
    pub fn set_value(&mut self, name: &str, value: Matrix) -> Result<()> {
        let p = self.get_mut(name)?;
        if p.value.shape() != value.shape() {
            return Err(MeraError::Dimension(format!(
                "parameter `{name}` is {:?}, replacement is {:?}",
                p.value.shape(),
                value.shape()
            )));
        }
        p.value = value;
        Ok(())
    }

    /// Replaces a value and resets its gradient and moments, allowing a shape change.
    pub fn replace(&mut self, name: &str, value: Matrix) -> Result<()> {
        let p = self.get_mut(name)?;
        *p = Parameter::new(value);
        Ok(())
    }

    pub fn remove(&mut self, name: &str) -> Option<Matrix> {
        self.entries.remove(name).map(|p| p.value)
    }

    pub(crate) fn accumulate_grad(&mut self, name: &str, grad: &Matrix) -> Result<()> {
        let p = self.get_mut(name)?;
        if p.grad.shape() != grad.shape() {
            return Err(MeraError::Internal(format!(
                "gradient for `{name}` has shape {:?}, value has {:?}",
                grad.shape(),
                p.value.shape()
            )));
        }
        for (g, d) in p.grad.data_mut().iter_mut().zip(grad.data()) {
            *g += d;
        }
        Ok(())
    }

    pub fn zero_grads(&mut self) {
        for p in self.entries.values_mut() {
            p.grad.data_mut().iter_mut().for_each(|g| *g = 0.0);
        }
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Parameter)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub(crate) fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Parameter)> {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar coordinates.
    pub fn num_values(&self) -> usize {
        self.entries.values().map(|p| p.value.len()).sum()
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub(crate) fn advance_step(&mut self) -> u64 {
        self.step += 1;
        self.step
    }

    /// Rounds all values through `f32` and clears optimizer state.
    pub fn round_to_f32(&self) -> ParameterStore {
        let mut out = ParameterStore::new();
        for (name, p) in self.iter() {
            out.entries
                .insert(name.to_string(), Parameter::new(p.value.round_to_f32()));
        }
        out
    }
}
