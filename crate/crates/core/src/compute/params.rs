use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;

use super::{Real, Tensor};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named trainable arrays in registration order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<T> {
    names: Vec<String>,
    values: Vec<Tensor<T>>,
}

impl<T: Real> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            names: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>) -> ParamId {
        let id = ParamId(self.values.len());
        self.names.push(name.into());
        self.values.push(value);
        id
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(self.values.iter())
    }

    /// Total number of trainable scalars.
    pub fn scalar_count(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    /// Redraws every parameter from `U(-range, range)` in registration order.
    pub fn init_uniform<R: Rng + ?Sized>(&mut self, range: f64, rng: &mut R) {
        for t in &mut self.values {
            for x in t.data_mut() {
                *x = T::of(rng.gen_range(-range..range));
            }
        }
    }

    /// Replaces the array named `name`; the shape must be unchanged.
    pub fn set(&mut self, name: &str, value: Tensor<T>) -> Result<()> {
        let id = self
            .find(name)
            .ok_or_else(|| Error::Contract(alloc::format!("unknown parameter `{name}`")))?;
        let cur = &self.values[id.0];
        if cur.shape() != value.shape() {
            return Err(Error::dim("set parameter", cur.shape(), value.shape()));
        }
        self.values[id.0] = value;
        Ok(())
    }

    /// `param -= lr * grad` for every parameter that has a gradient.
    pub fn sgd_step(&mut self, grads: &[Option<Vec<T>>], lr: T) {
        for (value, grad) in self.values.iter_mut().zip(grads) {
            if let Some(g) = grad {
                for (p, &d) in value.data_mut().iter_mut().zip(g) {
                    *p -= lr * d;
                }
            }
        }
    }
}
