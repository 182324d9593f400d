use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::nn::RealArray;
use crate::scalar::Scalar;

/// One named parameter with its gradient buffer.
#[derive(Debug, Clone)]
pub struct ParamEntry<T> {
    pub value: RealArray<T>,
    pub grad: RealArray<T>,
}

/// Ordered, named collection of parameters. Iteration follows insertion order.
#[derive(Debug, Clone, Default)]
pub struct ParameterStore<T> {
    entries: IndexMap<String, ParamEntry<T>>,
}

impl<T: Scalar> ParameterStore<T> {
    pub fn new() -> Self {
        Self {
            entries: IndexMap::new(),
        }
    }

    /// Registers a parameter and returns its stable index.
    pub fn insert(&mut self, name: impl Into<String>, value: RealArray<T>) -> Result<usize> {
        let name = name.into();
        if self.entries.contains_key(&name) {
            return Err(Error::Usage(format!("duplicate parameter name `{name}`")));
        }
        let grad = RealArray::zeros(value.shape());
        let (idx, _) = self.entries.insert_full(name, ParamEntry { value, grad });
        Ok(idx)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.entries.values().map(|e| e.value.len()).sum()
    }

    pub fn get(&self, name: &str) -> Option<&ParamEntry<T>> {
        self.entries.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut ParamEntry<T>> {
        self.entries.get_mut(name)
    }

    pub fn at(&self, idx: usize) -> &ParamEntry<T> {
        &self.entries[idx]
    }

    pub fn at_mut(&mut self, idx: usize) -> &mut ParamEntry<T> {
        &mut self.entries[idx]
    }

    pub fn name_of(&self, idx: usize) -> &str {
        self.entries.get_index(idx).map(|(k, _)| k.as_str()).unwrap_or("")
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ParamEntry<T>)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut ParamEntry<T>)> {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn zero_grads(&mut self) {
        for e in self.entries.values_mut() {
            e.grad.fill(T::zero());
        }
    }

    pub fn grad_sum_sq(&self) -> T {
        self.entries.values().map(|e| e.grad.sum_sq()).sum()
    }

    /// Euclidean norm of all gradients taken together.
    pub fn grad_norm(&self) -> T {
        self.grad_sum_sq().sqrt()
    }

    pub fn scale_grads(&mut self, factor: T) {
        for e in self.entries.values_mut() {
            e.grad.data_mut().iter_mut().for_each(|g| *g *= factor);
        }
    }

    /// Names the first entry holding a non-finite gradient.
    pub fn first_non_finite_grad(&self) -> Option<&str> {
        self.entries
            .iter()
            .find(|(_, e)| !e.grad.all_finite())
            .map(|(k, _)| k.as_str())
    }

    pub fn first_non_finite_value(&self) -> Option<&str> {
        self.entries
            .iter()
            .find(|(_, e)| !e.value.all_finite())
            .map(|(k, _)| k.as_str())
    }
}

/// Rescales gradients of all `stores` jointly so their global norm is at most
/// `max_norm`. Returns the pre-clip norm.
pub fn clip_grad_norm<T: Scalar>(stores: &mut [&mut ParameterStore<T>], max_norm: Option<f64>) -> f64 {
    let norm = stores
        .iter()
        .map(|s| s.grad_sum_sq().as_f64())
        .sum::<f64>()
        .sqrt();
    if let Some(max) = max_norm {
        if norm.is_finite() && norm > max {
            let factor = T::of(max / norm);
            for s in stores.iter_mut() {
                s.scale_grads(factor);
            }
        }
    }
    norm
}
