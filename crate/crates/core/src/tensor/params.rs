use std::collections::BTreeMap;

use crate::error::{Error, Result};

use super::{Scalar, Tensor, TensorData};

/// Named model weights, iterated in lexicographic name order.
///
/// Values are plain `f32` arrays so a set can be shared across threads; a
/// forward pass binds them into graph tensors with [`ParameterSet::bind`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParameterSet {
    params: BTreeMap<String, TensorData<f32>>,
}

impl ParameterSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: TensorData<f32>) -> Result<()> {
        let name = name.into();
        if self.params.contains_key(&name) {
            return Err(Error::InvalidArgument(format!("duplicate parameter name {name}")));
        }
        self.params.insert(name, value);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&TensorData<f32>> {
        self.params.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut TensorData<f32>> {
        self.params.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &TensorData<f32>)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut TensorData<f32>)> {
        self.params.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn num_elements(&self) -> usize {
        self.params.values().map(TensorData::numel).sum()
    }

    /// A same-shaped set of zeros.
    pub fn zeros_like(&self) -> Self {
        Self {
            params: self
                .params
                .iter()
                .map(|(k, v)| (k.clone(), TensorData::zeros(v.shape().to_vec())))
                .collect(),
        }
    }

    /// Converts every parameter into a graph tensor of element type `T`.
    pub fn bind<T: Scalar>(&self, requires_grad: bool) -> BoundParams<T> {
        let tensors = self
            .params
            .iter()
            .map(|(name, value)| {
                let value = value.cast::<T>();
                let t = if requires_grad { Tensor::leaf(value) } else { Tensor::constant(value) };
                (name.clone(), t)
            })
            .collect();
        BoundParams { tensors }
    }
}

/// Parameters bound into one forward pass.
pub struct BoundParams<T: Scalar = f32> {
    tensors: BTreeMap<String, Tensor<T>>,
}

impl<T: Scalar> BoundParams<T> {
    pub fn get(&self, name: &str) -> Result<&Tensor<T>> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::ContractViolation(format!("missing parameter {name}")))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    /// Swaps in a same-shaped tensor for `name`.
    pub fn replace(&mut self, name: &str, tensor: Tensor<T>) -> Result<()> {
        let slot = self
            .tensors
            .get_mut(name)
            .ok_or_else(|| Error::ContractViolation(format!("missing parameter {name}")))?;
        if slot.shape() != tensor.shape() {
            return Err(Error::ContractViolation(format!(
                "replacement for {name} has shape {:?}, expected {:?}",
                tensor.shape(),
                slot.shape()
            )));
        }
        *slot = tensor;
        Ok(())
    }

    /// Gradients after a backward pass, as an `f32` parameter set. Every
    /// bound parameter must have received one.
    pub fn gradients(&self) -> Result<ParameterSet> {
        let mut out = ParameterSet::new();
        for (name, t) in &self.tensors {
            let g = t.grad().ok_or_else(|| {
                Error::ContractViolation(format!("parameter {name} received no gradient"))
            })?;
            out.insert(name.clone(), g.cast())?;
        }
        Ok(out)
    }

    pub fn gradients_f64(&self) -> Result<BTreeMap<String, TensorData<f64>>> {
        self.tensors
            .iter()
            .map(|(name, t)| {
                let g = t.grad().ok_or_else(|| {
                    Error::ContractViolation(format!("parameter {name} received no gradient"))
                })?;
                Ok((name.clone(), g.cast()))
            })
            .collect()
    }
}
