//! Named registry of learnable tensors with gradient slots and optimizer state.

use std::collections::HashMap;

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::tensor::{lit, Real, Tensor, TensorError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

/// A learnable tensor plus its first/second moment estimates.
#[derive(Debug, Clone)]
pub struct Parameter<T> {
    pub name: String,
    pub value: Tensor<T>,
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub step: u64,
}

#[derive(Debug, Clone, Default)]
pub struct ParameterStore<T> {
    params: Vec<Parameter<T>>,
    by_name: HashMap<String, ParamId>,
}

impl<T: Real> ParameterStore<T> {
    pub fn new() -> Self {
        ParameterStore {
            params: Vec::new(),
            by_name: HashMap::new(),
        }
    }

    pub fn add(&mut self, name: &str, value: Tensor<T>) -> Result<ParamId, TensorError> {
        if self.by_name.contains_key(name) {
            return Err(TensorError::arg(
                "param",
                format!("duplicate parameter name {name}"),
            ));
        }
        let n = value.len();
        let id = ParamId(self.params.len());
        self.params.push(Parameter {
            name: name.to_string(),
            value: value.with_grad(),
            m: vec![T::zero(); n],
            v: vec![T::zero(); n],
            step: 0,
        });
        self.by_name.insert(name.to_string(), id);
        Ok(id)
    }

    /// Adds a `shape` parameter with entries drawn from `N(0, std²)`.
    pub fn add_normal(
        &mut self,
        name: &str,
        shape: Vec<usize>,
        std: f64,
        rng: &mut impl Rng,
    ) -> Result<ParamId, TensorError> {
        let n: usize = shape.iter().product();
        let dist = Normal::new(0.0, std).map_err(|e| TensorError::arg("param", e.to_string()))?;
        let data = (0..n).map(|_| lit(dist.sample(rng))).collect();
        self.add(name, Tensor::new(shape, data)?)
    }

    /// Glorot-uniform `[fan_in × fan_out]` matrix.
    pub fn add_glorot(
        &mut self,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        rng: &mut impl Rng,
    ) -> Result<ParamId, TensorError> {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit).expect("finite glorot bound");
        let data = (0..fan_in * fan_out)
            .map(|_| lit(dist.sample(rng)))
            .collect();
        self.add(name, Tensor::new(vec![fan_in, fan_out], data)?)
    }

    pub fn add_zeros(&mut self, name: &str, shape: Vec<usize>) -> Result<ParamId, TensorError> {
        crate::tensor::check_shape("param", &shape)?;
        self.add(name, Tensor::zeros(shape))
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.params[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.params[id.0].value
    }

    pub fn param(&self, id: ParamId) -> &Parameter<T> {
        &self.params[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor<T>> {
        self.id(name).map(|id| self.get(id))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter<T>> {
        self.params.iter()
    }

    pub(crate) fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter<T>> {
        self.params.iter_mut()
    }

    /// Total number of scalar entries.
    pub fn numel(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Sets every gradient slot to zeros.
    pub fn zero_grads(&mut self) {
        self.params.iter_mut().for_each(|p| p.value.zero_grad());
    }

    /// Adds `scale * grad` into the gradient slot of `id`.
    pub fn accumulate(&mut self, id: ParamId, grad: &[T], scale: T) {
        let t = &mut self.params[id.0].value;
        if t.grad.is_none() {
            t.zero_grad();
        }
        let slot = t.grad.as_mut().expect("grad slot allocated");
        for (s, &g) in slot.iter_mut().zip(grad) {
            *s = *s + scale * g;
        }
    }

    /// Global L2 norm over all populated gradients.
    pub fn grad_norm(&self) -> T {
        self.params
            .iter()
            .filter_map(|p| p.value.grad.as_ref())
            .flat_map(|g| g.iter())
            .map(|&x| x * x)
            .sum::<T>()
            .sqrt()
    }

    pub fn scale_grads(&mut self, factor: T) {
        for p in &mut self.params {
            if let Some(g) = &mut p.value.grad {
                g.iter_mut().for_each(|x| *x = *x * factor);
            }
        }
    }

    /// Replaces the values of `name`, keeping shape.
    pub fn assign(&mut self, name: &str, shape: &[usize], data: Vec<T>) -> Result<(), TensorError> {
        let id = self
            .id(name)
            .ok_or_else(|| TensorError::arg("assign", format!("unknown parameter {name}")))?;
        let t = self.get_mut(id);
        if t.shape() != shape {
            return Err(TensorError::dim(
                "assign",
                format!("{name}: stored {:?}, given {shape:?}", t.shape()),
            ));
        }
        let fresh = Tensor::new(shape.to_vec(), data)?;
        t.data_mut().copy_from_slice(fresh.data());
        Ok(())
    }
}
