use std::collections::BTreeMap;

use rand::Rng as _;

use super::Tensor;
use crate::{Error, Result, Rng};

/// Named parameter tensors. Iteration order is the sorted name order, which
/// keeps flattening and optimiser updates deterministic.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParameterSet {
    tensors: BTreeMap<String, Tensor>,
}

/// Gradients share the parameter layout.
pub type GradBuffer = ParameterSet;

impl ParameterSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<()> {
        let name = name.into();
        if self.tensors.contains_key(&name) {
            return Err(Error::Shape(format!("duplicate parameter {name}")));
        }
        self.tensors.insert(name, tensor);
        Ok(())
    }

    /// Adds `{name}.w` (`output x input`) and `{name}.b`, uniform in
    /// `±1/sqrt(input)`.
    pub fn add_linear(&mut self, name: &str, input: usize, output: usize, rng: &mut Rng) -> Result<()> {
        let bound = 1.0 / (input.max(1) as f64).sqrt();
        let mut draw = |n: usize| -> Vec<f64> {
            (0..n).map(|_| rng.random_range(-bound..=bound)).collect()
        };
        let w = draw(output * input);
        let b = draw(output);
        self.insert(format!("{name}.w"), Tensor::from_vec(&[output, input], w)?)?;
        self.insert(format!("{name}.b"), Tensor::from_vec(&[output], b)?)
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::Shape(format!("missing parameter {name}")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.tensors
            .get_mut(name)
            .ok_or_else(|| Error::Shape(format!("missing parameter {name}")))
    }

    /// Two distinct tensors borrowed mutably at once.
    pub fn get_pair_mut(&mut self, a: &str, b: &str) -> Result<(&mut Tensor, &mut Tensor)> {
        let (mut first, mut second) = (None, None);
        for (k, t) in self.tensors.iter_mut() {
            if k == a {
                first = Some(t);
            } else if k == b {
                second = Some(t);
            }
        }
        match (first, second) {
            (Some(x), Some(y)) => Ok((x, y)),
            _ => Err(Error::Shape(format!("missing parameter {a} or {b}"))),
        }
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.tensors.iter_mut()
    }

    pub fn names(&self) -> Vec<String> {
        self.tensors.keys().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn num_values(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            tensors: self
                .tensors
                .iter()
                .map(|(k, t)| (k.clone(), Tensor::zeros(t.shape())))
                .collect(),
        }
    }

    pub fn zero(&mut self) {
        self.tensors.values_mut().for_each(|t| t.fill(0.0));
    }

    /// Independent deep copy, used as the target network.
    pub fn sync_target(&self) -> Self {
        self.clone()
    }

    /// Overwrite values from `other` (same layout), reusing allocations.
    pub fn copy_from(&mut self, other: &ParameterSet) -> Result<()> {
        self.check_layout(other)?;
        for (dst, src) in self.tensors.values_mut().zip(other.tensors.values()) {
            dst.data_mut().copy_from_slice(src.data());
        }
        Ok(())
    }

    pub fn check_layout(&self, other: &ParameterSet) -> Result<()> {
        let same = self.tensors.len() == other.tensors.len()
            && self
                .tensors
                .iter()
                .zip(&other.tensors)
                .all(|((ka, ta), (kb, tb))| ka == kb && ta.shape() == tb.shape());
        if same {
            Ok(())
        } else {
            Err(Error::Shape("parameter layouts differ".into()))
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.tensors.values().flat_map(|t| t.data().iter().copied()).collect()
    }

    pub fn add_scaled(&mut self, other: &ParameterSet, scale: f64) -> Result<()> {
        self.check_layout(other)?;
        for (dst, src) in self.tensors.values_mut().zip(other.tensors.values()) {
            for (d, s) in dst.data_mut().iter_mut().zip(src.data()) {
                *d += scale * s;
            }
        }
        Ok(())
    }

    pub fn squared_norm(&self) -> f64 {
        self.tensors
            .values()
            .flat_map(|t| t.data().iter())
            .map(|v| v * v)
            .sum()
    }

    pub fn check_finite(&self) -> Result<()> {
        for (name, t) in &self.tensors {
            t.check_finite(name)?;
        }
        Ok(())
    }
}
