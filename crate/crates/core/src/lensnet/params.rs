//! Named registry of learnable tensors.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    /// Frozen parameters enter the tape as constants and are never updated.
    pub frozen: bool,
}

/// Parameters in registration order, addressable by name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Parameters {
    entries: Vec<Parameter>,
    index: HashMap<String, usize>,
}

impl Parameters {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a tensor under a fresh name.
    pub fn insert(&mut self, name: impl Into<String>, value: Tensor, frozen: bool) -> Result<()> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::config(format!("parameter '{name}' registered twice")));
        }
        self.index.insert(name.clone(), self.entries.len());
        self.entries.push(Parameter { name, value, frozen });
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.entries.iter()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.position(name).map(|i| &self.entries[i].value)
    }

    pub fn entry(&self, i: usize) -> &Parameter {
        &self.entries[i]
    }

    /// Replaces the value of `name`, keeping its shape.
    pub fn set(&mut self, name: &str, value: Tensor) -> Result<()> {
        let i = self.position(name).ok_or_else(|| Error::config(format!("unknown parameter '{name}'")))?;
        if self.entries[i].value.shape() != value.shape() {
            return Err(Error::sizing(format!(
                "parameter '{name}' has shape {:?}, got {:?}",
                self.entries[i].value.shape(),
                value.shape()
            )));
        }
        self.entries[i].value = value;
        Ok(())
    }

    pub(crate) fn value_mut(&mut self, i: usize) -> &mut Tensor {
        &mut self.entries[i].value
    }

    /// Total element count over every registered tensor, frozen or not.
    pub fn count(&self) -> usize {
        self.entries.iter().map(|p| p.value.len()).sum()
    }

    pub fn count_trainable(&self) -> usize {
        self.entries.iter().filter(|p| !p.frozen).map(|p| p.value.len()).sum()
    }

    /// Records every parameter on `tape`; trainable ones require gradients
    /// when `track` is set.
    pub fn bind(&self, tape: &mut Tape, track: bool) -> Bound {
        let vars = self.entries.iter().map(|p| tape.leaf(p.value.clone(), track && !p.frozen)).collect();
        Bound { vars }
    }

    /// Gradients for each parameter after a backward pass (`None` for
    /// frozen or unreached parameters).
    pub fn grads(&self, tape: &Tape, bound: &Bound) -> Vec<Option<Tensor>> {
        bound.vars.iter().map(|v| tape.grad(*v).cloned()).collect()
    }
}

/// Tape variables of a bound [`Parameters`], in registration order.
#[derive(Debug, Clone)]
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    pub fn from_vars(vars: Vec<Var>) -> Self {
        Self { vars }
    }

    pub fn var(&self, params: &Parameters, name: &str) -> Var {
        let i = params.position(name).unwrap_or_else(|| panic!("parameter '{name}' is not registered"));
        self.vars[i]
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

/// Normal initializer `N(0, gain² / fan_in)` with `fan_in = Cin·kh·kw`:
/// gain 1 preserves variance through a linear layer, √2 through one
/// followed by a ReLU.
pub(crate) fn scaled_normal(shape: Shape, gain: f64, rng: &mut ChaCha8Rng) -> Tensor {
    let [_, ci, kh, kw] = shape;
    let std = gain / ((ci * kh * kw) as f64).sqrt();
    let len = shape.iter().product();
    let data = (0..len)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            std * z
        })
        .collect();
    Tensor::from_vec(shape, data).expect("valid shape")
}

pub(crate) fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
