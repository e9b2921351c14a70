use indexmap::IndexMap;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Gradients, NumError, Tape, Tensor, Var};

/// Named trainable tensors in a fixed insertion order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamStore {
    tensors: IndexMap<String, Tensor>,
}

/// Tape handles for every tensor of a [`ParamStore`], by name.
#[derive(Clone, Debug)]
pub struct BoundParams {
    vars: IndexMap<String, Var>,
}

impl BoundParams {
    pub fn from_vars(names: impl IntoIterator<Item = String>, vars: &[Var]) -> Self {
        BoundParams {
            vars: names.into_iter().zip(vars.iter().copied()).collect(),
        }
    }

    pub fn get(&self, name: &str) -> Result<Var, NumError> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| NumError::Contract(format!("no parameter named {name}")))
    }

    pub fn vars(&self) -> impl Iterator<Item = Var> + '_ {
        self.vars.values().copied()
    }
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) {
        self.tensors.insert(name.into(), t);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn total_size(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    /// Weight matrix of shape `rows × cols` drawn from
    /// `U(-1/sqrt(cols), 1/sqrt(cols))`.
    pub fn uniform_fan_in<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Tensor {
        let bound = 1.0 / (cols as f64).sqrt();
        let data = (0..rows * cols)
            .map(|_| rng.random_range(-bound..=bound))
            .collect();
        Tensor::from_raw(rows, cols, data)
    }

    /// Puts every tensor on the tape as a leaf.
    pub fn bind(&self, tape: &mut Tape, requires_grad: bool) -> BoundParams {
        BoundParams {
            vars: self
                .tensors
                .iter()
                .map(|(k, v)| (k.clone(), tape.leaf(v.clone(), requires_grad)))
                .collect(),
        }
    }
}

/// One plain gradient-descent update `p ← p − lr·∇p` over every bound
/// parameter. Consumes the gradients.
pub fn sgd_step(
    params: &mut ParamStore,
    bound: &BoundParams,
    mut grads: Gradients,
    lr: f64,
) -> Result<(), NumError> {
    for (name, var) in &bound.vars {
        let g = grads
            .take(*var)
            .ok_or_else(|| NumError::Contract(format!("no gradient for parameter {name}")))?;
        let p = params
            .tensors
            .get_mut(name)
            .ok_or_else(|| NumError::Contract(format!("unknown parameter {name}")))?;
        if p.shape() != g.shape() {
            return Err(NumError::Shape {
                op: "sgd_step",
                left: p.shape(),
                right: g.shape(),
            });
        }
        for (w, d) in p.data_mut().iter_mut().zip(g.data()) {
            *w -= lr * d;
        }
    }
    Ok(())
}
