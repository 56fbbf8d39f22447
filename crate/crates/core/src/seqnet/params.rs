use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

/// Index of a parameter inside a [`ParameterStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    name: String,
    shape: Vec<usize>,
    value: Vec<f64>,
    grad: Vec<f64>,
}

/// Named, shaped parameter arrays with paired gradient buffers.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParameterStore {
    entries: Vec<Entry>,
    index: HashMap<String, ParamId>,
    /// Number of optimizer updates applied so far.
    pub step: u64,
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a parameter holding `value` (row-major).
    pub fn add(&mut self, name: impl Into<String>, shape: &[usize], value: Vec<f64>) -> Result<ParamId> {
        let name = name.into();
        let len: usize = shape.iter().product();
        if value.len() != len {
            return Err(Error::ShapeMismatch(format!("{name}: {} values for shape {shape:?}", value.len())));
        }
        if self.index.contains_key(&name) {
            return Err(Error::InvalidArgument(format!("duplicate parameter name '{name}'")));
        }
        let id = ParamId(self.entries.len());
        self.index.insert(name.clone(), id);
        self.entries.push(Entry { name, shape: shape.to_vec(), grad: vec![0.0; len], value });
        Ok(id)
    }

    /// Registers a parameter initialized uniformly in `±1/sqrt(fan_in)`.
    pub fn add_uniform<R: Rng>(&mut self, name: impl Into<String>, shape: &[usize], fan_in: usize, rng: &mut R) -> Result<ParamId> {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let len: usize = shape.iter().product();
        let value = (0..len).map(|_| rng.random_range(-bound..bound)).collect();
        self.add(name, shape, value)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn shape(&self, id: ParamId) -> &[usize] {
        &self.entries[id.0].shape
    }

    #[inline]
    pub fn value(&self, id: ParamId) -> &[f64] {
        &self.entries[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.entries[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &[f64] {
        &self.entries[id.0].grad
    }

    pub fn grad_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.entries[id.0].grad
    }

    pub fn value_and_grad_mut(&mut self, id: ParamId) -> (&mut [f64], &mut [f64]) {
        let e = &mut self.entries[id.0];
        (&mut e.value, &mut e.grad)
    }

    pub fn zero_grads(&mut self) {
        for e in &mut self.entries {
            e.grad.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    /// Zero-filled gradient buffers matching every parameter.
    pub fn new_gradients(&self) -> Gradients {
        Gradients(self.entries.iter().map(|e| vec![0.0; e.value.len()]).collect())
    }

    /// `grad += scale * g` for every parameter.
    pub fn accumulate(&mut self, g: &Gradients, scale: f64) {
        for (e, gs) in self.entries.iter_mut().zip(&g.0) {
            for (a, b) in e.grad.iter_mut().zip(gs) {
                *a += scale * b;
            }
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.entries.iter().map(|e| e.value.len()).sum()
    }

    /// Copies values for every name present in both stores.
    pub fn copy_values_from(&mut self, other: &ParameterStore) {
        for e in &mut self.entries {
            if let Some(id) = other.id(&e.name) {
                if other.entries[id.0].value.len() == e.value.len() {
                    e.value.copy_from_slice(&other.entries[id.0].value);
                }
            }
        }
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            step: self.step,
            names: self.entries.iter().map(|e| e.name.clone()).collect(),
            shapes: self.entries.iter().map(|e| e.shape.clone()).collect(),
            values: self.entries.iter().map(|e| e.value.clone()).collect(),
        }
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self> {
        if c.version != CHECKPOINT_VERSION {
            return Err(Error::ConfigMismatch(format!("unsupported checkpoint version {}", c.version)));
        }
        if c.names.len() != c.shapes.len() || c.names.len() != c.values.len() {
            return Err(Error::ConfigMismatch("checkpoint arrays differ in length".into()));
        }
        let mut store = ParameterStore::new();
        for ((n, s), v) in c.names.iter().zip(&c.shapes).zip(&c.values) {
            store.add(n.clone(), s, v.clone())?;
        }
        store.step = c.step;
        Ok(store)
    }
}

/// Per-parameter gradient buffers, parallel to a store's entries.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub Vec<Vec<f64>>);

impl Gradients {
    #[inline]
    pub fn get_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.0[id.0]
    }

    pub fn get(&self, id: ParamId) -> &[f64] {
        &self.0[id.0]
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }
}

/// Versioned JSON checkpoint: names, shapes and row-major values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    #[serde(default)]
    pub step: u64,
    pub names: Vec<String>,
    pub shapes: Vec<Vec<usize>>,
    pub values: Vec<Vec<f64>>,
}
