//! Named parameter storage shared by model construction, optimisation and
//! checkpointing.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    /// Receives gradients.
    Trainable,
    /// Running statistics and other state carried alongside parameters.
    Buffer,
}

#[derive(Clone, Debug)]
pub struct ParamEntry<S> {
    pub name: String,
    pub kind: ParamKind,
    pub value: Tensor<S>,
}

/// Initialisation schemes used by the layers in this crate.
#[derive(Clone, Copy, Debug)]
pub enum Init {
    Zeros,
    Constant(f64),
    /// Normal with std `sqrt(2 / fan_in)`.
    HeNormal {
        fan_in: usize,
    },
    /// Uniform in `[-bound, bound]`.
    Uniform {
        bound: f64,
    },
    Values(&'static [f64]),
}

#[derive(Clone, Debug, Default)]
pub struct ParamStore<S> {
    entries: Vec<ParamEntry<S>>,
    by_name: BTreeMap<String, ParamId>,
}

impl<S: Scalar> ParamStore<S> {
    pub fn new() -> Self {
        Self {
            entries: Vec::new(),
            by_name: BTreeMap::new(),
        }
    }

    /// Registers a tensor, drawing its initial value from `rng`.
    ///
    /// Panics on duplicate names; layer construction owns the namespace.
    pub fn register<R: Rng>(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        kind: ParamKind,
        init: Init,
        rng: &mut R,
    ) -> ParamId {
        let name = name.into();
        assert!(!self.by_name.contains_key(&name), "duplicate parameter name {name}");
        let numel: usize = shape.iter().product();
        let data: Vec<S> = match init {
            Init::Zeros => vec![S::zero(); numel],
            Init::Constant(c) => vec![S::from_f64(c); numel],
            Init::HeNormal { fan_in } => {
                let normal = Normal::new(0.0, (2.0 / fan_in.max(1) as f64).sqrt()).expect("finite std");
                (0..numel).map(|_| S::from_f64(normal.sample(rng))).collect()
            }
            Init::Uniform { bound } => {
                let uniform = Uniform::new_inclusive(-bound, bound).expect("finite bound");
                (0..numel).map(|_| S::from_f64(uniform.sample(rng))).collect()
            }
            Init::Values(values) => {
                assert_eq!(values.len(), numel, "initial values for {name}");
                values.iter().map(|&v| S::from_f64(v)).collect()
            }
        };
        let id = ParamId(self.entries.len());
        self.entries.push(ParamEntry {
            name: name.clone(),
            kind,
            value: Tensor::from_vec(shape, data),
        });
        self.by_name.insert(name, id);
        id
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor<S> {
        &self.entries[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<S> {
        &mut self.entries[id.0].value
    }

    pub fn entry(&self, id: ParamId) -> &ParamEntry<S> {
        &self.entries[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn entries(&self) -> impl Iterator<Item = (ParamId, &ParamEntry<S>)> {
        self.entries.iter().enumerate().map(|(i, e)| (ParamId(i), e))
    }

    /// Total element count of trainable tensors whose name starts with `prefix`.
    pub fn count_trainable(&self, prefix: &str) -> usize {
        self.entries
            .iter()
            .filter(|e| e.kind == ParamKind::Trainable && e.name.starts_with(prefix))
            .map(|e| e.value.numel())
            .sum()
    }

    pub fn cast<T: Scalar>(&self) -> ParamStore<T> {
        ParamStore {
            entries: self
                .entries
                .iter()
                .map(|e| ParamEntry {
                    name: e.name.clone(),
                    kind: e.kind,
                    value: e.value.cast(),
                })
                .collect(),
            by_name: self.by_name.clone(),
        }
    }
}
