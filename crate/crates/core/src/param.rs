//! Named parameters with freeze flags and optimizer slots.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::autodiff::Graph;
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::Real;

/// Which registry a parameter belongs to. A model keeps its own weights
/// in one store and the shared autoencoder weights in another.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StoreTag {
    Model,
    Bundle,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId {
    pub store: StoreTag,
    /// Identifies the store instance, so that two stores with the same tag
    /// can be bound into one graph without their ids colliding.
    pub owner: u64,
    pub index: u32,
}

static NEXT_OWNER: AtomicU64 = AtomicU64::new(1);

#[derive(Clone, Debug)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub trainable: bool,
    pub grad: Vec<Real>,
    pub adam_m: Vec<Real>,
    pub adam_v: Vec<Real>,
    pub step_count: u64,
}

impl Parameter {
    pub fn new(name: impl Into<String>, value: Tensor, trainable: bool) -> Self {
        let n = value.numel();
        Parameter {
            name: name.into(),
            value,
            trainable,
            grad: vec![0.0; n],
            adam_m: vec![0.0; n],
            adam_v: vec![0.0; n],
            step_count: 0,
        }
    }

    pub fn numel(&self) -> usize {
        self.value.numel()
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }
}

#[derive(Clone, Debug)]
pub struct ParamStore {
    tag: StoreTag,
    owner: u64,
    params: Vec<Parameter>,
    by_name: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new(tag: StoreTag) -> Self {
        ParamStore {
            tag,
            owner: NEXT_OWNER.fetch_add(1, Ordering::Relaxed),
            params: Vec::new(),
            by_name: HashMap::new(),
        }
    }

    pub fn tag(&self) -> StoreTag {
        self.tag
    }

    pub fn owner(&self) -> u64 {
        self.owner
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor, trainable: bool) -> Result<ParamId> {
        let name = name.into();
        if self.by_name.contains_key(&name) {
            return Err(Error::DuplicateParameter(name));
        }
        let index = self.params.len();
        self.by_name.insert(name.clone(), index);
        self.params.push(Parameter::new(name, value, trainable));
        Ok(ParamId {
            store: self.tag,
            owner: self.owner,
            index: index as u32,
        })
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        debug_assert_eq!((id.store, id.owner), (self.tag, self.owner));
        &self.params[id.index as usize]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        debug_assert_eq!((id.store, id.owner), (self.tag, self.owner));
        &mut self.params[id.index as usize]
    }

    pub fn id_of(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).map(|&i| ParamId {
            store: self.tag,
            owner: self.owner,
            index: i as u32,
        })
    }

    pub fn by_name(&self, name: &str) -> Option<&Parameter> {
        self.by_name.get(name).map(|&i| &self.params[i])
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        (0..self.params.len()).map(move |i| ParamId {
            store: self.tag,
            owner: self.owner,
            index: i as u32,
        })
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.params.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn numel(&self) -> usize {
        self.params.iter().map(Parameter::numel).sum()
    }

    pub fn set_trainable(&mut self, trainable: bool) {
        self.params.iter_mut().for_each(|p| p.trainable = trainable);
    }

    pub fn zero_grad(&mut self) {
        self.params.iter_mut().for_each(Parameter::zero_grad);
    }

    /// Adds the gradients that `graph` holds for this store's bound parameters.
    pub fn accumulate_grads(&mut self, graph: &Graph) {
        for (id, var) in graph.bound_params() {
            if id.owner != self.owner {
                continue;
            }
            if let Some(g) = graph.grad(var) {
                let p = &mut self.params[id.index as usize];
                p.grad.iter_mut().zip(g).for_each(|(acc, &d)| *acc += d);
            }
        }
    }

    /// Overwrites a parameter value, keeping its shape.
    pub fn set_value(&mut self, id: ParamId, value: Tensor) -> Result<()> {
        let p = self.get_mut(id);
        if p.value.shape() != value.shape() {
            return Err(Error::ShapeMismatch {
                op: "set_value",
                left: p.value.shape().to_vec(),
                right: value.shape().to_vec(),
            });
        }
        p.value = value;
        Ok(())
    }
}
