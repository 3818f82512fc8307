use indexmap::IndexMap;

use super::graph::{Gradients, Graph, Precision, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Named parameter tensors in insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    tensors: IndexMap<String, Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) {
        self.tensors.insert(name.into(), t);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors.get(name).ok_or_else(|| Error::MissingParam(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.tensors.get_mut(name).ok_or_else(|| Error::MissingParam(name.to_string()))
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.tensors.get_index_of(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
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

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn tensor_at(&self, i: usize) -> &Tensor {
        &self.tensors[i]
    }

    pub fn tensor_at_mut(&mut self, i: usize) -> &mut Tensor {
        &mut self.tensors[i]
    }

    pub fn retain(&mut self, keep: impl Fn(&str) -> bool) {
        self.tensors.retain(|k, _| keep(k));
    }

    pub fn into_inner(self) -> IndexMap<String, Tensor> {
        self.tensors
    }

    pub fn from_map(tensors: IndexMap<String, Tensor>) -> Self {
        ParamStore { tensors }
    }
}

/// One forward/backward pass over a parameter store. Parameters enter the
/// graph lazily the first time they are used.
pub struct Session<'a> {
    pub graph: Graph,
    store: &'a ParamStore,
    bound: Vec<Option<Var>>,
    frozen: bool,
}

impl<'a> Session<'a> {
    pub fn new(store: &'a ParamStore, precision: Precision) -> Self {
        Session {
            graph: Graph::with_precision(precision),
            store,
            bound: vec![None; store.len()],
            frozen: false,
        }
    }

    /// Parameters enter as constants: for inference.
    pub fn inference(store: &'a ParamStore, precision: Precision) -> Self {
        Session {
            frozen: true,
            ..Session::new(store, precision)
        }
    }

    pub fn store(&self) -> &'a ParamStore {
        self.store
    }

    pub fn param(&mut self, name: &str) -> Result<Var> {
        let i = self
            .store
            .index_of(name)
            .ok_or_else(|| Error::MissingParam(name.to_string()))?;
        if let Some(v) = self.bound[i] {
            return Ok(v);
        }
        let t = self.store.tensor_at(i).clone();
        let v = if self.frozen {
            self.graph.constant(t)
        } else {
            self.graph.param(t)
        };
        self.bound[i] = Some(v);
        Ok(v)
    }

    /// Gradients aligned with the store's parameter order; `None` for
    /// parameters that were unused or unreachable.
    pub fn param_grads(&self, loss: Var) -> Result<Vec<Option<Tensor>>> {
        let mut grads: Gradients = self.graph.backward(loss)?;
        Ok(self.bound.iter().map(|b| b.and_then(|v| grads.take(v))).collect())
    }
}
