//! Named parameter storage shared by all layers.

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use std::collections::HashMap;

/// Index of a parameter in a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

#[derive(Debug)]
struct Entry {
    name: String,
    tensor: Tensor,
    trainable: bool,
}

/// Flat collection of named tensors: trainable weights plus persistent state
/// such as batch-norm running statistics. Checkpoints serialize the whole
/// store by name.
#[derive(Debug, Default)]
pub struct ParamStore {
    entries: Vec<Entry>,
    by_name: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    pub fn add(&mut self, name: impl Into<String>, mut tensor: Tensor, trainable: bool) -> ParamId {
        let name = name.into();
        assert!(
            !self.by_name.contains_key(&name),
            "duplicate parameter name {name}"
        );
        tensor.set_requires_grad(trainable);
        let id = ParamId(self.entries.len());
        self.by_name.insert(name.clone(), id.0);
        self.entries.push(Entry {
            name,
            tensor,
            trainable,
        });
        id
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].tensor
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.entries[id.0].tensor
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn lookup(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).map(|i| ParamId(*i))
    }

    pub fn is_trainable(&self, id: ParamId) -> bool {
        self.entries[id.0].trainable
    }

    /// Mark a parameter frozen: it keeps its values but stops receiving
    /// gradients and optimizer updates.
    pub fn freeze(&mut self, id: ParamId) {
        self.entries[id.0].trainable = false;
        self.entries[id.0].tensor.set_requires_grad(false);
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn trainable_ids(&self) -> Vec<ParamId> {
        (0..self.entries.len())
            .filter(|i| self.entries[*i].trainable)
            .map(ParamId)
            .collect()
    }

    pub fn zero_grads(&mut self) {
        for e in &mut self.entries {
            e.tensor.zero_grad();
        }
    }

    pub fn accumulate_grad(&mut self, id: ParamId, delta: &[f64]) -> Result<()> {
        if !self.entries[id.0].trainable {
            return Err(Error::contract(format!(
                "gradient for frozen parameter {}",
                self.entries[id.0].name
            )));
        }
        self.entries[id.0].tensor.accumulate_grad(delta)
    }

    pub fn total_trainable_values(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| e.trainable)
            .map(|e| e.tensor.numel())
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn named_roundtrip_and_freeze() {
        let mut store = ParamStore::new();
        let id = store.add("w", Tensor::zeros(vec![2, 2]), true);
        assert_eq!(store.name(id), "w");
        assert_eq!(store.lookup("w"), Some(id));
        assert!(store.is_trainable(id));
        store.freeze(id);
        assert!(!store.is_trainable(id));
        assert!(store.accumulate_grad(id, &[0.0; 4]).is_err());
    }
}
