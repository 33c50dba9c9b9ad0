use serde::{Deserialize, Serialize};

use super::graph::{Gradients, Graph, NodeId};
use super::tensor::Tensor;

/// Handle to a parameter within a [`ParamSet`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamId(pub(crate) usize);

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
}

/// Named parameter tensors for a model. Allocation order is deterministic
/// given the model config, which is what checkpoint reload relies on.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ParamSet {
    entries: Vec<Param>,
}

impl ParamSet {
    pub fn new() -> Self {
        ParamSet::default()
    }

    pub fn add(&mut self, name: &str, value: Tensor) -> ParamId {
        self.entries.push(Param {
            name: name.to_string(),
            value,
        });
        ParamId(self.entries.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.entries[id.0].value
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.entries.iter()
    }

    /// Create one leaf per parameter on the graph.
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> Binding {
        let nodes = self
            .entries
            .iter()
            .map(|p| g.leaf(p.value.clone(), trainable))
            .collect();
        Binding { nodes }
    }

    /// Copy values from another set with identical layout (checkpoint load,
    /// instance-tailoring restore).
    pub fn copy_from(&mut self, other: &ParamSet) {
        assert_eq!(self.entries.len(), other.entries.len(), "param layout mismatch");
        for (a, b) in self.entries.iter_mut().zip(&other.entries) {
            assert_eq!(a.name, b.name, "param name mismatch");
            assert!(a.value.same_shape(&b.value), "param shape mismatch for {}", a.name);
            a.value = b.value.clone();
        }
    }
}

/// Graph leaves for one forward pass over a [`ParamSet`].
pub struct Binding {
    nodes: Vec<NodeId>,
}

impl Binding {
    pub fn node(&self, id: ParamId) -> NodeId {
        self.nodes[id.0]
    }

    /// Gradients aligned with the param set; `None` where a parameter did not
    /// participate in the loss.
    pub fn collect(&self, grads: &Gradients) -> Vec<Option<Tensor>> {
        self.nodes.iter().map(|&n| grads.get(n).cloned()).collect()
    }
}
