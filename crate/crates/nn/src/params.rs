use std::cell::RefCell;

use crate::error::{NnError, Result};
use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

/// Index of a tensor in a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

#[derive(Debug, Clone)]
struct Entry {
    name: String,
    value: Tensor,
    grad: Option<Tensor>,
    trainable: bool,
}

/// Named parameters and buffers owned by one model.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    entries: Vec<Entry>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Register a trainable parameter.
    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        self.push(name.into(), value, true)
    }

    /// Register a non-trainable buffer (running statistics and the like).
    pub fn add_buffer(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        self.push(name.into(), value, false)
    }

    fn push(&mut self, name: String, value: Tensor, trainable: bool) -> ParamId {
        assert!(
            self.entries.iter().all(|e| e.name != name),
            "duplicate parameter name {name}"
        );
        self.entries.push(Entry {
            name,
            value,
            grad: None,
            trainable,
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

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn is_trainable(&self, id: ParamId) -> bool {
        self.entries[id.0].trainable
    }

    pub fn grad(&self, id: ParamId) -> Option<&Tensor> {
        self.entries[id.0].grad.as_ref()
    }

    /// Number of trainable scalars.
    pub fn num_trainable(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| e.trainable)
            .map(|e| e.value.numel())
            .sum()
    }

    /// Bind every entry onto `graph`; parameters are tracked, buffers are constants.
    pub fn bind<'g>(&self, graph: &'g Graph) -> Binding<'g> {
        self.bind_with(graph, true)
    }

    /// Bind every entry as a constant: gradients can still flow to the inputs.
    pub fn bind_frozen<'g>(&self, graph: &'g Graph) -> Binding<'g> {
        self.bind_with(graph, false)
    }

    fn bind_with<'g>(&self, graph: &'g Graph, track: bool) -> Binding<'g> {
        let vars = self
            .entries
            .iter()
            .map(|e| {
                if track && e.trainable {
                    graph.leaf(e.value.clone())
                } else {
                    graph.constant(e.value.clone())
                }
            })
            .collect();
        Binding {
            vars,
            buffer_updates: RefCell::new(Vec::new()),
        }
    }

    /// Pull leaf gradients out of a graph (after `backward`) and apply buffer updates.
    pub fn absorb(&mut self, binding: &Binding<'_>) {
        for (e, v) in self.entries.iter_mut().zip(&binding.vars) {
            if !e.trainable {
                continue;
            }
            if let Some(g) = v.grad() {
                match e.grad.as_mut() {
                    Some(acc) => acc.add_assign(&g),
                    None => e.grad = Some(g),
                }
            }
        }
        for (id, t) in binding.buffer_updates.borrow_mut().drain(..) {
            self.entries[id.0].value = t;
        }
    }

    pub fn zero_grad(&mut self) {
        for e in &mut self.entries {
            e.grad = None;
        }
    }

    pub(crate) fn trainable_mut(&mut self) -> impl Iterator<Item = (usize, &mut Tensor, Option<&Tensor>)> {
        self.entries
            .iter_mut()
            .enumerate()
            .filter(|(_, e)| e.trainable)
            .map(|(i, e)| (i, &mut e.value, e.grad.as_ref()))
    }

    pub fn named(&self) -> Vec<(String, Tensor)> {
        self.entries
            .iter()
            .map(|e| (e.name.clone(), e.value.clone()))
            .collect()
    }

    /// Overwrite values by name; every entry must be present with its shape.
    pub fn load_named(&mut self, tensors: &[(String, Tensor)]) -> Result<()> {
        for e in &mut self.entries {
            let (_, t) = tensors
                .iter()
                .find(|(n, _)| *n == e.name)
                .ok_or_else(|| NnError::Checkpoint(format!("missing tensor {}", e.name)))?;
            if t.shape() != e.value.shape() {
                return Err(NnError::ShapeMismatch {
                    lhs: e.value.shape().to_vec(),
                    rhs: t.shape().to_vec(),
                    context: "checkpoint load",
                });
            }
            e.value = t.clone();
            e.grad = None;
        }
        Ok(())
    }

    /// Apply `f` to every trainable parameter value.
    pub fn map_trainable(&mut self, mut f: impl FnMut(&str, &mut Tensor)) {
        for e in self.entries.iter_mut().filter(|e| e.trainable) {
            f(&e.name, &mut e.value);
        }
    }
}

/// The graph variables for one forward pass over a [`ParamStore`].
pub struct Binding<'g> {
    vars: Vec<Var<'g>>,
    buffer_updates: RefCell<Vec<(ParamId, Tensor)>>,
}

impl<'g> Binding<'g> {
    pub fn var(&self, id: ParamId) -> Var<'g> {
        self.vars[id.0]
    }

    /// Queue a new buffer value to be written back by [`ParamStore::absorb`].
    pub fn update_buffer(&self, id: ParamId, value: Tensor) {
        self.buffer_updates.borrow_mut().push((id, value));
    }
}
