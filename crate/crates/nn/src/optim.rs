use crate::error::{NnError, Result};
use crate::params::ParamStore;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerKind {
    Sgd { lr: f64 },
    Adam { lr: f64, beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub fn adam(lr: f64, beta1: f64, beta2: f64) -> Self {
        OptimizerKind::Adam {
            lr,
            beta1,
            beta2,
            eps: 1e-8,
        }
    }

    pub fn lr(&self) -> f64 {
        match *self {
            OptimizerKind::Sgd { lr } | OptimizerKind::Adam { lr, .. } => lr,
        }
    }
}

/// Optimizer with per-parameter moment buffers.
#[derive(Debug, Clone)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    step: u64,
    moments: Vec<Option<(Tensor, Tensor)>>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind) -> Self {
        Self {
            kind,
            step: 0,
            moments: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Update `params` in place from `grads` (matched by position).
    pub fn update(&mut self, params: &mut [Tensor], grads: &[Tensor]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(NnError::ShapeMismatch {
                lhs: vec![params.len()],
                rhs: vec![grads.len()],
                context: "optimizer parameter count",
            });
        }
        for (p, g) in params.iter().zip(grads) {
            if p.shape() != g.shape() {
                return Err(NnError::ShapeMismatch {
                    lhs: p.shape().to_vec(),
                    rhs: g.shape().to_vec(),
                    context: "optimizer step",
                });
            }
        }
        self.step += 1;
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            self.apply(i, p, g);
        }
        Ok(())
    }

    /// One step over every trainable parameter of `store` that has a gradient.
    pub fn step(&mut self, store: &mut ParamStore) {
        self.step += 1;
        let entries: Vec<_> = store.trainable_mut().collect();
        for (i, p, g) in entries {
            if let Some(g) = g {
                let g = g.clone();
                self.apply(i, p, &g);
            }
        }
    }

    fn apply(&mut self, slot: usize, p: &mut Tensor, g: &Tensor) {
        match self.kind {
            OptimizerKind::Sgd { lr } => {
                for (w, d) in p.data_mut().iter_mut().zip(g.data()) {
                    *w -= lr * d;
                }
            }
            OptimizerKind::Adam {
                lr,
                beta1,
                beta2,
                eps,
            } => {
                if self.moments.len() <= slot {
                    self.moments.resize(slot + 1, None);
                }
                let (m, v) = self.moments[slot]
                    .get_or_insert_with(|| (Tensor::zeros(p.shape()), Tensor::zeros(p.shape())));
                let t = self.step as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for (((w, &d), mi), vi) in p
                    .data_mut()
                    .iter_mut()
                    .zip(g.data())
                    .zip(m.data_mut())
                    .zip(v.data_mut())
                {
                    *mi = beta1 * *mi + (1.0 - beta1) * d;
                    *vi = beta2 * *vi + (1.0 - beta2) * d * d;
                    let mhat = *mi / c1;
                    let vhat = *vi / c2;
                    *w -= lr * mhat / (vhat.sqrt() + eps);
                }
            }
        }
    }

    /// Moment buffers and counters as named tensors for checkpointing.
    pub fn state_tensors(&self, store: &ParamStore) -> Vec<(String, Tensor)> {
        let mut out = vec![("__optim__/step".to_string(), Tensor::scalar(self.step as f64))];
        for (slot, mv) in self.moments.iter().enumerate() {
            if let Some((m, v)) = mv {
                let name = store.name(crate::params::ParamId(slot));
                out.push((format!("__optim__/m/{name}"), m.clone()));
                out.push((format!("__optim__/v/{name}"), v.clone()));
            }
        }
        out
    }

    pub fn load_state(&mut self, store: &ParamStore, tensors: &[(String, Tensor)]) {
        let find = |n: &str| tensors.iter().find(|(k, _)| k == n).map(|(_, t)| t.clone());
        if let Some(s) = find("__optim__/step") {
            self.step = s.item() as u64;
        }
        self.moments = store
            .ids()
            .map(|id| {
                let name = store.name(id);
                match (find(&format!("__optim__/m/{name}")), find(&format!("__optim__/v/{name}"))) {
                    (Some(m), Some(v)) => Some((m, v)),
                    _ => None,
                }
            })
            .collect();
    }
}

/// Clamp every entry of every tensor into `[-bound, bound]`.
pub fn clip_weights(params: &mut [Tensor], bound: f64) {
    for p in params {
        clip_tensor(p, bound);
    }
}

pub fn clip_tensor(p: &mut Tensor, bound: f64) {
    for w in p.data_mut() {
        *w = w.clamp(-bound, bound);
    }
}
