//! SGD with heavy-ball momentum.

use crate::error::{Error, Result};
use crate::params::ParamStore;

/// `v ← momentum·v + g; p ← p − lr·v`, elementwise.
pub fn sgd_step(params: &mut [f64], grads: &[f64], velocity: &mut [f64], lr: f64, momentum: f64) {
    assert_eq!(params.len(), grads.len());
    assert_eq!(params.len(), velocity.len());
    for ((p, g), v) in params.iter_mut().zip(grads).zip(velocity.iter_mut()) {
        *v = momentum * *v + g;
        *p -= lr * *v;
    }
}

/// Velocity buffers for every parameter of a store.
#[derive(Debug, Clone)]
pub struct Sgd {
    momentum: f64,
    velocity: Vec<Vec<f64>>,
}

impl Sgd {
    pub fn new(store: &ParamStore, momentum: f64) -> Self {
        Self { momentum, velocity: store.tensors().iter().map(|t| vec![0.0; t.numel()]).collect() }
    }

    /// Applies one update from the gradients held by `store`.
    pub fn step(&mut self, store: &mut ParamStore, lr: f64) -> Result<()> {
        let ids: Vec<_> = store.ids().collect();
        for (id, v) in ids.into_iter().zip(&mut self.velocity) {
            let name = store.name(id).to_owned();
            let t = store.get_mut(id);
            let g = t.grad().ok_or_else(|| Error::MissingGrad(name))?.to_vec();
            sgd_step(t.data_mut(), &g, v, lr, self.momentum);
        }
        Ok(())
    }
}
