use std::collections::BTreeMap;

use super::tensor::Tensor;
use super::weights::Params;
use crate::error::{Error, Result};

/// RMSprop without momentum: `v ← αv + (1−α)g²`, `p ← p − lr·g/(√v + ε)`.
/// Updated parameters are rounded to f32 so checkpoints are exact.
#[derive(Debug, Clone, PartialEq)]
pub struct RmsProp {
    pub lr: f64,
    pub alpha: f64,
    pub eps: f64,
    square_avg: BTreeMap<String, Vec<f64>>,
}

impl RmsProp {
    pub fn new(lr: f64, alpha: f64, eps: f64) -> Self {
        RmsProp {
            lr,
            alpha,
            eps,
            square_avg: BTreeMap::new(),
        }
    }

    /// Applies one update for every `(name, grad)` pair.
    pub fn step(&mut self, params: &mut Params, grads: &[(String, Tensor)]) -> Result<()> {
        for (name, g) in grads {
            if !g.is_finite() {
                return Err(Error::Numeric(format!("non-finite gradient for `{name}`")));
            }
            let p = params
                .get_mut(name)
                .ok_or_else(|| Error::Checkpoint(format!("unknown parameter `{name}`")))?;
            let v = self
                .square_avg
                .entry(name.clone())
                .or_insert_with(|| vec![0.0; g.len()]);
            for ((pi, gi), vi) in p.data.iter_mut().zip(&g.data).zip(v.iter_mut()) {
                *vi = self.alpha * *vi + (1.0 - self.alpha) * gi * gi;
                *pi = (*pi - self.lr * gi / (vi.sqrt() + self.eps)) as f32 as f64;
            }
        }
        Ok(())
    }

    pub fn state(&self) -> &BTreeMap<String, Vec<f64>> {
        &self.square_avg
    }

    pub fn set_state(&mut self, state: BTreeMap<String, Vec<f64>>) {
        self.square_avg = state;
    }
}
