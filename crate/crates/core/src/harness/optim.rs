use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::harness::OptimConfig;
use crate::nn::{ParamId, ParamStore};
use crate::tape::Gradients;
use crate::tensor::Tensor;

/// Adam with decoupled weight decay. Decay applies to matrices and kernels
/// (rank ≥ 2), not to biases or normalization parameters.
#[derive(Debug, Clone)]
pub struct AdamW {
    config: OptimConfig,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    steps: u64,
}

impl AdamW {
    pub fn new(config: OptimConfig, store: &ParamStore) -> Self {
        let zeros: Vec<Vec<f64>> = store.iter().map(|(_, t)| vec![0.0; t.numel()]).collect();
        Self {
            config,
            second: zeros.clone(),
            first: zeros,
            steps: 0,
        }
    }

    /// Step size for update `step` (0-based) under the configured schedule.
    pub fn lr_at(&self, step: usize) -> f64 {
        let c = &self.config;
        if c.cosine && c.steps > 0 {
            0.5 * c.lr * (1.0 + (PI * step as f64 / c.steps as f64).cos())
        } else {
            c.lr
        }
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &Gradients) -> Result<()> {
        let lr = self.lr_at(self.steps as usize);
        self.steps += 1;
        let c = &self.config;
        let t = self.steps as i32;
        let (bc1, bc2) = (1.0 - c.beta1.powi(t), 1.0 - c.beta2.powi(t));
        for i in 0..store.len() {
            let id = ParamId(i);
            let name = store.name(id).to_string();
            let g = grads
                .by_name(&name)
                .ok_or_else(|| Error::Contract(format!("no gradient for parameter {name}")))?;
            let p = store.get(id);
            let decay = if p.rank() >= 2 { c.weight_decay } else { 0.0 };
            let (m, v) = (&mut self.first[i], &mut self.second[i]);
            let data: Vec<f64> = p
                .data()
                .iter()
                .zip(g.data())
                .enumerate()
                .map(|(j, (&w, &gj))| {
                    m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * gj;
                    v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * gj * gj;
                    let update = (m[j] / bc1) / ((v[j] / bc2).sqrt() + c.eps);
                    w - lr * (update + decay * w)
                })
                .collect();
            let shape = p.shape().to_vec();
            store.set(id, Tensor::new(shape, data)?)?;
        }
        Ok(())
    }
}
