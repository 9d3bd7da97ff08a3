use crate::error::{Error, Result};
use crate::tensor::ParamStore;

/// Learning rate used when none is configured.
pub const DEFAULT_LR: f64 = 3e-4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: DEFAULT_LR,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias-corrected moments, one moment pair per parameter.
#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Adam {
            config,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn second_moments(&self) -> &[Vec<f64>] {
        &self.v
    }

    /// Applies one update using the gradients held in `store`. Fails without
    /// touching anything if some parameter has no gradient.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        if let Some(id) = store.ids().find(|&id| store.grad(id).is_none()) {
            return Err(Error::MissingGrad(store.name(id).to_string()));
        }
        if self.m.is_empty() {
            for id in store.ids() {
                let n = store.value(id).numel();
                self.m.push(vec![0.0; n]);
                self.v.push(vec![0.0; n]);
            }
        }
        assert_eq!(self.m.len(), store.len(), "optimizer bound to another store");
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let bias1 = 1.0 - beta1.powf(self.step as f64);
        let bias2 = 1.0 - beta2.powf(self.step as f64);
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let grad = store.grad(id).expect("checked above").data().to_vec();
            let (m, v) = (&mut self.m[id.index()], &mut self.v[id.index()]);
            let theta = store.value_mut(id).data_mut();
            for i in 0..grad.len() {
                let g = grad[i];
                m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
                let m_hat = m[i] / bias1;
                let v_hat = v[i] / bias2;
                theta[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Rescales all gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm(store: &mut ParamStore, max_norm: f64) -> f64 {
    let ids: Vec<_> = store.ids().collect();
    let norm = ids
        .iter()
        .filter_map(|&id| store.grad(id))
        .flat_map(|g| g.data().iter())
        .map(|g| g * g)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for id in ids {
            if let Some(g) = store.grad(id) {
                let scaled: Vec<f64> = g.data().iter().map(|v| (v * scale) - v).collect();
                store.accumulate_grad(id, &scaled);
            }
        }
    }
    norm
}
