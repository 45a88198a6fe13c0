use super::{Architecture, ModelWeights};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// One bias-corrected Adam step on a flat parameter slice. `t` counts from 1.
pub fn adam_update(w: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64], t: u64, cfg: &AdamConfig) {
    let c1 = 1.0 - cfg.beta1.powi(t as i32);
    let c2 = 1.0 - cfg.beta2.powi(t as i32);
    for i in 0..w.len() {
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        w[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
    }
}

/// Adam state for a whole network.
#[derive(Debug, Clone)]
pub struct Adam {
    pub cfg: AdamConfig,
    m: ModelWeights,
    v: ModelWeights,
    t: u64,
}

impl Adam {
    pub fn new(arch: &Architecture, cfg: AdamConfig) -> Self {
        Self {
            cfg,
            m: ModelWeights::zeros(arch),
            v: ModelWeights::zeros(arch),
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, weights: &mut ModelWeights, grads: &ModelWeights) {
        self.t += 1;
        let t = self.t;
        for (((w, g), m), v) in weights
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut())
        {
            adam_update(w, g, m, v, t, &self.cfg);
        }
    }
}
