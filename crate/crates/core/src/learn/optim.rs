use crate::error::{check_dim, Error, Result};
use crate::points::PointSet;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamWConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Parameter tensors with AdamW moment accumulators.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub params: Vec<PointSet>,
    trainable: Vec<bool>,
    first: Vec<PointSet>,
    second: Vec<PointSet>,
    step: usize,
    pub config: AdamWConfig,
}

impl TrainState {
    pub fn new(params: Vec<PointSet>, config: AdamWConfig) -> Self {
        let zeros: Vec<PointSet> = params
            .iter()
            .map(|p| PointSet::zeros(p.nrows(), p.ncols()))
            .collect();
        Self {
            trainable: vec![true; params.len()],
            first: zeros.clone(),
            second: zeros,
            params,
            step: 0,
            config,
        }
    }

    /// Frozen parameters receive neither updates nor weight decay.
    pub fn set_trainable(&mut self, index: usize, trainable: bool) {
        self.trainable[index] = trainable;
    }

    pub fn is_trainable(&self, index: usize) -> bool {
        self.trainable[index]
    }

    pub fn step(&self) -> usize {
        self.step
    }

    /// One AdamW update with decoupled weight decay.
    pub fn adamw_step(&mut self, grads: &[PointSet]) -> Result<()> {
        check_dim(self.params.len(), grads.len(), "gradient count")?;
        for (k, (p, g)) in self.params.iter().zip(grads).enumerate() {
            if !self.trainable[k] {
                continue;
            }
            if p.nrows() != g.nrows() || p.ncols() != g.ncols() {
                return Err(Error::InvalidInput(format!(
                    "gradient {k} has shape {}x{}, parameter is {}x{}",
                    g.nrows(),
                    g.ncols(),
                    p.nrows(),
                    p.ncols()
                )));
            }
            if !g.is_finite() {
                return Err(Error::Training {
                    step: self.step + 1,
                    reason: format!("non-finite gradient for parameter {k}"),
                });
            }
        }
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let bias1 = 1.0 - c.beta1.powi(t);
        let bias2 = 1.0 - c.beta2.powi(t);
        let decay = 1.0 - c.lr * c.weight_decay;
        for (k, grad) in grads.iter().enumerate() {
            if !self.trainable[k] {
                continue;
            }
            let g = grad.as_slice();
            let p = self.params[k].as_mut_slice();
            let m = self.first[k].as_mut_slice();
            let v = self.second[k].as_mut_slice();
            for i in 0..p.len() {
                p[i] *= decay;
                m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
                v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
                let m_hat = m[i] / bias1;
                let v_hat = v[i] / bias2;
                p[i] -= c.lr * m_hat / (v_hat.sqrt() + c.eps);
            }
        }
        Ok(())
    }
}
