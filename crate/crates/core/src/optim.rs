use serde::{Deserialize, Serialize};

/// Bias-corrected Adam over a flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl Adam {
    pub fn new(len: usize, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            eps,
            step: 0,
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    /// Advances the moments with `grads` and returns the descent step for each
    /// coordinate; callers subtract it from their parameters.
    pub fn step_deltas(&mut self, grads: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; grads.len()];
        self.compute(grads, |i, d| out[i] = d);
        out
    }

    /// `params[i] -= step_i`.
    pub fn apply(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), grads.len());
        self.compute(grads, |i, d| params[i] -= d);
    }

    fn compute(&mut self, grads: &[f64], mut sink: impl FnMut(usize, f64)) {
        assert_eq!(grads.len(), self.m.len(), "gradient length");
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (i, &g) in grads.iter().enumerate() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            sink(i, self.lr * m_hat / (v_hat.sqrt() + self.eps));
        }
    }
}
