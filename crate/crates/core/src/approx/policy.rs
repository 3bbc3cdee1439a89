//! Gaussian policy squashed through `tanh` into `(-1, 1)^A`.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::mlp::{Mlp, MlpTape};
use crate::error::{Error, Result};

pub const LOG_VAR_MIN: f64 = -20.0;
pub const LOG_VAR_MAX: f64 = 2.0;
/// Floor inside `log(1 - tanh(u)^2 + η)`.
pub const TANH_EPS: f64 = 1e-6;

const HALF_LOG_2PI: f64 = 0.918_938_533_204_672_7;

/// Network head: `action_dim` means followed by `action_dim` log-variances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianTanhPolicy {
    net: Mlp,
    action_dim: usize,
}

/// A reparameterized batch of actions, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct PolicySample {
    pub action: Array2<f64>,
    pub log_prob: Array1<f64>,
    pub mean: Array2<f64>,
    pub log_var: Array2<f64>,
    noise: Array2<f64>,
    clamped: Array2<bool>,
    tape: MlpTape,
}

impl GaussianTanhPolicy {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, action_dim: usize, hidden: &[usize], rng: &mut R) -> Self {
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(2 * action_dim);
        Self {
            net: Mlp::new(&sizes, rng),
            action_dim,
        }
    }

    pub fn from_net(net: Mlp) -> Result<Self> {
        let out = net.output_dim();
        if out % 2 != 0 {
            return Err(Error::Structural(format!("policy head of odd width {out}")));
        }
        Ok(Self {
            net,
            action_dim: out / 2,
        })
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut Mlp {
        &mut self.net
    }

    pub fn obs_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    fn head(&self, obs: ArrayView2<'_, f64>) -> Result<(Array2<f64>, Array2<f64>, Array2<bool>, MlpTape)> {
        let (out, tape) = self.net.forward(obs)?;
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric("policy network output", 0));
        }
        let a = self.action_dim;
        let mean = out.slice(s![.., ..a]).to_owned();
        let raw = out.slice(s![.., a..]);
        let clamped = raw.mapv(|v| !(LOG_VAR_MIN..=LOG_VAR_MAX).contains(&v));
        let log_var = raw.mapv(|v| v.clamp(LOG_VAR_MIN, LOG_VAR_MAX));
        Ok((mean, log_var, clamped, tape))
    }

    /// Samples `a = tanh(μ + σ ξ)` for the supplied standard-normal `noise`.
    pub fn sample_with_noise(&self, obs: ArrayView2<'_, f64>, noise: ArrayView2<'_, f64>) -> Result<PolicySample> {
        let (mean, log_var, clamped, tape) = self.head(obs)?;
        if noise.dim() != mean.dim() {
            return Err(Error::Structural(format!(
                "noise shape {:?} for action batch {:?}",
                noise.dim(),
                mean.dim()
            )));
        }
        let (b, a_dim) = mean.dim();
        let mut action = Array2::zeros((b, a_dim));
        let mut log_prob = Array1::zeros(b);
        for i in 0..b {
            let mut lp = 0.0;
            for j in 0..a_dim {
                let xi = noise[[i, j]];
                let sigma = (0.5 * log_var[[i, j]]).exp();
                let act = (mean[[i, j]] + sigma * xi).tanh();
                action[[i, j]] = act;
                lp += -0.5 * xi * xi - 0.5 * log_var[[i, j]] - HALF_LOG_2PI - (1.0 - act * act + TANH_EPS).ln();
            }
            log_prob[i] = lp;
        }
        Ok(PolicySample {
            action,
            log_prob,
            mean,
            log_var,
            noise: noise.to_owned(),
            clamped,
            tape,
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, obs: ArrayView2<'_, f64>, rng: &mut R) -> Result<PolicySample> {
        let noise = Array2::from_shape_simple_fn((obs.nrows(), self.action_dim), || rng.sample(StandardNormal));
        self.sample_with_noise(obs, noise.view())
    }

    /// Backpropagates upstream gradients with respect to the sampled actions
    /// and log-probabilities into the policy parameters.
    pub fn backward(
        &self,
        sample: &PolicySample,
        grad_action: ArrayView2<'_, f64>,
        grad_log_prob: ArrayView1<'_, f64>,
        grad_params: &mut [f64],
    ) {
        let (b, a_dim) = sample.action.dim();
        let mut grad_head = Array2::zeros((b, 2 * a_dim));
        for i in 0..b {
            let gl = grad_log_prob[i];
            for j in 0..a_dim {
                let act = sample.action[[i, j]];
                let one_minus = 1.0 - act * act;
                let du = grad_action[[i, j]] * one_minus + gl * 2.0 * act * one_minus / (one_minus + TANH_EPS);
                grad_head[[i, j]] = du;
                if !sample.clamped[[i, j]] {
                    let sigma = (0.5 * sample.log_var[[i, j]]).exp();
                    grad_head[[i, a_dim + j]] = du * 0.5 * sigma * sample.noise[[i, j]] - 0.5 * gl;
                }
            }
        }
        self.net
            .backward(&sample.tape, grad_head.view(), Some(grad_params), false);
    }

    /// Deterministic action `tanh(μ)` for one observation.
    pub fn mean_action(&self, obs: &[f64]) -> Result<Vec<f64>> {
        let x = ArrayView2::from_shape((1, obs.len()), obs).map_err(|e| Error::Structural(e.to_string()))?;
        let (mean, _, _, _) = self.head(x)?;
        Ok(mean.row(0).iter().map(|m| m.tanh()).collect())
    }

    /// Stochastic action for one observation.
    pub fn sample_one<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        let x = ArrayView2::from_shape((1, obs.len()), obs).map_err(|e| Error::Structural(e.to_string()))?;
        Ok(self.sample(x, rng)?.action.row(0).to_vec())
    }

    /// Log-density of an action in `(-1, 1)^A` under the squashed Gaussian.
    pub fn log_prob(&self, obs: &[f64], action: &[f64]) -> Result<f64> {
        let x = ArrayView2::from_shape((1, obs.len()), obs).map_err(|e| Error::Structural(e.to_string()))?;
        let (mean, log_var, _, _) = self.head(x)?;
        if action.len() != self.action_dim {
            return Err(Error::Structural("action dimension".into()));
        }
        let mut lp = 0.0;
        for (j, &a) in action.iter().enumerate() {
            let u = a.atanh();
            let var = log_var[[0, j]].exp();
            let d = u - mean[[0, j]];
            lp += -0.5 * d * d / var - 0.5 * log_var[[0, j]] - HALF_LOG_2PI - (1.0 - a * a + TANH_EPS).ln();
        }
        Ok(lp)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Policy whose head outputs constant `(mean, log_var)` regardless of input.
    fn constant_policy(mean: f64, log_var: f64) -> GaussianTanhPolicy {
        // 1 -> 2 linear layer with zero weights
        let net = Mlp::from_params(&[1, 2], vec![0.0, 0.0, mean, log_var]).unwrap();
        GaussianTanhPolicy::from_net(net).unwrap()
    }

    #[test]
    fn zero_noise_at_zero_mean_gives_zero_action() {
        let p = constant_policy(0.0, 0.0);
        let s = p
            .sample_with_noise(ndarray::array![[0.3]].view(), ndarray::array![[0.0]].view())
            .unwrap();
        assert_eq!(s.action[[0, 0]], 0.0);
        // log N(0; 0, 1) and log(1 - 0 + 1e-6)
        let expected = -HALF_LOG_2PI - (1.0 + TANH_EPS).ln();
        assert!((s.log_prob[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn actions_stay_in_open_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = GaussianTanhPolicy::new(3, 2, &[8, 8], &mut rng);
        let obs = Array2::from_shape_fn((64, 3), |(i, j)| (i as f64 - 32.0) * 0.2 + j as f64);
        let s = p.sample(obs.view(), &mut rng).unwrap();
        assert!(s.action.iter().all(|a| a.abs() <= 1.0));
    }

    #[test]
    fn log_var_is_clamped() {
        let p = constant_policy(0.0, 50.0);
        let s = p
            .sample_with_noise(ndarray::array![[0.0]].view(), ndarray::array![[0.5]].view())
            .unwrap();
        assert_eq!(s.log_var[[0, 0]], LOG_VAR_MAX);
    }

    #[test]
    fn sampled_log_prob_matches_density() {
        let p = constant_policy(0.4, -0.7);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let s = p.sample(ndarray::array![[0.0]].view(), &mut rng).unwrap();
        let lp = p.log_prob(&[0.0], &[s.action[[0, 0]]]).unwrap();
        assert!((lp - s.log_prob[0]).abs() < 1e-9);
    }
}
