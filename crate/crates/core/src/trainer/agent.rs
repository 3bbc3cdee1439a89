//! Soft actor-critic updates shared by the quantile and scalar critic variants.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::approx::{
    mse_batch, quantile_huber_batch, quantile_means, quantile_midpoints, GaussianTanhPolicy, QuantileCritic,
};
use crate::error::{Error, Result};
use crate::lagrange::scalarize;
use crate::mdp::RewardMode;
use crate::optim::Adam;

use super::replay::Batch;
use super::{Algo, TrainerConfig};

/// How online critics are regressed onto the target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CriticLoss {
    QuantileHuber { kappa: f64 },
    Mse,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct UpdateStats {
    pub critic_loss: f64,
    pub policy_loss: f64,
    pub temperature: f64,
}

#[derive(Debug, Clone)]
pub struct Agent {
    pub policy: GaussianTanhPolicy,
    pub critics: [QuantileCritic; 2],
    pub targets: [QuantileCritic; 2],
    pub log_alpha: f64,
    pub policy_opt: Adam,
    pub critic_opts: [Adam; 2],
    pub alpha_opt: Adam,
    pub loss: CriticLoss,
    pub gamma: f64,
    pub tau: f64,
    pub target_entropy: f64,
    tau_hat: Vec<f64>,
}

impl Agent {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, action_dim: usize, cfg: &TrainerConfig, algo: Algo, rng: &mut R) -> Self {
        let hidden = vec![cfg.hidden_width; cfg.hidden_layers];
        let (outputs, loss) = match algo {
            Algo::QrsacL => (cfg.quantiles, CriticLoss::QuantileHuber { kappa: cfg.kappa }),
            Algo::SacL => (1, CriticLoss::Mse),
        };
        let policy = GaussianTanhPolicy::new(obs_dim, action_dim, &hidden, rng);
        let critics = [
            QuantileCritic::new(obs_dim, action_dim, &hidden, outputs, rng),
            QuantileCritic::new(obs_dim, action_dim, &hidden, outputs, rng),
        ];
        let adam = |n: usize| Adam::new(n, cfg.model_lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
        Self {
            policy_opt: adam(policy.net().num_params()),
            critic_opts: [adam(critics[0].net().num_params()), adam(critics[1].net().num_params())],
            alpha_opt: adam(1),
            targets: critics.clone(),
            policy,
            critics,
            log_alpha: cfg.init_temperature.ln(),
            loss,
            gamma: cfg.gamma,
            tau: cfg.tau,
            target_entropy: cfg.target_entropy.unwrap_or(-(action_dim as f64)),
            tau_hat: quantile_midpoints(outputs),
        }
    }

    pub fn temperature(&self) -> f64 {
        self.log_alpha.exp()
    }

    pub fn tau_hat(&self) -> &[f64] {
        &self.tau_hat
    }

    /// Critic, policy, temperature and target updates on one batch.
    pub fn update<R: Rng + ?Sized>(
        &mut self,
        batch: &Batch,
        lambdas: &[f64],
        mode: RewardMode,
        rng: &mut R,
        step: u64,
    ) -> Result<UpdateStats> {
        let rewards = scalarized_batch(batch, lambdas, mode)?;
        let critic_loss = self.critic_update(batch, rewards.view(), rng, step)?;
        let (policy_loss, _) = self.policy_and_temperature_update(batch.obs.view(), rng, step)?;
        self.soft_update_targets();
        Ok(UpdateStats {
            critic_loss,
            policy_loss,
            temperature: self.temperature(),
        })
    }

    /// Per-row distributional Bellman targets, `B × K`.
    pub fn bellman_targets<R: Rng + ?Sized>(
        &self,
        batch: &Batch,
        rewards: ArrayView1<'_, f64>,
        rng: &mut R,
    ) -> Result<Array2<f64>> {
        let next = self.policy.sample(batch.next_obs.view(), rng)?;
        let z1 = self.targets[0].quantiles(batch.next_obs.view(), next.action.view())?;
        let z2 = self.targets[1].quantiles(batch.next_obs.view(), next.action.view())?;
        let (m1, m2) = (quantile_means(&z1), quantile_means(&z2));
        let alpha = self.temperature();
        let mut y = z1;
        for (i, mut row) in y.axis_iter_mut(Axis(0)).enumerate() {
            if m2[i] < m1[i] {
                row.assign(&z2.row(i));
            }
            let keep = self.gamma * (1.0 - batch.done[i]);
            let lp = next.log_prob[i];
            row.mapv_inplace(|z| rewards[i] + keep * (z - alpha * lp));
        }
        Ok(y)
    }

    pub fn critic_update<R: Rng + ?Sized>(
        &mut self,
        batch: &Batch,
        rewards: ArrayView1<'_, f64>,
        rng: &mut R,
        step: u64,
    ) -> Result<f64> {
        let y = self.bellman_targets(batch, rewards, rng)?;
        let mut grads = Vec::with_capacity(2);
        let mut total = 0.0;
        for critic in &self.critics {
            let (loss, g) = critic_loss_and_grad(critic, self.loss, &self.tau_hat, batch, y.view())?;
            if !loss.is_finite() || g.iter().any(|v| !v.is_finite()) {
                return Err(Error::numeric("critic loss", step));
            }
            total += loss;
            grads.push(g);
        }
        for ((critic, opt), g) in self.critics.iter_mut().zip(&mut self.critic_opts).zip(&grads) {
            opt.apply(critic.net_mut().params_mut(), g);
        }
        Ok(total / 2.0)
    }

    /// Returns `(policy loss, temperature loss)`.
    pub fn policy_and_temperature_update<R: Rng + ?Sized>(
        &mut self,
        obs: ArrayView2<'_, f64>,
        rng: &mut R,
        step: u64,
    ) -> Result<(f64, f64)> {
        let noise = Array2::from_shape_simple_fn((obs.nrows(), self.policy.action_dim()), || {
            rng.sample(rand_distr::StandardNormal)
        });
        let alpha = self.temperature();
        let (loss, grad, log_probs) = policy_loss_and_grad(&self.policy, &self.critics, obs, noise.view(), alpha)?;
        let (t_loss, t_grad) = temperature_loss_and_grad(self.log_alpha, log_probs.view(), self.target_entropy);
        if !(loss.is_finite() && t_loss.is_finite()) || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::numeric("policy loss", step));
        }
        self.policy_opt.apply(self.policy.net_mut().params_mut(), &grad);
        let mut la = [self.log_alpha];
        self.alpha_opt.apply(&mut la, &[t_grad]);
        self.log_alpha = la[0];
        Ok((loss, t_loss))
    }

    pub fn soft_update_targets(&mut self) {
        for (target, online) in self.targets.iter_mut().zip(&self.critics) {
            target.net_mut().polyak_update(online.net(), self.tau);
        }
    }
}

/// Effective per-transition reward under the given multipliers.
pub fn scalarized_batch(batch: &Batch, lambdas: &[f64], mode: RewardMode) -> Result<Array1<f64>> {
    let mut out = Array1::zeros(batch.len());
    for (i, r) in out.iter_mut().enumerate() {
        let g = batch.constraints.row(i);
        *r = scalarize(batch.rewards[i], g.as_slice().expect("standard layout"), lambdas, mode)?;
    }
    Ok(out)
}

/// Critic regression loss and its gradient with respect to the critic parameters.
pub fn critic_loss_and_grad(
    critic: &QuantileCritic,
    loss: CriticLoss,
    tau_hat: &[f64],
    batch: &Batch,
    targets: ArrayView2<'_, f64>,
) -> Result<(f64, Vec<f64>)> {
    let (q, tape) = critic.forward(batch.obs.view(), batch.actions.view())?;
    let (value, grad_out) = match loss {
        CriticLoss::QuantileHuber { kappa } => quantile_huber_batch(q.view(), targets, tau_hat, kappa)?,
        CriticLoss::Mse => mse_batch(q.view(), targets.column(0))?,
    };
    let mut grad = vec![0.0; critic.net().num_params()];
    critic.backward(&tape, grad_out.view(), Some(&mut grad), false);
    Ok((value, grad))
}

/// `mean(α log π(a|s) − min_c Q_c(s, a))` with reparameterized actions.
///
/// Returns the loss, its gradient with respect to the policy parameters, and
/// the batch log-probabilities.
pub fn policy_loss_and_grad(
    policy: &GaussianTanhPolicy,
    critics: &[QuantileCritic; 2],
    obs: ArrayView2<'_, f64>,
    noise: ArrayView2<'_, f64>,
    alpha: f64,
) -> Result<(f64, Vec<f64>, Array1<f64>)> {
    let sample = policy.sample_with_noise(obs, noise)?;
    let (q1, tape1) = critics[0].forward(obs, sample.action.view())?;
    let (q2, tape2) = critics[1].forward(obs, sample.action.view())?;
    let (m1, m2) = (quantile_means(&q1), quantile_means(&q2));
    let b = obs.nrows() as f64;
    let k = q1.ncols() as f64;
    let mut g1 = Array2::zeros(q1.dim());
    let mut g2 = Array2::zeros(q2.dim());
    let mut loss = 0.0;
    for i in 0..obs.nrows() {
        let q = if m2[i] < m1[i] {
            g2.row_mut(i).fill(-1.0 / (b * k));
            m2[i]
        } else {
            g1.row_mut(i).fill(-1.0 / (b * k));
            m1[i]
        };
        loss += alpha * sample.log_prob[i] - q;
    }
    loss /= b;
    let da1 = critics[0].backward(&tape1, g1.view(), None, true).expect("action gradient");
    let da2 = critics[1].backward(&tape2, g2.view(), None, true).expect("action gradient");
    let grad_action = da1 + da2;
    let grad_log_prob = Array1::from_elem(obs.nrows(), alpha / b);
    let mut grad = vec![0.0; policy.net().num_params()];
    policy.backward(&sample, grad_action.view(), grad_log_prob.view(), &mut grad);
    Ok((loss, grad, sample.log_prob))
}

/// `−log α · mean(log π + H̄)` and its derivative in `log α`.
pub fn temperature_loss_and_grad(log_alpha: f64, log_probs: ArrayView1<'_, f64>, target_entropy: f64) -> (f64, f64) {
    let gap = log_probs.mean().unwrap_or(0.0) + target_entropy;
    (-log_alpha * gap, -gap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn tiny_batch() -> Batch {
        Batch {
            obs: array![[0.1, 0.2], [0.3, -0.4]],
            actions: array![[0.5], [-0.5]],
            rewards: array![0.3, -1.0],
            constraints: array![[-0.5], [0.25]],
            next_obs: array![[0.0, 0.1], [0.2, 0.2]],
            done: array![1.0, 0.0],
        }
    }

    #[test]
    fn scalarization_examples() {
        let b = tiny_batch();
        assert_eq!(scalarized_batch(&b, &[0.0], RewardMode::Car).unwrap().to_vec(), vec![0.0, 0.0]);
        assert_eq!(scalarized_batch(&b, &[2.0], RewardMode::Car).unwrap()[0], -1.0);
        assert_eq!(
            scalarized_batch(&b, &[2.0], RewardMode::RewardPlusConstraints).unwrap().to_vec(),
            vec![-0.7, -0.5]
        );
    }

    #[test]
    fn terminal_rows_do_not_bootstrap() {
        let cfg = TrainerConfig {
            hidden_width: 8,
            hidden_layers: 2,
            ..TrainerConfig::default()
        };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let agent = Agent::new(2, 1, &cfg, Algo::QrsacL, &mut rng);
        let b = tiny_batch();
        let r = array![0.7, 0.0];
        let y = agent.bellman_targets(&b, r.view(), &mut rng).unwrap();
        assert!(y.row(0).iter().all(|&v| v == 0.7));
        assert!(y.row(1).iter().any(|&v| v != 0.0));
    }

    #[test]
    fn myopic_targets_equal_rewards() {
        let cfg = TrainerConfig {
            hidden_width: 8,
            hidden_layers: 2,
            gamma: 0.0,
            ..TrainerConfig::default()
        };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let agent = Agent::new(2, 1, &cfg, Algo::SacL, &mut rng);
        let r = array![0.25, -3.0];
        let y = agent.bellman_targets(&tiny_batch(), r.view(), &mut rng).unwrap();
        assert_eq!(y.column(0).to_vec(), vec![0.25, -3.0]);
    }

    #[test]
    fn temperature_gradient_vanishes_at_target_entropy() {
        let lp = array![0.5, 1.5];
        let (_, g) = temperature_loss_and_grad(0.3, lp.view(), -1.0);
        assert_eq!(g, 0.0);
    }

    use rand::SeedableRng;
}
