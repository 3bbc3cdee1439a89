//! Concrete environments and the name-based factory used by configs.

pub mod pendulum;
pub mod tabular;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{Environment, StepOutcome};

pub use pendulum::{observed_angle, pendulum_reward, pendulum_step, wrap_angle, PendulumEnv, PendulumParams, PendulumState};
pub use tabular::{
    discount_mass, discounted_state_action_distribution, enumerate_trajectories, exact_constraint_return,
    exact_reward_return, Path, TabularEnv, TabularMdp, TabularPolicy, ENUMERATION_BUDGET,
};

/// Environment knobs accepted by [`make_env`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvOptions {
    /// Overrides the environment's native horizon.
    pub horizon: Option<usize>,
    /// Number of past actions appended to the observation; 0 disables.
    pub action_history: usize,
    pub chain_states: usize,
    pub chain_slip: f64,
}

impl Default for EnvOptions {
    fn default() -> Self {
        Self {
            horizon: None,
            action_history: 0,
            chain_states: 4,
            chain_slip: 0.1,
        }
    }
}

pub fn make_env(name: &str, options: &EnvOptions) -> Result<Box<dyn Environment>> {
    let base: Box<dyn Environment> = match name {
        "pendulum" => {
            let mut params = PendulumParams::default();
            if let Some(h) = options.horizon {
                params.horizon = h;
            }
            Box::new(PendulumEnv::new(params))
        }
        "tabular-chain" => {
            if options.chain_states < 2 {
                return Err(Error::construction("chain_states", "need at least 2 states"));
            }
            if !(0.0..=1.0).contains(&options.chain_slip) {
                return Err(Error::construction("chain_slip", "must lie in [0, 1]"));
            }
            let horizon = options.horizon.unwrap_or(4);
            Box::new(TabularEnv::new(TabularMdp::chain(options.chain_states, horizon, options.chain_slip)))
        }
        other => {
            return Err(Error::UnknownName {
                what: "environment",
                name: other.to_string(),
            })
        }
    };
    if options.action_history > 0 {
        Ok(Box::new(ActionHistory::new(base, options.action_history)))
    } else {
        Ok(base)
    }
}

/// Appends the last `H` actions to each observation, just before the
/// trailing `t / T` feature. Slots before the first action are zero.
pub struct ActionHistory {
    inner: Box<dyn Environment>,
    length: usize,
    history: Vec<f64>,
}

impl ActionHistory {
    pub fn new(inner: Box<dyn Environment>, length: usize) -> Self {
        let history = vec![0.0; length * inner.action_dim()];
        Self { inner, length, history }
    }

    fn augment(&self, mut obs: Vec<f64>) -> Vec<f64> {
        let time = obs.pop().unwrap_or(0.0);
        obs.extend_from_slice(&self.history);
        obs.push(time);
        obs
    }

    fn strip<'a>(&self, obs: &'a [f64]) -> Vec<f64> {
        let base = obs.len() - self.history.len() - 1;
        let mut out = obs[..base].to_vec();
        out.push(obs[obs.len() - 1]);
        out
    }
}

impl Environment for ActionHistory {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn observation_dim(&self) -> usize {
        self.inner.observation_dim() + self.length * self.inner.action_dim()
    }

    fn action_dim(&self) -> usize {
        self.inner.action_dim()
    }

    fn horizon(&self) -> usize {
        self.inner.horizon()
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        self.history.iter_mut().for_each(|h| *h = 0.0);
        let obs = self.inner.reset(seed);
        self.augment(obs)
    }

    fn step(&mut self, action: &[f64]) -> Result<StepOutcome> {
        let out = self.inner.step(action)?;
        let a = action.len();
        if !self.history.is_empty() {
            self.history.rotate_right(a);
            self.history[..a].copy_from_slice(action);
        }
        Ok(StepOutcome {
            observation: self.augment(out.observation),
            ..out
        })
    }

    fn task_signal(&self, observation: &[f64]) -> Option<f64> {
        self.inner.task_signal(&self.strip(observation))
    }

    fn boxed_clone(&self) -> Box<dyn Environment> {
        Box::new(Self {
            inner: self.inner.boxed_clone(),
            length: self.length,
            history: self.history.clone(),
        })
    }

    fn save_state(&self) -> serde_json::Value {
        serde_json::json!({ "inner": self.inner.save_state(), "history": self.history })
    }

    fn load_state(&mut self, state: &serde_json::Value) -> Result<()> {
        self.inner.load_state(&state["inner"])?;
        self.history = serde_json::from_value(state["history"].clone())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn history_sits_before_time_feature() {
        let opts = EnvOptions {
            action_history: 2,
            ..EnvOptions::default()
        };
        let mut env = make_env("pendulum", &opts).unwrap();
        assert_eq!(env.observation_dim(), 6);
        let obs = env.reset(0);
        assert_eq!(&obs[3..5], &[0.0, 0.0]);
        let o1 = env.step(&[0.5]).unwrap().observation;
        let o2 = env.step(&[-0.25]).unwrap().observation;
        assert_eq!(&o1[3..5], &[0.5, 0.0]);
        assert_eq!(&o2[3..5], &[-0.25, 0.5]);
        assert_eq!(o2[5], 2.0 / 200.0);
        assert!(env.task_signal(&o2).unwrap() >= 0.0);
    }

    #[test]
    fn unknown_env_is_rejected() {
        assert!(matches!(
            make_env("cartpole", &EnvOptions::default()),
            Err(Error::UnknownName { .. })
        ));
    }
}
