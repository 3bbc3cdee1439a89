//! Pendulum swing-up with the classic control constants.
//!
//! Angle zero is upright. The rod is driven by a bounded torque and integrated
//! with semi-implicit Euler. Observations are `(cos θ, sin θ, θ̇, t / T)`.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::constraint::SignalRegistry;
use crate::error::{Error, Result};
use crate::mdp::{Environment, StepOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PendulumParams {
    pub gravity: f64,
    pub mass: f64,
    pub length: f64,
    pub dt: f64,
    pub max_torque: f64,
    pub max_speed: f64,
    pub horizon: usize,
}

impl Default for PendulumParams {
    fn default() -> Self {
        Self {
            gravity: 10.0,
            mass: 1.0,
            length: 1.0,
            dt: 0.05,
            max_torque: 2.0,
            max_speed: 8.0,
            horizon: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PendulumState {
    pub theta: f64,
    pub theta_dot: f64,
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let x = (theta + PI).rem_euclid(2.0 * PI) - PI;
    if x <= -PI {
        x + 2.0 * PI
    } else {
        x
    }
}

pub fn pendulum_step(params: &PendulumParams, state: PendulumState, torque: f64) -> Result<PendulumState> {
    if !(state.theta.is_finite() && state.theta_dot.is_finite() && torque.is_finite()) {
        return Err(Error::numeric("pendulum input", 0));
    }
    let PendulumParams {
        gravity: g,
        mass: m,
        length: l,
        dt,
        max_torque,
        max_speed,
        ..
    } = *params;
    let u = torque.clamp(-max_torque, max_torque);
    let accel = 3.0 * g / (2.0 * l) * state.theta.sin() + 3.0 / (m * l * l) * u;
    let theta_dot = (state.theta_dot + accel * dt).clamp(-max_speed, max_speed);
    let theta = wrap_angle(state.theta + theta_dot * dt);
    Ok(PendulumState { theta, theta_dot })
}

/// Classic swing-up cost as a reward: `-(θ² + 0.1 θ̇² + 0.001 u²)`.
pub fn pendulum_reward(state: PendulumState, torque: f64) -> f64 {
    let th = wrap_angle(state.theta);
    -(th * th + 0.1 * state.theta_dot * state.theta_dot + 0.001 * torque * torque)
}

/// Angle recovered from an observation's `(cos θ, sin θ)` prefix.
pub fn observed_angle(obs: &[f64]) -> f64 {
    obs[1].atan2(obs[0])
}

#[derive(Debug, Clone, PartialEq)]
pub struct PendulumEnv {
    params: PendulumParams,
    state: PendulumState,
    t: usize,
}

#[derive(Serialize, Deserialize)]
struct Saved {
    state: PendulumState,
    t: usize,
}

impl PendulumEnv {
    pub fn new(params: PendulumParams) -> Self {
        Self {
            params,
            state: PendulumState {
                theta: PI,
                theta_dot: 0.0,
            },
            t: 0,
        }
    }

    pub fn params(&self) -> &PendulumParams {
        &self.params
    }

    pub fn state(&self) -> PendulumState {
        self.state
    }

    pub fn set_state(&mut self, state: PendulumState) {
        self.state = state;
    }

    pub fn timestep(&self) -> usize {
        self.t
    }

    fn observe(&self) -> Vec<f64> {
        vec![
            self.state.theta.cos(),
            self.state.theta.sin(),
            self.state.theta_dot,
            self.t as f64 / self.params.horizon as f64,
        ]
    }
}

impl Default for PendulumEnv {
    fn default() -> Self {
        Self::new(PendulumParams::default())
    }
}

impl Environment for PendulumEnv {
    fn name(&self) -> &str {
        "pendulum"
    }

    fn observation_dim(&self) -> usize {
        4
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn horizon(&self) -> usize {
        self.params.horizon
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // θ ~ U(-π, π], θ̇ ~ U(-1, 1)
        let theta = PI - rng.random::<f64>() * 2.0 * PI;
        let theta_dot = rng.random_range(-1.0..1.0);
        self.state = PendulumState { theta, theta_dot };
        self.t = 0;
        self.observe()
    }

    fn step(&mut self, action: &[f64]) -> Result<StepOutcome> {
        if action.len() != 1 {
            return Err(Error::Structural(format!("pendulum takes 1 action, got {}", action.len())));
        }
        let torque = (action[0] * self.params.max_torque).clamp(-self.params.max_torque, self.params.max_torque);
        let reward = pendulum_reward(self.state, torque);
        self.state = pendulum_step(&self.params, self.state, torque)
            .map_err(|_| Error::numeric("pendulum state", self.t as u64))?;
        self.t += 1;
        Ok(StepOutcome {
            observation: self.observe(),
            reward,
            terminal: false,
        })
    }

    fn task_signal(&self, observation: &[f64]) -> Option<f64> {
        Some(observed_angle(observation).abs())
    }

    fn boxed_clone(&self) -> Box<dyn Environment> {
        Box::new(self.clone())
    }

    fn save_state(&self) -> serde_json::Value {
        serde_json::to_value(Saved {
            state: self.state,
            t: self.t,
        })
        .expect("pendulum state serializes")
    }

    fn load_state(&mut self, state: &serde_json::Value) -> Result<()> {
        let saved: Saved = serde_json::from_value(state.clone())?;
        self.state = saved.state;
        self.t = saved.t;
        Ok(())
    }
}

pub(crate) fn register_signals(reg: &mut SignalRegistry) {
    reg.register_value("abs-angle", Arc::new(|s: &[f64], _: &[f64]| observed_angle(s).abs()));
    reg.register_value("abs-velocity", Arc::new(|s: &[f64], _: &[f64]| s[2].abs()));
    reg.register_predicate("upright", Arc::new(|s: &[f64], _: &[f64]| observed_angle(s).abs() < 0.1));
    reg.register_predicate("hanging", Arc::new(|s: &[f64], _: &[f64]| observed_angle(s).abs() > PI / 2.0));
}
