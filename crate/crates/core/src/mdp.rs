//! Core data types for finite-horizon constrained MDPs and the rollout contract.

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::constraint::ConstraintFn;
use crate::error::{Error, Result};

/// One environment step as stored in the replay buffer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub constraint_values: Vec<f64>,
    pub next_state: Vec<f64>,
    pub timestep: usize,
    /// The environment ended the episode at `next_state`.
    pub terminal: bool,
    /// The horizon was reached (`timestep == T`).
    pub truncated: bool,
}

impl Transition {
    /// No bootstrapping past either kind of episode end.
    pub fn done(&self) -> bool {
        self.terminal || self.truncated
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RewardMode {
    /// The reward channel is identically zero; the objective is made of constraints only.
    Car,
    RewardPlusConstraints,
}

/// Sum of `gamma^t * values[t]`. Empty input sums to zero.
pub fn discounted_return(values: &[f64], gamma: f64) -> f64 {
    let mut acc = 0.0;
    let mut weight = 1.0;
    for v in values {
        acc += weight * v;
        weight *= gamma;
    }
    acc
}

/// An ordered episode with its cached returns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub transitions: Vec<Transition>,
    /// Undiscounted sum of the reward channel.
    pub episode_return: f64,
    /// Discounted constraint returns, one per constraint.
    pub constraint_returns: Vec<f64>,
}

impl Trajectory {
    pub fn new(transitions: Vec<Transition>, gamma: f64) -> Result<Self> {
        for (i, tr) in transitions.iter().enumerate() {
            if tr.timestep != i {
                return Err(Error::Structural(format!(
                    "transition {i} carries timestep {}",
                    tr.timestep
                )));
            }
        }
        let episode_return = transitions.iter().map(|t| t.reward).sum();
        let constraint_returns = if transitions.is_empty() {
            Vec::new()
        } else {
            constraint_returns_of(&transitions, gamma)?
        };
        Ok(Self {
            transitions,
            episode_return,
            constraint_returns,
        })
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn constraint_count(&self) -> usize {
        self.constraint_returns.len()
    }
}

fn constraint_returns_of(transitions: &[Transition], gamma: f64) -> Result<Vec<f64>> {
    let m = transitions[0].constraint_values.len();
    let mut acc = vec![0.0; m];
    let mut weight = 1.0;
    for tr in transitions {
        if tr.constraint_values.len() != m {
            return Err(Error::Structural(format!(
                "transition at t={} has {} constraint values, expected {m}",
                tr.timestep,
                tr.constraint_values.len()
            )));
        }
        for (a, g) in acc.iter_mut().zip(&tr.constraint_values) {
            *a += weight * g;
        }
        weight *= gamma;
    }
    Ok(acc)
}

/// Recomputes the discounted constraint returns of a trajectory.
pub fn constraint_returns(traj: &Trajectory, gamma: f64) -> Result<Vec<f64>> {
    if traj.is_empty() {
        return Err(Error::Structural("empty trajectory".into()));
    }
    constraint_returns_of(&traj.transitions, gamma)
}

/// Horizon, discount, reward mode, and the constraint set of a problem.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub horizon: usize,
    pub discount: f64,
    pub reward_mode: RewardMode,
    pub constraints: Vec<ConstraintFn>,
    pub state_dim: usize,
    pub action_dim: usize,
}

impl ProblemSpec {
    pub fn new(
        horizon: usize,
        discount: f64,
        reward_mode: RewardMode,
        constraints: Vec<ConstraintFn>,
        state_dim: usize,
        action_dim: usize,
    ) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::construction("horizon", "must be positive"));
        }
        if !(discount > 0.0 && discount <= 1.0) {
            return Err(Error::construction("discount", format!("{discount} is outside (0, 1]")));
        }
        if reward_mode == RewardMode::Car && constraints.is_empty() {
            return Err(Error::construction(
                "constraints",
                "constraint-only objectives need at least one constraint",
            ));
        }
        if state_dim == 0 || action_dim == 0 {
            return Err(Error::construction("state_dim/action_dim", "must be positive"));
        }
        for c in &constraints {
            if let Some(t) = c.target_timestep() {
                if t > horizon {
                    return Err(Error::construction(
                        "target_timestep",
                        format!("constraint `{}` targets t={t} beyond horizon {horizon}", c.name()),
                    ));
                }
            }
        }
        Ok(Self {
            horizon,
            discount,
            reward_mode,
            constraints,
            state_dim,
            action_dim,
        })
    }

    pub fn constraint_count(&self) -> usize {
        self.constraints.len()
    }

    /// Evaluates every constraint at `(state, action, t)`.
    pub fn constraint_values(&self, state: &[f64], action: &[f64], t: usize) -> Result<Vec<f64>> {
        self.constraints
            .iter()
            .map(|c| c.evaluate(state, action, t))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub terminal: bool,
}

/// An episodic environment whose observations end with the normalized timestep `t / T`.
pub trait Environment: Send {
    fn name(&self) -> &str;
    fn observation_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    /// Final timestep index `T`; an episode has at most `T + 1` steps.
    fn horizon(&self) -> usize;
    /// Starts a new episode. The initial state is a pure function of `seed`.
    fn reset(&mut self, seed: u64) -> Vec<f64>;
    /// Advances one step with an action in `[-1, 1]^action_dim`.
    fn step(&mut self, action: &[f64]) -> Result<StepOutcome>;
    /// Scalar task-quality signal for an observation (e.g. absolute pole angle).
    fn task_signal(&self, _observation: &[f64]) -> Option<f64> {
        None
    }
    fn boxed_clone(&self) -> Box<dyn Environment>;
    fn save_state(&self) -> serde_json::Value;
    fn load_state(&mut self, state: &serde_json::Value) -> Result<()>;
}

pub trait StochasticPolicy {
    fn act(&self, observation: &[f64], rng: &mut dyn RngCore) -> Result<Vec<f64>>;
}

impl<F> StochasticPolicy for F
where
    F: Fn(&[f64], &mut dyn RngCore) -> Vec<f64>,
{
    fn act(&self, observation: &[f64], rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        Ok(self(observation, rng))
    }
}

fn check_finite(values: &[f64], what: &str, step: usize) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::numeric(what, step as u64))
    }
}

/// Applies `action` at step `t` and packages the result as a [`Transition`].
///
/// Constraint values are evaluated at `(state, action, t)` here so stored
/// experience never depends on the multipliers.
pub fn collect_transition(
    env: &mut dyn Environment,
    spec: &ProblemSpec,
    state: &[f64],
    action: Vec<f64>,
    t: usize,
) -> Result<Transition> {
    check_finite(&action, "action", t)?;
    let outcome = env.step(&action)?;
    check_finite(&outcome.observation, "state", t + 1)?;
    if !outcome.reward.is_finite() {
        return Err(Error::numeric("reward", t as u64));
    }
    let constraint_values = spec.constraint_values(state, &action, t)?;
    let reward = match spec.reward_mode {
        RewardMode::Car => 0.0,
        RewardMode::RewardPlusConstraints => outcome.reward,
    };
    Ok(Transition {
        state: state.to_vec(),
        action,
        reward,
        constraint_values,
        next_state: outcome.observation,
        timestep: t,
        terminal: outcome.terminal,
        truncated: t >= spec.horizon,
    })
}

/// Policy-sampling stream for a rollout seed, independent of the environment stream.
pub fn policy_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15)
}

/// Runs one episode until the environment terminates or `t = T`.
pub fn rollout(
    env: &mut dyn Environment,
    policy: &dyn StochasticPolicy,
    spec: &ProblemSpec,
    seed: u64,
) -> Result<Trajectory> {
    if env.horizon() != spec.horizon {
        return Err(Error::Structural(format!(
            "environment horizon {} differs from problem horizon {}",
            env.horizon(),
            spec.horizon
        )));
    }
    let mut rng = policy_rng(seed);
    let mut state = env.reset(seed);
    check_finite(&state, "state", 0)?;
    let mut transitions = Vec::with_capacity(spec.horizon + 1);
    for t in 0..=spec.horizon {
        let action = policy.act(&state, &mut rng)?;
        let tr = collect_transition(env, spec, &state, action, t)?;
        let done = tr.done();
        state = tr.next_state.clone();
        transitions.push(tr);
        if done {
            break;
        }
    }
    Trajectory::new(transitions, spec.discount)
}
