//! Finite-horizon tabular MDPs with exhaustive trajectory enumeration.
//!
//! These exist to evaluate constrained objectives exactly: every trajectory
//! `(s_0, a_0, ..., s_T, a_T)` is listed with its joint probability under a
//! time-dependent tabular policy, so expectations are finite sums.

use std::sync::Arc;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::constraint::{ConstraintFn, SignalRegistry};
use crate::error::{Error, Result};
use crate::mdp::{Environment, StepOutcome, StochasticPolicy};

/// Largest number of trajectories enumeration will attempt.
pub const ENUMERATION_BUDGET: u128 = 1_000_000;

const ROW_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    horizon: usize,
    /// `p(s' | s, a)` at index `(s * A + a) * S + s'`.
    transition: Vec<f64>,
    initial: Vec<f64>,
    /// `π(a | s, t)` at index `(t * S + s) * A + a`.
    policy: Vec<f64>,
    /// `r(s, a)` at index `s * A + a`.
    reward: Vec<f64>,
}

/// One enumerated state/action path of length `T + 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Path {
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
}

fn check_rows(values: &[f64], row_len: usize, what: &str) -> Result<()> {
    for (i, row) in values.chunks(row_len).enumerate() {
        if row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::construction(what, format!("row {i} has a negative or non-finite entry")));
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > ROW_TOLERANCE {
            return Err(Error::construction(what, format!("row {i} sums to {sum}")));
        }
    }
    Ok(())
}

fn normalized_row<R: Rng + ?Sized>(rng: &mut R, len: usize, sparsity: f64) -> Vec<f64> {
    loop {
        let mut row: Vec<f64> = (0..len)
            .map(|_| if rng.random::<f64>() < sparsity { 0.0 } else { rng.random::<f64>() })
            .collect();
        let sum: f64 = row.iter().sum();
        if sum > 0.0 {
            row.iter_mut().for_each(|p| *p /= sum);
            // absorb rounding so the row sums to one within the tolerance
            let fix = 1.0 - row.iter().sum::<f64>();
            let k = row.iter().position(|p| *p > 0.0).unwrap();
            row[k] += fix;
            return row;
        }
    }
}

impl TabularMdp {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        horizon: usize,
        transition: Vec<f64>,
        initial: Vec<f64>,
        policy: Vec<f64>,
        reward: Option<Vec<f64>>,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::construction("n_states/n_actions", "must be positive"));
        }
        let (s, a) = (n_states, n_actions);
        let expect = |v: &[f64], n: usize, what: &str| {
            if v.len() == n {
                Ok(())
            } else {
                Err(Error::construction(what, format!("expected {n} entries, got {}", v.len())))
            }
        };
        expect(&transition, s * a * s, "transition")?;
        expect(&initial, s, "initial")?;
        expect(&policy, (horizon + 1) * s * a, "policy")?;
        let reward = reward.unwrap_or_else(|| vec![0.0; s * a]);
        expect(&reward, s * a, "reward")?;
        check_rows(&transition, s, "transition")?;
        check_rows(&initial, s, "initial")?;
        check_rows(&policy, a, "policy")?;
        Ok(Self {
            n_states,
            n_actions,
            horizon,
            transition,
            initial,
            policy,
            reward,
        })
    }

    /// Random MDP and time-dependent policy; `sparsity` is the chance an entry is zeroed.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, n_states: usize, n_actions: usize, horizon: usize, sparsity: f64) -> Self {
        let (s, a) = (n_states, n_actions);
        let transition = (0..s * a).flat_map(|_| normalized_row(rng, s, sparsity)).collect();
        let initial = normalized_row(rng, s, sparsity);
        let policy = (0..(horizon + 1) * s).flat_map(|_| normalized_row(rng, a, sparsity)).collect();
        let reward = (0..s * a).map(|_| rng.random_range(-1.0..1.0)).collect();
        Self::new(s, a, horizon, transition, initial, policy, Some(reward)).expect("random rows are normalized")
    }

    /// A chain walk: `right` advances w.p. `slip`-complement, `left` retreats; uniform policy.
    pub fn chain(n_states: usize, horizon: usize, slip: f64) -> Self {
        let s = n_states;
        let mut transition = vec![0.0; s * 2 * s];
        for from in 0..s {
            for (act, step) in [(0usize, -1i64), (1, 1)] {
                let to = (from as i64 + step).clamp(0, s as i64 - 1) as usize;
                let base = (from * 2 + act) * s;
                transition[base + to] += 1.0 - slip;
                transition[base + from] += slip;
            }
        }
        let mut initial = vec![0.0; s];
        initial[0] = 1.0;
        let policy = vec![0.5; (horizon + 1) * s * 2];
        let mut reward = vec![0.0; s * 2];
        reward[(s - 1) * 2] = 1.0;
        reward[(s - 1) * 2 + 1] = 1.0;
        Self::new(s, 2, horizon, transition, initial, policy, Some(reward)).expect("chain rows are normalized")
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn p_transition(&self, s: usize, a: usize, next: usize) -> f64 {
        self.transition[(s * self.n_actions + a) * self.n_states + next]
    }

    pub fn p_initial(&self, s: usize) -> f64 {
        self.initial[s]
    }

    pub fn p_action(&self, t: usize, s: usize, a: usize) -> f64 {
        self.policy[(t * self.n_states + s) * self.n_actions + a]
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.n_actions + a]
    }

    /// Replaces the policy table, validating rows.
    pub fn with_policy(mut self, policy: Vec<f64>) -> Result<Self> {
        if policy.len() != self.policy.len() {
            return Err(Error::construction("policy", "wrong table size"));
        }
        check_rows(&policy, self.n_actions, "policy")?;
        self.policy = policy;
        Ok(self)
    }

    /// One-hot state followed by `t / T`.
    pub fn encode_state(&self, s: usize, t: usize) -> Vec<f64> {
        let mut obs = vec![0.0; self.n_states + 1];
        obs[s] = 1.0;
        obs[self.n_states] = if self.horizon == 0 { 0.0 } else { t as f64 / self.horizon as f64 };
        obs
    }

    pub fn decode_state(obs: &[f64]) -> usize {
        let n = obs.len() - 1;
        (0..n)
            .max_by(|&i, &j| obs[i].partial_cmp(&obs[j]).unwrap_or(std::cmp::Ordering::Equal))
            .unwrap_or(0)
    }

    pub fn decode_timestep(&self, obs: &[f64]) -> usize {
        (obs[obs.len() - 1] * self.horizon as f64).round() as usize
    }

    /// Action index `a` as the centre of its bin in `[-1, 1]`.
    pub fn encode_action(&self, a: usize) -> Vec<f64> {
        vec![-1.0 + (2 * a + 1) as f64 / self.n_actions as f64]
    }

    pub fn decode_action(&self, action: &[f64]) -> usize {
        let x = ((action[0] + 1.0) / 2.0 * self.n_actions as f64).floor();
        (x.max(0.0) as usize).min(self.n_actions - 1)
    }

    /// Number of paths enumeration visits in the worst case, `(S·A)^(T+1)`.
    pub fn enumeration_size(&self) -> u128 {
        let per_step = (self.n_states * self.n_actions) as u128;
        per_step.checked_pow(self.horizon as u32 + 1).unwrap_or(u128::MAX)
    }

    fn check_budget(&self) -> Result<()> {
        let count = self.enumeration_size();
        if count > ENUMERATION_BUDGET {
            return Err(Error::BudgetExceeded {
                count,
                budget: ENUMERATION_BUDGET,
            });
        }
        Ok(())
    }
}

/// Every positive-probability path with its joint probability.
pub fn enumerate_trajectories(mdp: &TabularMdp) -> Result<Vec<(Path, f64)>> {
    mdp.check_budget()?;
    let mut out = Vec::new();
    let mut states = Vec::with_capacity(mdp.horizon + 1);
    let mut actions = Vec::with_capacity(mdp.horizon + 1);
    for s0 in 0..mdp.n_states {
        let p0 = mdp.p_initial(s0);
        if p0 > 0.0 {
            states.push(s0);
            extend_paths(mdp, 0, p0, &mut states, &mut actions, &mut out);
            states.pop();
        }
    }
    Ok(out)
}

fn extend_paths(
    mdp: &TabularMdp,
    t: usize,
    prob: f64,
    states: &mut Vec<usize>,
    actions: &mut Vec<usize>,
    out: &mut Vec<(Path, f64)>,
) {
    let s = *states.last().unwrap();
    for a in 0..mdp.n_actions {
        let pa = mdp.p_action(t, s, a);
        if pa == 0.0 {
            continue;
        }
        actions.push(a);
        if t == mdp.horizon {
            out.push((
                Path {
                    states: states.clone(),
                    actions: actions.clone(),
                },
                prob * pa,
            ));
        } else {
            for next in 0..mdp.n_states {
                let pn = mdp.p_transition(s, a, next);
                if pn > 0.0 {
                    states.push(next);
                    extend_paths(mdp, t + 1, prob * pa * pn, states, actions, out);
                    states.pop();
                }
            }
        }
        actions.pop();
    }
}

/// `Σ_{t=0}^{T} γ^t`, which is `T + 1` at `γ = 1`.
pub fn discount_mass(gamma: f64, horizon: usize) -> f64 {
    if gamma == 1.0 {
        (horizon + 1) as f64
    } else {
        (1.0 - gamma.powi(horizon as i32 + 1)) / (1.0 - gamma)
    }
}

/// Exact `E_π[Σ_t γ^t g(s_t, a_t)]` by summation over enumerated paths.
pub fn exact_constraint_return(mdp: &TabularMdp, c: &ConstraintFn, gamma: f64) -> Result<f64> {
    let paths = enumerate_trajectories(mdp)?;
    let mut total = 0.0;
    for (path, p) in &paths {
        let mut ret = 0.0;
        let mut w = 1.0;
        for (t, (&s, &a)) in path.states.iter().zip(&path.actions).enumerate() {
            ret += w * c.evaluate(&mdp.encode_state(s, t), &mdp.encode_action(a), t)?;
            w *= gamma;
        }
        total += p * ret;
    }
    Ok(total)
}

/// Exact `E_π[Σ_t γ^t r(s_t, a_t)]` for the MDP's reward table.
pub fn exact_reward_return(mdp: &TabularMdp, gamma: f64) -> Result<f64> {
    let paths = enumerate_trajectories(mdp)?;
    Ok(paths
        .iter()
        .map(|(path, p)| {
            let mut w = 1.0;
            let mut ret = 0.0;
            for (&s, &a) in path.states.iter().zip(&path.actions) {
                ret += w * mdp.reward(s, a);
                w *= gamma;
            }
            p * ret
        })
        .sum())
}

/// `p_{π,γ}(s, a) = Σ_t p_t(s, a) γ^t / Σ_t γ^t`, indexed `s * A + a`.
///
/// The per-step marginals `p_t` are accumulated from the enumerated paths;
/// at `γ = 1` every step weighs `1 / (T + 1)`.
pub fn discounted_state_action_distribution(mdp: &TabularMdp, gamma: f64) -> Result<Vec<f64>> {
    let paths = enumerate_trajectories(mdp)?;
    let norm = discount_mass(gamma, mdp.horizon);
    let mut dist = vec![0.0; mdp.n_states * mdp.n_actions];
    for (path, p) in &paths {
        let mut w = 1.0;
        for (&s, &a) in path.states.iter().zip(&path.actions) {
            dist[s * mdp.n_actions + a] += p * w / norm;
            w *= gamma;
        }
    }
    Ok(dist)
}

/// Environment view of a [`TabularMdp`] with one-hot observations.
#[derive(Debug, Clone)]
pub struct TabularEnv {
    mdp: TabularMdp,
    rng: ChaCha8Rng,
    state: usize,
    t: usize,
}

#[derive(Serialize, Deserialize)]
struct Saved {
    rng: ChaCha8Rng,
    state: usize,
    t: usize,
}

fn sample_index<R: RngCore + ?Sized>(rng: &mut R, probs: impl Iterator<Item = f64>) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, p) in probs.enumerate() {
        if p > 0.0 {
            last = i;
            acc += p;
            if u < acc {
                return i;
            }
        }
    }
    last
}

impl TabularEnv {
    pub fn new(mdp: TabularMdp) -> Self {
        Self {
            mdp,
            rng: ChaCha8Rng::seed_from_u64(0),
            state: 0,
            t: 0,
        }
    }

    pub fn mdp(&self) -> &TabularMdp {
        &self.mdp
    }
}

impl Environment for TabularEnv {
    fn name(&self) -> &str {
        "tabular-chain"
    }

    fn observation_dim(&self) -> usize {
        self.mdp.n_states + 1
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn horizon(&self) -> usize {
        self.mdp.horizon
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        let mdp = &self.mdp;
        self.state = sample_index(&mut self.rng, (0..mdp.n_states).map(|s| mdp.p_initial(s)));
        self.t = 0;
        self.mdp.encode_state(self.state, 0)
    }

    fn step(&mut self, action: &[f64]) -> Result<StepOutcome> {
        if action.len() != 1 {
            return Err(Error::Structural(format!("tabular env takes 1 action, got {}", action.len())));
        }
        let a = self.mdp.decode_action(action);
        let reward = self.mdp.reward(self.state, a);
        let (s, mdp) = (self.state, &self.mdp);
        self.state = sample_index(&mut self.rng, (0..mdp.n_states).map(|n| mdp.p_transition(s, a, n)));
        self.t += 1;
        Ok(StepOutcome {
            observation: self.mdp.encode_state(self.state, self.t),
            reward,
            terminal: false,
        })
    }

    fn boxed_clone(&self) -> Box<dyn Environment> {
        Box::new(self.clone())
    }

    fn save_state(&self) -> serde_json::Value {
        serde_json::to_value(Saved {
            rng: self.rng.clone(),
            state: self.state,
            t: self.t,
        })
        .expect("tabular state serializes")
    }

    fn load_state(&mut self, state: &serde_json::Value) -> Result<()> {
        let saved: Saved = serde_json::from_value(state.clone())?;
        self.rng = saved.rng;
        self.state = saved.state;
        self.t = saved.t;
        Ok(())
    }
}

/// Samples actions from the MDP's own tabular policy.
pub struct TabularPolicy<'a> {
    mdp: &'a TabularMdp,
}

impl<'a> TabularPolicy<'a> {
    pub fn new(mdp: &'a TabularMdp) -> Self {
        Self { mdp }
    }
}

impl StochasticPolicy for TabularPolicy<'_> {
    fn act(&self, observation: &[f64], rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        let s = TabularMdp::decode_state(observation);
        let t = self.mdp.decode_timestep(observation).min(self.mdp.horizon);
        let a = sample_index(rng, (0..self.mdp.n_actions).map(|a| self.mdp.p_action(t, s, a)));
        Ok(self.mdp.encode_action(a))
    }
}

pub(crate) fn register_signals(reg: &mut SignalRegistry) {
    reg.register_predicate(
        "chain-end",
        Arc::new(|s: &[f64], _: &[f64]| TabularMdp::decode_state(s) == s.len() - 2),
    );
    reg.register_predicate("chain-start", Arc::new(|s: &[f64], _: &[f64]| TabularMdp::decode_state(s) == 0));
    reg.register_predicate("action-positive", Arc::new(|_: &[f64], a: &[f64]| a[0] > 0.0));
    reg.register_value("state-index", Arc::new(|s: &[f64], _: &[f64]| TabularMdp::decode_state(s) as f64));
}

#[cfg(test)]
mod tests {
    use super::*;

    fn deterministic_two_by_two(horizon: usize) -> TabularMdp {
        // action 0 always, state flips deterministically
        let transition = vec![0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.0];
        let policy = (0..=horizon).flat_map(|_| [1.0, 0.0, 1.0, 0.0]).collect();
        TabularMdp::new(2, 2, horizon, transition, vec![1.0, 0.0], policy, None).unwrap()
    }

    #[test]
    fn single_state_single_action() {
        let mdp = TabularMdp::new(1, 1, 2, vec![1.0], vec![1.0], vec![1.0; 3], None).unwrap();
        let paths = enumerate_trajectories(&mdp).unwrap();
        assert_eq!(paths.len(), 1);
        assert_eq!(paths[0].1, 1.0);
        assert_eq!(paths[0].0.states, vec![0, 0, 0]);
    }

    #[test]
    fn deterministic_gives_one_path() {
        let paths = enumerate_trajectories(&deterministic_two_by_two(3)).unwrap();
        assert_eq!(paths.len(), 1);
        assert_eq!(paths[0].1, 1.0);
        assert_eq!(paths[0].0.states, vec![0, 1, 0, 1]);
    }

    #[test]
    fn uniform_two_by_two_mass() {
        let transition = vec![0.5; 8];
        let policy = vec![0.5; 4 * 4];
        let mdp = TabularMdp::new(2, 2, 3, transition, vec![0.5, 0.5], policy, None).unwrap();
        let paths = enumerate_trajectories(&mdp).unwrap();
        assert_eq!(paths.len(), 4usize.pow(4));
        let mass: f64 = paths.iter().map(|(_, p)| p).sum();
        assert!((mass - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn budget_error_names_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mdp = TabularMdp::random(&mut rng, 10, 10, 3, 0.0);
        match enumerate_trajectories(&mdp) {
            Err(Error::BudgetExceeded { count, .. }) => assert_eq!(count, 100u128.pow(4)),
            other => panic!("expected budget error, got {other:?}"),
        }
    }

    #[test]
    fn rows_must_sum_to_one() {
        let err = TabularMdp::new(1, 1, 0, vec![0.9], vec![1.0], vec![1.0], None).unwrap_err();
        assert!(matches!(err, Error::Construction { ref field, .. } if field == "transition"));
    }

    #[test]
    fn zero_constraint_has_zero_return() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mdp = TabularMdp::random(&mut rng, 3, 2, 3, 0.2);
        let c = ConstraintFn::episode_value("zero", 0.0, Arc::new(|_: &[f64], _: &[f64]| 0.0)).unwrap();
        assert_eq!(exact_constraint_return(&mdp, &c, 0.9).unwrap(), 0.0);
    }

    #[test]
    fn gamma_one_uses_uniform_time_weights() {
        let mdp = deterministic_two_by_two(3);
        let d = discounted_state_action_distribution(&mdp, 1.0).unwrap();
        // states alternate 0,1,0,1 with action 0
        assert_eq!(d, vec![0.5, 0.0, 0.5, 0.0]);
    }

    #[test]
    fn horizon_zero_is_initial_distribution() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mdp = TabularMdp::random(&mut rng, 3, 2, 0, 0.0);
        let d = discounted_state_action_distribution(&mdp, 0.7).unwrap();
        for s in 0..3 {
            for a in 0..2 {
                let expect = mdp.p_initial(s) * mdp.p_action(0, s, a);
                assert!((d[s * 2 + a] - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn action_codec_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for n in 1..6 {
            let mdp = TabularMdp::random(&mut rng, 2, n, 1, 0.0);
            for a in 0..n {
                assert_eq!(mdp.decode_action(&mdp.encode_action(a)), a);
            }
        }
    }

    #[test]
    fn env_follows_chain() {
        let mdp = TabularMdp::chain(4, 4, 0.0);
        let mut env = TabularEnv::new(mdp.clone());
        let obs = env.reset(1);
        assert_eq!(TabularMdp::decode_state(&obs), 0);
        let right = mdp.encode_action(1);
        let out = env.step(&right).unwrap();
        assert_eq!(TabularMdp::decode_state(&out.observation), 1);
        assert_eq!(mdp.decode_timestep(&out.observation), 1);
    }
}
