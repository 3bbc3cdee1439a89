//! Lagrange multipliers and projected dual descent.
//!
//! The multiplier gradient `dL/dλ_m` is the expected discounted return of
//! constraint `m`. A negative value means the constraint is violated, so the
//! descent step `λ ← λ - Adam(α_λ, ∇)` raises the multiplier; the result is
//! then projected back onto `λ ≥ 0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{RewardMode, Trajectory};
use crate::optim::Adam;

pub const DEFAULT_ALPHA_LAMBDA: f64 = 0.1;
pub const DEFAULT_UPDATE_INTERVAL: u64 = 5000;
pub const DEFAULT_BETA1: f64 = 0.9;
pub const DEFAULT_BETA2: f64 = 0.999;
pub const DEFAULT_ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagrangeState {
    lambdas: Vec<f64>,
    adam: Adam,
    update_interval: u64,
}

/// Zero multipliers with fresh Adam moments.
pub fn init_multipliers(m: usize, alpha_lambda: f64, update_interval: u64) -> Result<LagrangeState> {
    LagrangeState::with_adam(
        m,
        alpha_lambda,
        update_interval,
        DEFAULT_BETA1,
        DEFAULT_BETA2,
        DEFAULT_ADAM_EPS,
    )
}

impl LagrangeState {
    pub fn with_adam(
        m: usize,
        alpha_lambda: f64,
        update_interval: u64,
        beta1: f64,
        beta2: f64,
        adam_eps: f64,
    ) -> Result<Self> {
        if m == 0 {
            return Err(Error::construction("M", "need at least one multiplier"));
        }
        if !(alpha_lambda > 0.0 && alpha_lambda.is_finite()) {
            return Err(Error::construction("alpha_lambda", "must be positive"));
        }
        if update_interval == 0 {
            return Err(Error::construction("update_interval", "must be at least 1"));
        }
        Ok(Self {
            lambdas: vec![0.0; m],
            adam: Adam::new(m, alpha_lambda, beta1, beta2, adam_eps),
            update_interval,
        })
    }

    /// Defaults: `α_λ = 0.1`, `d = 5000`.
    pub fn with_defaults(m: usize) -> Result<Self> {
        init_multipliers(m, DEFAULT_ALPHA_LAMBDA, DEFAULT_UPDATE_INTERVAL)
    }

    /// Multiplier state for an objective without constraints.
    pub fn unconstrained() -> Self {
        Self {
            lambdas: Vec::new(),
            adam: Adam::new(0, DEFAULT_ALPHA_LAMBDA, DEFAULT_BETA1, DEFAULT_BETA2, DEFAULT_ADAM_EPS),
            update_interval: DEFAULT_UPDATE_INTERVAL,
        }
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    pub fn alpha_lambda(&self) -> f64 {
        self.adam.lr
    }

    pub fn update_interval(&self) -> u64 {
        self.update_interval
    }

    pub fn adam_step(&self) -> u64 {
        self.adam.step
    }

    pub fn adam_moments(&self) -> (&[f64], &[f64]) {
        (&self.adam.m, &self.adam.v)
    }

    /// Overrides the multipliers, e.g. to freeze them at a known value.
    pub fn set_lambdas(&mut self, lambdas: &[f64]) -> Result<()> {
        if lambdas.len() != self.lambdas.len() {
            return Err(Error::Structural(format!(
                "{} multipliers supplied for {} constraints",
                lambdas.len(),
                self.lambdas.len()
            )));
        }
        if lambdas.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return Err(Error::construction("lambdas", "must be finite and nonnegative"));
        }
        self.lambdas.copy_from_slice(lambdas);
        Ok(())
    }

    /// Whether iteration `i` (1-based count of environment steps) triggers an update.
    pub fn is_update_iteration(&self, i: u64) -> bool {
        i > 0 && i % self.update_interval == 0
    }
}

/// Per-step objective signal: `Σ λ_m g_m`, plus the reward outside CaR mode.
pub fn scalarize(reward: f64, g: &[f64], lambdas: &[f64], mode: RewardMode) -> Result<f64> {
    if g.len() != lambdas.len() {
        return Err(Error::Structural(format!(
            "{} constraint values for {} multipliers",
            g.len(),
            lambdas.len()
        )));
    }
    let weighted = g.iter().zip(lambdas).fold(0.0, |acc, (g, l)| acc + l * g);
    Ok(match mode {
        RewardMode::Car => weighted,
        RewardMode::RewardPlusConstraints => reward + weighted,
    })
}

/// Channel-wise mean of discounted constraint returns over `recent`.
pub fn multiplier_gradient(recent: &[Trajectory], gamma: f64) -> Result<Vec<f64>> {
    let returns = recent
        .iter()
        .map(|traj| crate::mdp::constraint_returns(traj, gamma))
        .collect::<Result<Vec<_>>>()?;
    window_mean(&returns)
}

/// Channel-wise mean of per-episode constraint returns already computed.
pub fn window_mean(returns: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = returns.first().ok_or(Error::EmptyWindow)?;
    let m = first.len();
    let mut acc = vec![0.0; m];
    for r in returns {
        if r.len() != m {
            return Err(Error::Structural(format!(
                "episode with {} constraints in a window of {m}",
                r.len()
            )));
        }
        for (a, v) in acc.iter_mut().zip(r) {
            *a += v;
        }
    }
    let n = returns.len() as f64;
    Ok(acc.into_iter().map(|a| a / n).collect())
}

/// One projected Adam descent step on the multipliers.
///
/// A non-finite gradient leaves the state untouched and reports a fault.
pub fn update_multipliers(state: &LagrangeState, grad: &[f64]) -> Result<LagrangeState> {
    if grad.len() != state.lambdas.len() {
        return Err(Error::Structural(format!(
            "gradient of length {} for {} multipliers",
            grad.len(),
            state.lambdas.len()
        )));
    }
    if let Some(m) = grad.iter().position(|g| !g.is_finite()) {
        return Err(Error::numeric(format!("multiplier gradient channel {m}"), state.adam.step));
    }
    let mut next = state.clone();
    let deltas = next.adam.step_deltas(grad);
    for (l, d) in next.lambdas.iter_mut().zip(deltas) {
        *l = (*l - d).max(0.0);
    }
    Ok(next)
}
