#![allow(dead_code)]

use std::sync::Arc;

use car_core::constraint::{Predicate, ValueFn};
use car_core::envs::tabular::TabularMdp;
use rand::Rng;

/// Per-step marginals `p_t(s, a)`, indexed `[t][s * A + a]`, by forward recursion.
pub fn forward_marginals(mdp: &TabularMdp) -> Vec<Vec<f64>> {
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let mut state: Vec<f64> = (0..ns).map(|s| mdp.p_initial(s)).collect();
    let mut out = Vec::with_capacity(mdp.horizon() + 1);
    for t in 0..=mdp.horizon() {
        let mut joint = vec![0.0; ns * na];
        for s in 0..ns {
            for a in 0..na {
                joint[s * na + a] = state[s] * mdp.p_action(t, s, a);
            }
        }
        let mut next = vec![0.0; ns];
        for s in 0..ns {
            for a in 0..na {
                for n in 0..ns {
                    next[n] += joint[s * na + a] * mdp.p_transition(s, a, n);
                }
            }
        }
        out.push(joint);
        state = next;
    }
    out
}

/// `Σ_t γ^t p_t(s, a) / Σ_t γ^t` from [`forward_marginals`].
pub fn forward_discounted(mdp: &TabularMdp, gamma: f64) -> Vec<f64> {
    let marg = forward_marginals(mdp);
    let mass: f64 = (0..marg.len()).map(|t| gamma.powi(t as i32)).sum();
    let mut out = vec![0.0; marg[0].len()];
    for (t, p) in marg.iter().enumerate() {
        for (o, v) in out.iter_mut().zip(p) {
            *o += gamma.powi(t as i32) * v / mass;
        }
    }
    out
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Decodes the one-hot state without going through the library codec.
pub fn obs_state(obs: &[f64]) -> usize {
    obs[..obs.len() - 1].iter().position(|&v| v == 1.0).expect("one-hot state")
}

/// Action bin of a scalar action in `[-1, 1]` split into `n` equal cells.
pub fn action_bin(action: &[f64], n: usize) -> usize {
    (((action[0] + 1.0) * 0.5 * n as f64).floor() as usize).min(n - 1)
}

pub fn random_mdp<R: Rng>(rng: &mut R) -> TabularMdp {
    let s = rng.random_range(1..=3);
    let a = rng.random_range(1..=3);
    let t = rng.random_range(0..=4);
    let sparsity = if rng.random::<bool>() { 0.0 } else { 0.3 };
    TabularMdp::random(rng, s, a, t, sparsity)
}

/// A random event set over `(s, a)` pairs, as a table and a predicate.
pub fn random_event<R: Rng>(rng: &mut R, mdp: &TabularMdp) -> (Vec<f64>, Predicate) {
    let na = mdp.n_actions();
    let table: Vec<bool> = (0..mdp.n_states() * na).map(|_| rng.random::<bool>()).collect();
    let indicator = table.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    let pred: Predicate = Arc::new(move |s: &[f64], a: &[f64]| table[obs_state(s) * na + action_bin(a, na)]);
    (indicator, pred)
}

/// A random signal table `ĝ(s, a)` in `[-2, 2]`, as a table and a value function.
pub fn random_signal<R: Rng>(rng: &mut R, mdp: &TabularMdp) -> (Vec<f64>, ValueFn) {
    let na = mdp.n_actions();
    let table: Vec<f64> = (0..mdp.n_states() * na).map(|_| rng.random_range(-2.0..2.0)).collect();
    let copy = table.clone();
    let f: ValueFn = Arc::new(move |s: &[f64], a: &[f64]| copy[obs_state(s) * na + action_bin(a, na)]);
    (table, f)
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs() + b.abs()).max(1e-12)
}
