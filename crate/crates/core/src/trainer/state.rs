use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lagrange::{init_multipliers, update_multipliers, window_mean, LagrangeState};
use crate::mdp::{collect_transition, Environment, ProblemSpec, Trajectory, Transition};

use super::agent::{Agent, UpdateStats};
use super::replay::ReplayBuffer;
use super::{Algo, TrainerConfig};

const INIT_SALT: u64 = 0x1;
const ACT_SALT: u64 = 0x2;
const UPDATE_SALT: u64 = 0x3;
const REPLAY_SALT: u64 = 0x4;
const EPISODE_SALT: u64 = 0x5;
const EVAL_SALT: u64 = 0x6;

/// SplitMix64 finalizer; derives independent stream seeds from one run seed.
pub(crate) fn mix_seed(seed: u64, salt: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(salt.wrapping_mul(0xbf58_476d_1ce4_e5b9))
        .wrapping_add(index);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RowKind {
    Eval,
    Multiplier,
    MultiplierSkipped,
}

impl RowKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RowKind::Eval => "eval",
            RowKind::Multiplier => "multiplier",
            RowKind::MultiplierSkipped => "multiplier-skipped",
        }
    }
}

/// One metrics record. Eval rows carry evaluation means; multiplier rows
/// carry the means over the training episodes in the update window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub iteration: u64,
    pub episode: u64,
    pub kind: RowKind,
    pub episode_return: Option<f64>,
    pub constraint_returns: Option<Vec<f64>>,
    pub lambdas: Vec<f64>,
    pub critic_loss: Option<f64>,
    pub policy_loss: Option<f64>,
    pub temperature: Option<f64>,
    pub task_metric: Option<f64>,
}

pub trait MetricsSink {
    fn record(&mut self, row: &MetricsRow) -> Result<()>;
}

impl MetricsSink for Vec<MetricsRow> {
    fn record(&mut self, row: &MetricsRow) -> Result<()> {
        self.push(row.clone());
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeReport {
    pub seed: u64,
    pub episode_return: f64,
    pub constraint_returns: Vec<f64>,
    /// Mean task signal over the last 20% of visited states.
    pub final_segment: Option<f64>,
    /// Task signal of the state at the last step.
    pub final_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalReport {
    pub episodes: Vec<EpisodeReport>,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for v in values {
        sum += v;
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}

impl EvalReport {
    pub fn mean_return(&self) -> Option<f64> {
        mean(self.episodes.iter().map(|e| e.episode_return))
    }

    pub fn mean_constraint_returns(&self) -> Option<Vec<f64>> {
        let first = self.episodes.first()?;
        Some(
            (0..first.constraint_returns.len())
                .map(|m| mean(self.episodes.iter().map(|e| e.constraint_returns[m])).unwrap())
                .collect(),
        )
    }

    pub fn median_final_segment(&self) -> Option<f64> {
        let mut v: Vec<f64> = self.episodes.iter().filter_map(|e| e.final_segment).collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        let n = v.len();
        Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
    }

    pub fn mean_final_segment(&self) -> Option<f64> {
        mean(self.episodes.iter().filter_map(|e| e.final_segment))
    }

    pub fn mean_final_value(&self) -> Option<f64> {
        mean(self.episodes.iter().filter_map(|e| e.final_value))
    }
}

/// Runs deterministic mean-action episodes on a copy of `env`.
pub fn evaluate(
    agent: &Agent,
    env: &dyn Environment,
    spec: &ProblemSpec,
    episodes: usize,
    seed: u64,
) -> Result<EvalReport> {
    let mut env = env.boxed_clone();
    let policy = |obs: &[f64], _: &mut dyn rand::RngCore| agent.policy.mean_action(obs);
    let mut report = EvalReport::default();
    for k in 0..episodes {
        let ep_seed = mix_seed(seed, EVAL_SALT, k as u64);
        let traj = crate::mdp::rollout(env.as_mut(), &FallibleFn(&policy), spec, ep_seed)?;
        let signals: Vec<Option<f64>> = traj.transitions.iter().map(|t| env.task_signal(&t.state)).collect();
        let n = signals.len();
        let start = n - n.div_ceil(5);
        let tail: Option<Vec<f64>> = signals[start..].iter().copied().collect();
        report.episodes.push(EpisodeReport {
            seed: ep_seed,
            episode_return: traj.episode_return,
            constraint_returns: traj.constraint_returns.clone(),
            final_segment: tail.and_then(|t| mean(t.into_iter())),
            final_value: signals.last().copied().flatten(),
        });
    }
    Ok(report)
}

struct FallibleFn<'a, F>(&'a F);

impl<F> crate::mdp::StochasticPolicy for FallibleFn<'_, F>
where
    F: Fn(&[f64], &mut dyn rand::RngCore) -> Result<Vec<f64>>,
{
    fn act(&self, observation: &[f64], rng: &mut dyn rand::RngCore) -> Result<Vec<f64>> {
        (self.0)(observation, rng)
    }
}

/// Everything needed to continue a run exactly where it stopped.
#[derive(Debug, Clone)]
pub struct TrainerState {
    pub config: TrainerConfig,
    pub algo: Algo,
    pub agent: Agent,
    pub lagrange: LagrangeState,
    pub buffer: ReplayBuffer,
    /// Environment steps taken so far.
    pub iteration: u64,
    /// Completed training episodes.
    pub episode: u64,
    /// First iteration at which the stop rule held, if it has.
    pub threshold_reached_at: Option<u64>,
    pub stopped: bool,
    pub last_stats: Option<UpdateStats>,
    pub(crate) window: Vec<Vec<f64>>,
    pub(crate) window_returns: Vec<f64>,
    pub(crate) current: Vec<Transition>,
    pub(crate) obs: Option<Vec<f64>>,
    pub(crate) act_rng: ChaCha8Rng,
    pub(crate) update_rng: ChaCha8Rng,
}

fn check_compatible(env: &dyn Environment, spec: &ProblemSpec) -> Result<()> {
    if env.horizon() != spec.horizon || env.observation_dim() != spec.state_dim || env.action_dim() != spec.action_dim {
        return Err(Error::Structural(format!(
            "environment (T={}, obs={}, act={}) does not match problem (T={}, obs={}, act={})",
            env.horizon(),
            env.observation_dim(),
            env.action_dim(),
            spec.horizon,
            spec.state_dim,
            spec.action_dim
        )));
    }
    Ok(())
}

impl TrainerState {
    pub fn new(env: &dyn Environment, spec: &ProblemSpec, config: TrainerConfig, algo: Algo) -> Result<Self> {
        config.validate()?;
        check_compatible(env, spec)?;
        if (config.gamma - spec.discount).abs() > 0.0 {
            return Err(Error::construction("gamma", "trainer and problem discounts differ"));
        }
        let seed = config.seed;
        let mut init_rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, INIT_SALT, 0));
        let agent = Agent::new(spec.state_dim, spec.action_dim, &config, algo, &mut init_rng);
        let m = spec.constraint_count();
        let mut lagrange = if m == 0 {
            LagrangeState::unconstrained()
        } else {
            init_multipliers(m, config.alpha_lambda, config.multiplier_interval)?
        };
        if let Some(l) = &config.initial_lambda {
            lagrange.set_lambdas(l)?;
        }
        Ok(Self {
            buffer: ReplayBuffer::new(config.buffer_capacity, mix_seed(seed, REPLAY_SALT, 0))?,
            act_rng: ChaCha8Rng::seed_from_u64(mix_seed(seed, ACT_SALT, 0)),
            update_rng: ChaCha8Rng::seed_from_u64(mix_seed(seed, UPDATE_SALT, 0)),
            config,
            algo,
            agent,
            lagrange,
            iteration: 0,
            episode: 0,
            threshold_reached_at: None,
            stopped: false,
            last_stats: None,
            window: Vec::new(),
            window_returns: Vec::new(),
            current: Vec::new(),
            obs: None,
        })
    }

    /// Seed passed to the environment at the start of training episode `e`.
    pub fn episode_seed(&self, e: u64) -> u64 {
        mix_seed(self.config.seed, EPISODE_SALT, e)
    }

    /// Seed base for evaluations of this run.
    pub fn eval_seed(&self) -> u64 {
        mix_seed(self.config.seed, EVAL_SALT, 0)
    }

    fn multipliers_active(&self) -> bool {
        !self.config.freeze_multipliers && !self.lagrange.is_empty()
    }

    /// One environment step followed by at most one gradient update.
    pub fn step(&mut self, env: &mut dyn Environment, spec: &ProblemSpec) -> Result<()> {
        let obs = match self.obs.take() {
            Some(o) => o,
            None => {
                let o = env.reset(self.episode_seed(self.episode));
                self.current.clear();
                o
            }
        };
        let t = self.current.len();
        let action = if self.iteration < self.config.warmup_steps {
            (0..spec.action_dim).map(|_| self.act_rng.random_range(-1.0..1.0)).collect()
        } else {
            self.agent.policy.sample_one(&obs, &mut self.act_rng)?
        };
        let tr = match collect_transition(env, spec, &obs, action, t) {
            Ok(tr) => tr,
            Err(e) => {
                self.obs = Some(obs);
                return Err(e);
            }
        };
        let done = tr.done();
        self.obs = (!done).then(|| tr.next_state.clone());
        self.buffer.push(tr.clone());
        self.current.push(tr);
        self.iteration += 1;
        if done {
            let traj = Trajectory::new(std::mem::take(&mut self.current), spec.discount)?;
            self.window.push(traj.constraint_returns);
            self.window_returns.push(traj.episode_return);
            self.episode += 1;
        }
        if self.iteration > self.config.warmup_steps && self.buffer.len() >= self.config.batch_size {
            let batch = self.buffer.sample(self.config.batch_size)?;
            let stats = self.agent.update(
                &batch,
                self.lagrange.lambdas(),
                spec.reward_mode,
                &mut self.update_rng,
                self.iteration,
            )?;
            self.last_stats = Some(stats);
        }
        Ok(())
    }

    fn multiplier_row(&mut self, sink: &mut dyn MetricsSink) -> Result<()> {
        let stats = self.last_stats;
        let (kind, returns) = match window_mean(&self.window) {
            Ok(grad) => {
                self.lagrange = update_multipliers(&self.lagrange, &grad)?;
                (RowKind::Multiplier, Some(grad))
            }
            Err(Error::EmptyWindow) => (RowKind::MultiplierSkipped, None),
            Err(e) => return Err(e),
        };
        let row = MetricsRow {
            iteration: self.iteration,
            episode: self.episode,
            kind,
            episode_return: mean(self.window_returns.iter().copied()),
            constraint_returns: returns,
            lambdas: self.lagrange.lambdas().to_vec(),
            critic_loss: stats.map(|s| s.critic_loss),
            policy_loss: stats.map(|s| s.policy_loss),
            temperature: stats.map(|s| s.temperature),
            task_metric: None,
        };
        self.window.clear();
        self.window_returns.clear();
        sink.record(&row)
    }

    fn eval_row(&mut self, env: &dyn Environment, spec: &ProblemSpec, sink: &mut dyn MetricsSink) -> Result<()> {
        let report = evaluate(&self.agent, env, spec, self.config.eval_episodes, self.eval_seed())?;
        let stats = self.last_stats;
        sink.record(&MetricsRow {
            iteration: self.iteration,
            episode: self.episode,
            kind: RowKind::Eval,
            episode_return: report.mean_return(),
            constraint_returns: report.mean_constraint_returns(),
            lambdas: self.lagrange.lambdas().to_vec(),
            critic_loss: stats.map(|s| s.critic_loss),
            policy_loss: stats.map(|s| s.policy_loss),
            temperature: stats.map(|s| s.temperature),
            task_metric: report.median_final_segment(),
        })?;
        if self.config.stop.is_set() && self.config.stop.is_met(&report) {
            self.threshold_reached_at.get_or_insert(self.iteration);
            self.stopped = true;
        }
        Ok(())
    }

    /// Trains until `total_iterations` or the stop rule fires.
    pub fn run(&mut self, env: &mut dyn Environment, spec: &ProblemSpec, sink: &mut dyn MetricsSink) -> Result<()> {
        check_compatible(env, spec)?;
        while self.iteration < self.config.total_iterations && !self.stopped {
            self.step(env, spec)?;
            if self.multipliers_active() && self.lagrange.is_update_iteration(self.iteration) {
                self.multiplier_row(sink)?;
            }
            if self.iteration % self.config.eval_interval == 0 {
                self.eval_row(env, spec, sink)?;
            }
        }
        Ok(())
    }
}

/// Builds a fresh state and trains it.
pub fn train(
    env: &mut dyn Environment,
    spec: &ProblemSpec,
    config: &TrainerConfig,
    algo: Algo,
    sink: &mut dyn MetricsSink,
) -> Result<TrainerState> {
    let mut state = TrainerState::new(env, spec, config.clone(), algo)?;
    state.run(env, spec, sink)?;
    Ok(state)
}
