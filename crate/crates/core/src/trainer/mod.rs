//! Lagrangian soft actor-critic training.
//!
//! Both algorithms share every code path except the critic head: QRSAC-L
//! regresses `K` quantiles with the quantile Huber loss, SAC-L a single value
//! with squared error. Stored transitions keep raw rewards and constraint
//! values; the effective reward is recomputed from the current multipliers
//! each time a batch is drawn.

mod agent;
mod checkpoint;
mod replay;
mod state;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use agent::{
    critic_loss_and_grad, policy_loss_and_grad, scalarized_batch, temperature_loss_and_grad, Agent, CriticLoss,
    UpdateStats,
};
pub use replay::{Batch, ReplayBuffer};
pub use state::{evaluate, train, EpisodeReport, EvalReport, MetricsRow, MetricsSink, RowKind, TrainerState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algo {
    #[serde(rename = "qrsac-l")]
    QrsacL,
    #[serde(rename = "sac-l")]
    SacL,
}

impl Algo {
    pub fn as_str(self) -> &'static str {
        match self {
            Algo::QrsacL => "qrsac-l",
            Algo::SacL => "sac-l",
        }
    }
}

impl std::str::FromStr for Algo {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "qrsac-l" => Ok(Algo::QrsacL),
            "sac-l" => Ok(Algo::SacL),
            other => Err(Error::UnknownName {
                what: "algorithm",
                name: other.to_string(),
            }),
        }
    }
}

/// Early-stop rule checked after each evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StopRule {
    /// Stop once the median final-segment task signal is at or below this.
    pub task_metric_below: Option<f64>,
    /// Stop once the mean evaluation return is at or above this.
    pub return_above: Option<f64>,
}

impl StopRule {
    pub fn is_met(&self, report: &EvalReport) -> bool {
        let by_metric = match (self.task_metric_below, report.median_final_segment()) {
            (Some(limit), Some(v)) => v <= limit,
            _ => false,
        };
        let by_return = match (self.return_above, report.mean_return()) {
            (Some(limit), Some(v)) => v >= limit,
            _ => false,
        };
        by_metric || by_return
    }

    pub fn is_set(&self) -> bool {
        self.task_metric_below.is_some() || self.return_above.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainerConfig {
    pub model_lr: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub batch_size: usize,
    pub gamma: f64,
    pub tau: f64,
    pub quantiles: usize,
    pub kappa: f64,
    pub alpha_lambda: f64,
    pub multiplier_interval: u64,
    /// `None` means `−action_dim`.
    pub target_entropy: Option<f64>,
    pub init_temperature: f64,
    pub total_iterations: u64,
    pub warmup_steps: u64,
    pub buffer_capacity: usize,
    pub hidden_width: usize,
    pub hidden_layers: usize,
    pub eval_interval: u64,
    pub eval_episodes: usize,
    pub seed: u64,
    pub freeze_multipliers: bool,
    pub initial_lambda: Option<Vec<f64>>,
    pub stop: StopRule,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            model_lr: 3e-4,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            batch_size: 256,
            gamma: 0.99,
            tau: 0.005,
            quantiles: 32,
            kappa: 1.0,
            alpha_lambda: 0.1,
            multiplier_interval: 5000,
            target_entropy: None,
            init_temperature: 1.0,
            total_iterations: 200_000,
            warmup_steps: 1000,
            buffer_capacity: 1_000_000,
            hidden_width: 256,
            hidden_layers: 3,
            eval_interval: 5000,
            eval_episodes: 10,
            seed: 0,
            freeze_multipliers: false,
            initial_lambda: None,
            stop: StopRule::default(),
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64, field: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::construction(field, "must be positive and finite"))
            }
        };
        positive(self.model_lr, "model_lr")?;
        positive(self.alpha_lambda, "alpha_lambda")?;
        positive(self.kappa, "kappa")?;
        positive(self.init_temperature, "init_temperature")?;
        positive(self.adam_eps, "adam_eps")?;
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::construction("gamma", "must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::construction("tau", "must lie in [0, 1]"));
        }
        for (v, f) in [(self.adam_beta1, "adam_beta1"), (self.adam_beta2, "adam_beta2")] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::construction(f, "must lie in [0, 1)"));
            }
        }
        let nonzero = [
            (self.batch_size, "batch_size"),
            (self.quantiles, "quantiles"),
            (self.buffer_capacity, "buffer_capacity"),
            (self.hidden_width, "hidden_width"),
            (self.hidden_layers, "hidden_layers"),
        ];
        for (v, f) in nonzero {
            if v == 0 {
                return Err(Error::construction(f, "must be positive"));
            }
        }
        if self.multiplier_interval == 0 {
            return Err(Error::construction("multiplier_interval", "must be positive"));
        }
        if self.eval_interval == 0 {
            return Err(Error::construction("eval_interval", "must be positive"));
        }
        if let Some(l) = &self.initial_lambda {
            if l.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::construction("initial_lambda", "multipliers must be finite and nonnegative"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reference_hyperparameters() {
        let c = TrainerConfig::default();
        assert_eq!((c.adam_beta1, c.adam_beta2), (0.9, 0.999));
        assert_eq!(c.model_lr, 3.0e-4);
        assert_eq!(c.alpha_lambda, 0.1);
        assert_eq!(c.multiplier_interval, 5000);
        assert_eq!(c.gamma, 0.99);
        assert_eq!(c.batch_size, 256);
        assert_eq!(c.quantiles, 32);
        assert_eq!(c.tau, 0.005);
        assert_eq!((c.hidden_width, c.hidden_layers), (256, 3));
        c.validate().unwrap();
    }

    #[test]
    fn algo_names_parse() {
        assert_eq!("qrsac-l".parse::<Algo>().unwrap(), Algo::QrsacL);
        assert!("ppo-l".parse::<Algo>().is_err());
    }
}
