use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{Mlp, MlpTape};
use crate::error::{Error, Result};

/// Action-value network over `observation ⊕ action`.
///
/// With `K > 1` outputs the values are quantile estimates of the return
/// distribution; with a single output it is an ordinary scalar Q-function.
/// The scalar Q estimate is always the mean of the outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileCritic {
    net: Mlp,
    obs_dim: usize,
}

#[derive(Debug, Clone)]
pub struct CriticTape {
    tape: MlpTape,
}

impl QuantileCritic {
    pub fn new<R: Rng + ?Sized>(
        obs_dim: usize,
        action_dim: usize,
        hidden: &[usize],
        outputs: usize,
        rng: &mut R,
    ) -> Self {
        let mut sizes = vec![obs_dim + action_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(outputs);
        Self {
            net: Mlp::new(&sizes, rng),
            obs_dim,
        }
    }

    pub fn from_net(net: Mlp, obs_dim: usize) -> Result<Self> {
        if net.input_dim() <= obs_dim {
            return Err(Error::Structural("critic input must include the action".into()));
        }
        Ok(Self { net, obs_dim })
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut Mlp {
        &mut self.net
    }

    pub fn outputs(&self) -> usize {
        self.net.output_dim()
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn action_dim(&self) -> usize {
        self.net.input_dim() - self.obs_dim
    }

    fn input(&self, obs: ArrayView2<'_, f64>, action: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if obs.ncols() != self.obs_dim || action.ncols() != self.action_dim() || obs.nrows() != action.nrows() {
            return Err(Error::Structural(format!(
                "critic expects ({}, {}) columns, got obs {:?} and action {:?}",
                self.obs_dim,
                self.action_dim(),
                obs.dim(),
                action.dim()
            )));
        }
        concatenate(Axis(1), &[obs, action]).map_err(|e| Error::Structural(e.to_string()))
    }

    pub fn forward(&self, obs: ArrayView2<'_, f64>, action: ArrayView2<'_, f64>) -> Result<(Array2<f64>, CriticTape)> {
        let x = self.input(obs, action)?;
        let (out, tape) = self.net.forward(x.view())?;
        Ok((out, CriticTape { tape }))
    }

    /// `K` quantile estimates for each row.
    pub fn quantiles(&self, obs: ArrayView2<'_, f64>, action: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.forward(obs, action).map(|(q, _)| q)
    }

    /// Quantile estimates for a single `(obs, action)` pair.
    pub fn quantile_forward(&self, obs: &[f64], action: &[f64]) -> Result<Vec<f64>> {
        let o = ArrayView2::from_shape((1, obs.len()), obs).map_err(|e| Error::Structural(e.to_string()))?;
        let a = ArrayView2::from_shape((1, action.len()), action).map_err(|e| Error::Structural(e.to_string()))?;
        Ok(self.quantiles(o, a)?.row(0).to_vec())
    }

    /// Backpropagates `grad_out` (loss gradient w.r.t. the outputs). Returns the
    /// gradient with respect to the action columns when requested.
    pub fn backward(
        &self,
        tape: &CriticTape,
        grad_out: ArrayView2<'_, f64>,
        grad_params: Option<&mut [f64]>,
        want_action_grad: bool,
    ) -> Option<Array2<f64>> {
        self.net
            .backward(&tape.tape, grad_out, grad_params, want_action_grad)
            .map(|dx| dx.slice(s![.., self.obs_dim..]).to_owned())
    }
}

/// Row means of a quantile matrix.
pub fn quantile_means(q: &Array2<f64>) -> Array1<f64> {
    q.mean_axis(Axis(1)).expect("non-empty quantile rows")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn forward_is_deterministic_and_checks_dims() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = QuantileCritic::new(4, 1, &[16, 16], 32, &mut rng);
        let a = c.quantile_forward(&[0.1, 0.2, 0.3, 1.0], &[0.5]).unwrap();
        let b = c.quantile_forward(&[0.1, 0.2, 0.3, 1.0], &[0.5]).unwrap();
        assert_eq!(a.len(), 32);
        assert_eq!(a, b);
        assert!(c.quantile_forward(&[0.1, 0.2, 0.3], &[0.5]).is_err());
    }

    #[test]
    fn fresh_network_outputs_are_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let c = QuantileCritic::new(4, 1, &[256, 256, 256], 32, &mut rng);
        let q = c.quantile_forward(&[0.5, -0.5, 0.1, 0.0], &[0.2]).unwrap();
        assert!(q.iter().all(|v| v.is_finite() && v.abs() < 0.5), "{q:?}");
    }
}
