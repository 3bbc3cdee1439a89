//! Critic regression losses.
//!
//! The quantile loss is the asymmetric Huber ("pinball") loss
//!
//! ```text
//! ρ_τ(u) = |τ - 1{u < 0}| · L_κ(u) / κ,   L_κ(u) = u²/2 if |u| ≤ κ, else κ(|u| - κ/2)
//! ```
//!
//! averaged over every (prediction `i`, target `j`) pair with `u = target_j - pred_i`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};

/// Quantile midpoints `τ̂_i = (2i + 1) / (2K)`.
pub fn quantile_midpoints(k: usize) -> Vec<f64> {
    (0..k).map(|i| (2 * i + 1) as f64 / (2 * k) as f64).collect()
}

#[inline]
fn huber(u: f64, kappa: f64) -> f64 {
    if u.abs() <= kappa {
        0.5 * u * u
    } else {
        kappa * (u.abs() - 0.5 * kappa)
    }
}

#[inline]
fn huber_grad(u: f64, kappa: f64) -> f64 {
    if u.abs() <= kappa {
        u
    } else {
        kappa * u.signum()
    }
}

#[inline]
fn asymmetry(tau: f64, u: f64) -> f64 {
    if u < 0.0 {
        (tau - 1.0).abs()
    } else {
        tau
    }
}

/// `ρ^κ_τ(u)` for a single residual.
pub fn quantile_huber(tau: f64, u: f64, kappa: f64) -> f64 {
    asymmetry(tau, u) * huber(u, kappa) / kappa
}

/// Mean over all `(i, j)` of `ρ^κ_{τ̂_i}(targets_j - pred_i)`.
pub fn quantile_huber_loss(pred: &[f64], targets: &[f64], tau_hat: &[f64], kappa: f64) -> Result<f64> {
    if targets.is_empty() || pred.is_empty() {
        return Err(Error::Structural("quantile loss needs predictions and targets".into()));
    }
    if tau_hat.len() != pred.len() {
        return Err(Error::Structural(format!(
            "{} quantile fractions for {} predictions",
            tau_hat.len(),
            pred.len()
        )));
    }
    if !(kappa > 0.0) {
        return Err(Error::construction("kappa", "must be positive"));
    }
    let mut acc = 0.0;
    for (p, &tau) in pred.iter().zip(tau_hat) {
        for y in targets {
            acc += quantile_huber(tau, y - p, kappa);
        }
    }
    Ok(acc / (pred.len() * targets.len()) as f64)
}

/// Batch quantile loss: the per-row [`quantile_huber_loss`] averaged over rows,
/// together with its gradient with respect to `pred`.
pub fn quantile_huber_batch(
    pred: ArrayView2<'_, f64>,
    targets: ArrayView2<'_, f64>,
    tau_hat: &[f64],
    kappa: f64,
) -> Result<(f64, Array2<f64>)> {
    let (b, k) = pred.dim();
    let k_t = targets.ncols();
    if targets.nrows() != b || tau_hat.len() != k || k_t == 0 || b == 0 {
        return Err(Error::Structural(format!(
            "quantile batch shapes pred {:?}, targets {:?}, tau {}",
            pred.dim(),
            targets.dim(),
            tau_hat.len()
        )));
    }
    let scale = 1.0 / (b * k * k_t) as f64;
    let mut loss = 0.0;
    let mut grad = Array2::zeros((b, k));
    for r in 0..b {
        for i in 0..k {
            let p = pred[[r, i]];
            let tau = tau_hat[i];
            let mut g = 0.0;
            for j in 0..k_t {
                let u = targets[[r, j]] - p;
                let w = asymmetry(tau, u);
                loss += w * huber(u, kappa);
                g -= w * huber_grad(u, kappa);
            }
            grad[[r, i]] = g * scale / kappa;
        }
    }
    Ok((loss * scale / kappa, grad))
}

/// `mean(½ (pred - target)²)` for single-output critics, with its gradient.
pub fn mse_batch(pred: ArrayView2<'_, f64>, targets: ArrayView1<'_, f64>) -> Result<(f64, Array2<f64>)> {
    let b = pred.nrows();
    if pred.ncols() != 1 || targets.len() != b || b == 0 {
        return Err(Error::Structural(format!(
            "mse shapes pred {:?}, targets {}",
            pred.dim(),
            targets.len()
        )));
    }
    let diff: Array1<f64> = &pred.column(0) - &targets;
    let loss = 0.5 * diff.mapv(|d| d * d).sum() / b as f64;
    let grad = (diff / b as f64).into_shape_with_order((b, 1)).unwrap();
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn midpoints() {
        assert_eq!(quantile_midpoints(1), vec![0.5]);
        assert_eq!(quantile_midpoints(4), vec![0.125, 0.375, 0.625, 0.875]);
    }

    #[test]
    fn zero_residual_zero_loss() {
        assert_eq!(quantile_huber_loss(&[0.7], &[0.7], &[0.5], 1.0).unwrap(), 0.0);
        let p = [0.3; 3];
        assert_eq!(quantile_huber_loss(&p, &p, &quantile_midpoints(3), 1.0).unwrap(), 0.0);
    }

    #[test]
    fn hand_evaluated_branch() {
        let l = quantile_huber_loss(&[0.0], &[1.0], &[0.9], 1.0).unwrap();
        assert!((l - 0.45).abs() < 1e-15);
        // linear branch: u = -3, weight 0.1, κ(|u| - κ/2) = 2.5
        let l = quantile_huber_loss(&[0.0], &[-3.0], &[0.9], 1.0).unwrap();
        assert!((l - 0.25).abs() < 1e-15);
    }

    #[test]
    fn empty_targets_rejected() {
        assert!(quantile_huber_loss(&[0.0], &[], &[0.5], 1.0).is_err());
    }

    #[test]
    fn symmetric_median_minimizer() {
        let targets = [-1.0, 1.0];
        let at = |c: f64| quantile_huber_loss(&[c], &targets, &[0.5], 1.0).unwrap();
        let best = (-200..=200)
            .map(|i| i as f64 * 0.01)
            .min_by(|a, b| at(*a).partial_cmp(&at(*b)).unwrap())
            .unwrap();
        assert!(best.abs() < 1e-12);
    }

    #[test]
    fn batch_matches_single() {
        let pred = array![[0.1, 0.5, 0.9], [-1.0, 0.0, 3.0]];
        let targets = array![[0.0, 1.0, 2.0, -0.5], [0.3, 0.3, 0.3, 0.3]];
        let tau = quantile_midpoints(3);
        let (l, _) = quantile_huber_batch(pred.view(), targets.view(), &tau, 1.0).unwrap();
        let single: f64 = (0..2)
            .map(|r| {
                quantile_huber_loss(&pred.row(r).to_vec(), &targets.row(r).to_vec(), &tau, 1.0).unwrap()
            })
            .sum::<f64>()
            / 2.0;
        assert!((l - single).abs() < 1e-14);
    }

    #[test]
    fn mse_gradient() {
        let (l, g) = mse_batch(array![[1.0], [3.0]].view(), array![0.0, 1.0].view()).unwrap();
        assert_eq!(l, 0.5 * (1.0 + 4.0) / 2.0);
        assert_eq!(g, array![[0.5], [1.0]]);
    }
}
