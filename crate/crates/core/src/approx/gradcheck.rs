use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub probed: usize,
    pub skipped: usize,
}

/// Compares reverse-mode gradients against central finite differences on
/// `probes` randomly chosen coordinates.
///
/// `loss` returns the value and the full gradient. `admissible` rejects
/// perturbed parameter vectors that cross a non-differentiable point; such
/// probes are skipped and counted. The relative error of one coordinate is
/// `|analytic - numeric| / max(|analytic| + |numeric|, 1e-6)`.
pub fn gradient_check_with<L, A>(
    loss: L,
    params: &[f64],
    probes: usize,
    step: f64,
    seed: u64,
    admissible: A,
) -> GradCheckReport
where
    L: Fn(&[f64]) -> (f64, Vec<f64>),
    A: Fn(&[f64]) -> bool,
{
    let (_, analytic) = loss(params);
    assert_eq!(analytic.len(), params.len(), "gradient length");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut work = params.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        probed: 0,
        skipped: 0,
    };
    for _ in 0..probes {
        let idx = rng.random_range(0..params.len());
        work[idx] = params[idx] + step;
        let plus_ok = admissible(&work);
        let (plus, _) = loss(&work);
        work[idx] = params[idx] - step;
        let minus_ok = admissible(&work);
        let (minus, _) = loss(&work);
        work[idx] = params[idx];
        if !(plus_ok && minus_ok) {
            report.skipped += 1;
            continue;
        }
        let numeric = (plus - minus) / (2.0 * step);
        let a = analytic[idx];
        let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-6);
        report.max_rel_error = report.max_rel_error.max(rel);
        report.probed += 1;
    }
    report
}

/// [`gradient_check_with`] with step `1e-5`, a fixed probe seed, and no kink exclusion.
pub fn gradient_check<L>(loss: L, params: &[f64], probes: usize) -> f64
where
    L: Fn(&[f64]) -> (f64, Vec<f64>),
{
    gradient_check_with(loss, params, probes, 1e-5, 0x5eed, |_| true).max_rel_error
}
