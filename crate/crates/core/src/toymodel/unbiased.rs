use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnbiasednessResult {
    /// Mean of the MC predictive-variance estimate over all trials.
    pub mean_estimate: f64,
    /// `τ² + (μ - y)²`.
    pub true_sigma2: f64,
    pub relative_bias: f64,
}

/// Running mean that stays exact when every value is identical.
fn running_mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut mean = 0.0;
    for (k, v) in values.into_iter().enumerate() {
        mean += (v - mean) / (k + 1) as f64;
    }
    mean
}

/// Monte-Carlo check that the epistemic + aleatoric estimate is unbiased.
///
/// Each trial draws `n` predictions `ŷ ~ N(μ, τ²)` and pairs them with a
/// perfectly calibrated aleatoric term `σ̂² = (μ - y)² + τ²/n`; the estimate is
/// `1/n Σ (ŷ - ȳ)² + σ̂²`, whose expectation is `τ² + (μ - y)²`.
pub fn simulate_unbiasedness(mu: f64, tau: f64, y: f64, n: usize, trials: usize, seed: u64) -> Result<UnbiasednessResult> {
    if n == 0 || trials == 0 {
        return Err(Error::InvalidArgument("n and trials must be positive".into()));
    }
    if !(tau >= 0.0) || !tau.is_finite() {
        return Err(Error::InvalidArgument(format!("tau must be finite and >= 0, got {tau}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bias2 = (mu - y) * (mu - y);
    let aleatoric = bias2 + tau * tau / n as f64;
    let mut draws = vec![0.0; n];
    let estimates = (0..trials).map(|_| {
        for d in draws.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *d = mu + tau * z;
        }
        let mean = running_mean(draws.iter().copied());
        let epistemic = draws.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / n as f64;
        epistemic + aleatoric
    });
    let mean_estimate = running_mean(estimates.collect::<Vec<_>>());
    let true_sigma2 = tau * tau + bias2;
    Ok(UnbiasednessResult {
        mean_estimate,
        true_sigma2,
        relative_bias: (mean_estimate - true_sigma2).abs() / true_sigma2,
    })
}
