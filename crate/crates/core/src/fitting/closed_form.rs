use super::{finish, Diagnostics, FitError, FitResult};
use crate::model::{DistributionModel, ModelError};
use crate::sample::Sample;
use crate::special::LN_SQRT_2PI;

/// Lognormal ML: mean and divisor-n SD of the logs.
pub fn fit_lognormal(sample: &Sample) -> Result<FitResult, FitError> {
    let n = sample.len();
    if n < 2 {
        return Err(FitError::InsufficientSample { needed: 2, got: n });
    }
    let (mu, sigma) = sample.log_moments();
    if sigma <= 0.0 || !sigma.is_finite() {
        return Err(FitError::DegenerateSample("log-variance is zero".into()));
    }
    let nf = n as f64;
    let log_likelihood = lognormal_max_log_likelihood(nf, mu, sigma);
    let model = DistributionModel::lognormal(mu, sigma)?;
    let diagnostics = Diagnostics {
        converged: true,
        ..Diagnostics::default()
    };
    let mut fit = finish(model, log_likelihood, sample, diagnostics, false);
    fit.std_errors = Some(vec![sigma / nf.sqrt(), sigma / (2.0 * nf).sqrt()]);
    Ok(fit)
}

/// Pareto ML (Hill estimator) on values at or above `x_min`.
pub fn fit_pareto(sample: &Sample, x_min: f64) -> Result<FitResult, FitError> {
    if !(x_min > 0.0 && x_min.is_finite()) {
        return Err(ModelError::InvalidParameter {
            name: "x_min",
            value: x_min,
            constraint: "x_min > 0",
        }
        .into());
    }
    if sample.min() < x_min {
        return Err(ModelError::OutsideSupport {
            x: sample.min(),
            support: format!("x >= x_min = {x_min}"),
        }
        .into());
    }
    let n = sample.len();
    if n < 2 {
        return Err(FitError::InsufficientSample { needed: 2, got: n });
    }
    let nf = n as f64;
    let ln_x_min = x_min.ln();
    let excess: f64 = sample.values().iter().map(|&x| (x / x_min).ln()).sum();
    if excess <= 0.0 {
        return Err(FitError::DegenerateSample(
            "every value equals x_min".into(),
        ));
    }
    let alpha = 1.0 + nf / excess;
    let log_likelihood = pareto_max_log_likelihood(nf, alpha, ln_x_min);
    let model = DistributionModel::pareto(alpha, x_min)?;
    let diagnostics = Diagnostics {
        converged: true,
        ..Diagnostics::default()
    };
    let mut fit = finish(model, log_likelihood, sample, diagnostics, false);
    fit.std_errors = Some(vec![(alpha - 1.0) / nf.sqrt()]);
    Ok(fit)
}

/// `−n (ln(√(2π) σ) + μ + ½)`, the maximized size-space lognormal
/// likelihood given the mean and divisor-n SD of the logs.
pub fn lognormal_max_log_likelihood(n: f64, log_mean: f64, log_sd: f64) -> f64 {
    -n * (LN_SQRT_2PI + log_sd.ln() + log_mean + 0.5)
}

/// `n ln(α−1) − n ln x_min − α n/(α−1)`, the maximized Pareto likelihood.
pub fn pareto_max_log_likelihood(n: f64, alpha: f64, ln_x_min: f64) -> f64 {
    n * (alpha - 1.0).ln() - n * ln_x_min - alpha * n / (alpha - 1.0)
}
