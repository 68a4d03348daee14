use nalgebra::DMatrix;

use crate::model::{DistributionModel, ModelError};
use crate::sample::Sample;

/// `Σ log_pdf` over the sample, read in the model's own coordinate.
pub fn log_likelihood(model: &DistributionModel, sample: &Sample) -> Result<f64, ModelError> {
    let mut total = 0.0;
    for &x in model.coords(sample) {
        total += model.log_pdf(x)?;
    }
    Ok(total)
}

fn step(theta: f64) -> f64 {
    (1e-4 * theta.abs()).max(1e-5)
}

/// Log-likelihood at a parameter vector, or `None` if it leaves the
/// parameter space.
fn loglik_at(model: &DistributionModel, sample: &Sample, theta: &[f64]) -> Option<f64> {
    let m = model.with_parameters(theta).ok()?;
    log_likelihood(&m, sample).ok().filter(|v| v.is_finite())
}

fn theta_of(model: &DistributionModel) -> Vec<f64> {
    model.parameters().into_iter().map(|(_, v)| v).collect()
}

/// Observed information `−∂²lnL/∂θ∂θ'` by central differences.
pub(crate) fn observed_information(
    model: &DistributionModel,
    sample: &Sample,
) -> Option<DMatrix<f64>> {
    let theta = theta_of(model);
    let k = theta.len();
    let h: Vec<f64> = theta.iter().map(|&t| step(t)).collect();
    let f0 = loglik_at(model, sample, &theta)?;
    let eval = |di: &[(usize, f64)]| {
        let mut t = theta.clone();
        for &(i, d) in di {
            t[i] += d;
        }
        loglik_at(model, sample, &t)
    };
    let mut info = DMatrix::zeros(k, k);
    for i in 0..k {
        let fp = eval(&[(i, h[i])])?;
        let fm = eval(&[(i, -h[i])])?;
        info[(i, i)] = -(fp - 2.0 * f0 + fm) / (h[i] * h[i]);
        for j in 0..i {
            let fpp = eval(&[(i, h[i]), (j, h[j])])?;
            let fpm = eval(&[(i, h[i]), (j, -h[j])])?;
            let fmp = eval(&[(i, -h[i]), (j, h[j])])?;
            let fmm = eval(&[(i, -h[i]), (j, -h[j])])?;
            let v = -(fpp - fpm - fmp + fmm) / (4.0 * h[i] * h[j]);
            info[(i, j)] = v;
            info[(j, i)] = v;
        }
    }
    Some(info)
}

/// Square roots of the diagonal of the inverse observed information,
/// aligned with [`DistributionModel::parameters`]. `None` when the
/// information is not positive definite or the difference stencil leaves
/// the parameter space.
pub fn standard_errors(model: &DistributionModel, sample: &Sample) -> Option<Vec<f64>> {
    let info = observed_information(model, sample)?;
    let chol = info.cholesky()?;
    let inv = chol.inverse();
    let se: Vec<f64> = (0..inv.nrows()).map(|i| inv[(i, i)].sqrt()).collect();
    se.iter().all(|s| s.is_finite() && *s > 0.0).then_some(se)
}

/// `max_i |∂lnL/∂θ_i| · max(|θ_i|, 1) / n` by central differences.
pub fn scaled_gradient_norm(model: &DistributionModel, sample: &Sample) -> Option<f64> {
    let theta = theta_of(model);
    let n = sample.len() as f64;
    let mut worst: f64 = 0.0;
    for i in 0..theta.len() {
        let h = step(theta[i]);
        let mut tp = theta.clone();
        tp[i] += h;
        let mut tm = theta.clone();
        tm[i] -= h;
        let g = (loglik_at(model, sample, &tp)? - loglik_at(model, sample, &tm)?) / (2.0 * h);
        worst = worst.max(g.abs() * theta[i].abs().max(1.0) / n);
    }
    Some(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn support_violation_is_an_error() {
        let m = DistributionModel::pareto(2.0, 10.0).unwrap();
        let s = Sample::new(vec![5.0, 20.0]).unwrap();
        assert!(matches!(
            log_likelihood(&m, &s),
            Err(ModelError::OutsideSupport { .. })
        ));
    }

    #[test]
    fn log_space_likelihood_differs_by_jacobian() {
        let m = DistributionModel::lognormal(1.0, 0.7).unwrap();
        let s = m.sample(50, 3);
        let size = log_likelihood(&m, &s).unwrap();
        let log = log_likelihood(&m.to_log_space(), &s).unwrap();
        let jac: f64 = s.logs().iter().sum();
        assert!((log - size - jac).abs() < 1e-9);
    }

    #[test]
    fn information_is_symmetric_positive() {
        let m = DistributionModel::stexp(0.5, 100.0).unwrap();
        let s = m.sample(400, 5);
        let info = observed_information(&m, &s).unwrap();
        assert_eq!(info.nrows(), 2);
        assert!((info[(0, 1)] - info[(1, 0)]).abs() < 1e-12);
        assert!(info[(0, 0)] > 0.0 && info[(1, 1)] > 0.0);
    }
}
