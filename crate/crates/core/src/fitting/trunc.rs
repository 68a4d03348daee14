use serde::{Deserialize, Serialize};

use super::{finish, Diagnostics, FitConfig, FitError, FitResult};
use crate::model::{DistributionModel, ModelError};
use crate::sample::Sample;
use crate::special::{inverse_mills, ln_std_normal_sf, LN_SQRT_2PI};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LntConfig {
    /// Start grid: `mu_points` μ values spanning `[ȳ − 6·sd, ȳ]` times
    /// `sigma_points` σ values spanning `[0.5·sd, 5·sd]`.
    pub mu_points: usize,
    pub sigma_points: usize,
    pub max_iter: usize,
    /// Stop when `max_i |∂ℓ/∂θ_i|·max(|θ_i|, 1) / n` falls below this.
    pub grad_tol: f64,
    /// Box for μ: `[ȳ − mu_below, ȳ + mu_above]`.
    pub mu_below: f64,
    pub mu_above: f64,
    pub sigma_max: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warm_start: Option<(f64, f64)>,
}

impl Default for LntConfig {
    fn default() -> Self {
        Self {
            mu_points: 4,
            sigma_points: 3,
            max_iter: 500,
            grad_tol: 1e-6,
            mu_below: 60.0,
            mu_above: 10.0,
            sigma_max: 20.0,
            warm_start: None,
        }
    }
}

/// Tail data summarized by `n`, the log-mean and the divisor-n log-variance,
/// which is all the truncated-normal likelihood depends on.
#[derive(Debug, Clone, Copy)]
struct Stats {
    n: f64,
    mean: f64,
    var: f64,
    y_min: f64,
}

impl Stats {
    /// Per-observation log-space log-likelihood.
    fn value(&self, mu: f64, sigma: f64) -> f64 {
        let q = self.var + (self.mean - mu).powi(2);
        let z0 = (self.y_min - mu) / sigma;
        -sigma.ln() - LN_SQRT_2PI - q / (2.0 * sigma * sigma) - ln_std_normal_sf(z0)
    }

    /// Per-observation gradient and Hessian in `(μ, σ)`.
    fn derivatives(&self, mu: f64, sigma: f64) -> ([f64; 2], [[f64; 2]; 2]) {
        let d = self.mean - mu;
        let q = self.var + d * d;
        let s2 = sigma * sigma;
        let z0 = (self.y_min - mu) / sigma;
        let lam = inverse_mills(z0);
        let dlam = lam * (lam - z0);
        let g_mu = d / s2 - lam / sigma;
        let g_s = -1.0 / sigma + q / (s2 * sigma) - lam * z0 / sigma;
        let h_mm = (dlam - 1.0) / s2;
        let h_ms = -2.0 * d / (s2 * sigma) + (lam + dlam * z0) / s2;
        let h_ss = 1.0 / s2 - 3.0 * q / (s2 * s2) + (dlam * z0 + 2.0 * lam) * z0 / s2;
        ([g_mu, g_s], [[h_mm, h_ms], [h_ms, h_ss]])
    }
}

#[derive(Debug, Clone, Copy)]
struct Bounds {
    lo: [f64; 2],
    hi: [f64; 2],
}

impl Bounds {
    fn project(&self, t: [f64; 2]) -> [f64; 2] {
        [
            t[0].clamp(self.lo[0], self.hi[0]),
            t[1].clamp(self.lo[1], self.hi[1]),
        ]
    }

    /// Whether coordinate `i` sits on a bound with the gradient pushing out.
    fn blocked(&self, t: [f64; 2], g: [f64; 2], i: usize) -> bool {
        (t[i] <= self.lo[i] && g[i] < 0.0) || (t[i] >= self.hi[i] && g[i] > 0.0)
    }

    fn on_boundary(&self, t: [f64; 2]) -> bool {
        (0..2).any(|i| t[i] <= self.lo[i] || t[i] >= self.hi[i])
    }
}

#[derive(Debug, Clone, Copy)]
struct Local {
    theta: [f64; 2],
    value: f64,
    iterations: usize,
    converged: bool,
}

fn scaled_norm(t: [f64; 2], g: [f64; 2]) -> f64 {
    (0..2)
        .map(|i| g[i].abs() * t[i].abs().max(1.0))
        .fold(0.0, f64::max)
}

/// Projected Newton ascent with backtracking; falls back to a diagonally
/// scaled gradient step where the Hessian is not negative definite.
fn ascend(stats: &Stats, bounds: &Bounds, start: [f64; 2], cfg: &LntConfig) -> Local {
    let mut t = bounds.project(start);
    let mut f = stats.value(t[0], t[1]);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_iter {
        let (mut g, h) = stats.derivatives(t[0], t[1]);
        let free = [!bounds.blocked(t, g, 0), !bounds.blocked(t, g, 1)];
        for i in 0..2 {
            if !free[i] {
                g[i] = 0.0;
            }
        }
        if scaled_norm(t, g) < cfg.grad_tol {
            converged = true;
            break;
        }
        iterations += 1;
        let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
        let mut d = match free {
            [true, true] if h[0][0] < 0.0 && det > 0.0 => [
                -(h[1][1] * g[0] - h[0][1] * g[1]) / det,
                -(-h[1][0] * g[0] + h[0][0] * g[1]) / det,
            ],
            _ => [0.0, 0.0],
        };
        if d[0] * g[0] + d[1] * g[1] <= 0.0 {
            for i in 0..2 {
                d[i] = if h[i][i] < 0.0 {
                    -g[i] / h[i][i]
                } else {
                    g[i] * t[i].abs().max(1.0)
                };
            }
        }
        let mut step = 1.0;
        let mut moved = false;
        for _ in 0..60 {
            let cand = bounds.project([t[0] + step * d[0], t[1] + step * d[1]]);
            let fc = stats.value(cand[0], cand[1]);
            let gain = g[0] * (cand[0] - t[0]) + g[1] * (cand[1] - t[1]);
            if fc.is_finite() && fc >= f + 1e-4 * gain && cand != t {
                moved = true;
                t = cand;
                f = fc;
                break;
            }
            step *= 0.5;
        }
        if !moved {
            // no ascent possible at floating-point resolution
            converged = scaled_norm(t, g) < 1e3 * cfg.grad_tol;
            break;
        }
    }
    Local {
        theta: t,
        value: f,
        iterations,
        converged,
    }
}

/// Truncated lognormal on `[x_min, ∞)` by multi-start 2-D ML.
pub fn fit_trunc_lognormal(
    sample: &Sample,
    x_min: f64,
    config: &FitConfig,
) -> Result<FitResult, FitError> {
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
    if n < 3 {
        return Err(FitError::InsufficientSample { needed: 3, got: n });
    }
    let (mean, sd) = sample.log_moments();
    if sd <= 0.0 {
        return Err(FitError::DegenerateSample("log-variance is zero".into()));
    }
    let cfg = &config.lnt;
    let stats = Stats {
        n: n as f64,
        mean,
        var: sd * sd,
        y_min: x_min.ln(),
    };
    let bounds = Bounds {
        lo: [mean - cfg.mu_below, 1e-3 * sd],
        hi: [mean + cfg.mu_above, cfg.sigma_max],
    };

    let mut starts = Vec::new();
    if let Some((mu, sigma)) = cfg.warm_start {
        starts.push([mu, sigma]);
    }
    let spread = |k: usize, i: usize| {
        if k > 1 {
            i as f64 / (k - 1) as f64
        } else {
            1.0
        }
    };
    for i in 0..cfg.mu_points {
        for j in 0..cfg.sigma_points {
            let mu = mean - 6.0 * sd * (1.0 - spread(cfg.mu_points, i));
            let sigma = sd * (0.5 + 4.5 * spread(cfg.sigma_points, j));
            starts.push([mu, sigma]);
        }
    }
    let locals: Vec<Local> = starts
        .iter()
        .map(|&s| ascend(&stats, &bounds, s, cfg))
        .collect();

    let mut order: Vec<usize> = (0..locals.len()).collect();
    order.sort_by(|&a, &b| locals[b].value.total_cmp(&locals[a].value).then(a.cmp(&b)));
    let best = locals[order[0]];
    let nf = stats.n;
    let ridge_suspected = order[1..].iter().map(|&i| locals[i]).any(|other| {
        let dmu = (other.theta[0] - best.theta[0]).abs();
        dmu > 1.0 && nf * (best.value - other.value) < 0.01
    });

    let jacobian: f64 = sample.logs().iter().sum();
    let log_likelihood = nf * best.value - jacobian;
    let model = DistributionModel::trunc_lognormal(best.theta[0], best.theta[1], x_min)?;
    let boundary = bounds.on_boundary(best.theta);
    let mut diagnostics = Diagnostics {
        iterations: best.iterations,
        converged: best.converged,
        boundary_fit: boundary,
        ridge_suspected,
        ..Diagnostics::default()
    };
    if ridge_suspected {
        diagnostics.warnings.push(
            "likelihood nearly flat along a ridge in (mu, sigma); parameters weakly identified"
                .into(),
        );
    }
    if !best.converged {
        diagnostics
            .warnings
            .push("optimizer stopped before the gradient tolerance".into());
    }
    let fit = finish(
        model,
        log_likelihood,
        sample,
        diagnostics,
        config.std_errors && !boundary,
    );
    if boundary {
        return Err(FitError::NoInteriorOptimum {
            best: Box::new(fit),
        });
    }
    Ok(fit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fitting::log_likelihood;

    fn stats() -> Stats {
        Stats {
            n: 100.0,
            mean: 9.4,
            var: 1.3,
            y_min: 8.3,
        }
    }

    #[test]
    fn analytic_derivatives_match_differences() {
        let s = stats();
        for &(mu, sigma) in &[(7.0, 2.0), (9.0, 0.8), (-20.0, 5.0), (-41.0, 7.6)] {
            let (g, h) = s.derivatives(mu, sigma);
            let e = 1e-5;
            let gm = (s.value(mu + e, sigma) - s.value(mu - e, sigma)) / (2.0 * e);
            let gs = (s.value(mu, sigma + e) - s.value(mu, sigma - e)) / (2.0 * e);
            assert!((g[0] - gm).abs() < 1e-6 * (1.0 + gm.abs()), "{mu} {sigma}");
            assert!((g[1] - gs).abs() < 1e-6 * (1.0 + gs.abs()), "{mu} {sigma}");
            let (gp, _) = s.derivatives(mu + e, sigma);
            let (gn, _) = s.derivatives(mu - e, sigma);
            let (gsp, _) = s.derivatives(mu, sigma + e);
            let (gsn, _) = s.derivatives(mu, sigma - e);
            let hmm = (gp[0] - gn[0]) / (2.0 * e);
            let hms = (gsp[0] - gsn[0]) / (2.0 * e);
            let hss = (gsp[1] - gsn[1]) / (2.0 * e);
            assert!((h[0][0] - hmm).abs() < 1e-5 * (1.0 + hmm.abs()));
            assert!((h[0][1] - hms).abs() < 1e-5 * (1.0 + hms.abs()));
            assert!((h[1][1] - hss).abs() < 1e-5 * (1.0 + hss.abs()));
        }
    }

    #[test]
    fn sufficient_statistics_match_summation() {
        let x_min = 8f64.exp();
        let truth = DistributionModel::trunc_lognormal(7.0, 2.0, x_min).unwrap();
        let s = truth.sample(500, 4);
        let fit = fit_trunc_lognormal(&s, x_min, &FitConfig::default()).unwrap();
        let summed = log_likelihood(&fit.model, &s).unwrap();
        assert!((fit.log_likelihood - summed).abs() < 1e-8 * summed.abs());
    }

    #[test]
    fn recovers_interior_parameters() {
        let x_min = 8f64.exp();
        let truth = DistributionModel::trunc_lognormal(7.0, 2.0, x_min).unwrap();
        let s = truth.sample(10_000, 21);
        let fit = fit_trunc_lognormal(&s, x_min, &FitConfig::default()).unwrap();
        let p = fit.model.parameters();
        assert!((p[0].1 - 7.0).abs() < 0.35, "{p:?}");
        assert!((p[1].1 - 2.0).abs() < 0.1, "{p:?}");
        assert!(fit.diagnostics.converged);
        assert!(fit.diagnostics.gradient_norm < 1e-4);
        assert!(fit.std_errors.is_some());
    }

    #[test]
    fn below_cutoff_rejected() {
        let s = Sample::new(vec![1.0, 5.0, 9.0]).unwrap();
        assert!(matches!(
            fit_trunc_lognormal(&s, 2.0, &FitConfig::default()),
            Err(FitError::Model(ModelError::OutsideSupport { .. }))
        ));
    }

    #[test]
    fn boundary_optimum_carries_best_effort() {
        // strongly Pareto-like data pushes μ towards −∞
        let s = DistributionModel::pareto(1.9, 4000.0)
            .unwrap()
            .sample(5000, 3);
        let narrow = FitConfig {
            lnt: LntConfig {
                mu_below: 5.0,
                ..LntConfig::default()
            },
            ..FitConfig::default()
        };
        match fit_trunc_lognormal(&s, 4000.0, &narrow) {
            Err(e) => {
                let best = e.best_effort().expect("best effort attached");
                assert!(best.diagnostics.boundary_fit);
                assert!(best.log_likelihood.is_finite());
            }
            Ok(fit) => panic!("expected a boundary optimum, got {:?}", fit.model),
        }
    }
}
