use super::{finish, Diagnostics, FitConfig, FitError, FitResult};
use crate::model::DistributionModel;
use crate::sample::Sample;
use crate::special::log_sum_exp;

const GAMMA_MAX: f64 = 1.0;
const GAMMA_FLOOR: f64 = 1e-8;
const GOLDEN_TOL: f64 = 1e-8;

struct Profile<'a> {
    logs: &'a [f64],
    n: f64,
    sum_logs: f64,
    scratch: Vec<f64>,
}

impl<'a> Profile<'a> {
    fn new(logs: &'a [f64]) -> Self {
        Self {
            logs,
            n: logs.len() as f64,
            sum_logs: logs.iter().sum(),
            scratch: vec![0.0; logs.len()],
        }
    }

    /// `ln Σ x^γ`.
    fn lse(&mut self, gamma: f64) -> f64 {
        for (s, &y) in self.scratch.iter_mut().zip(self.logs) {
            *s = gamma * y;
        }
        log_sum_exp(&self.scratch)
    }

    /// Profile log-likelihood and `ln η̂(γ)`.
    fn value(&mut self, gamma: f64) -> (f64, f64) {
        let lse = self.lse(gamma);
        let n = self.n;
        let ln_mean_pow = lse - n.ln();
        let ll = n * gamma.ln() - n * ln_mean_pow + (gamma - 1.0) * self.sum_logs - n;
        (ll, ln_mean_pow / gamma)
    }

    /// First and second derivatives of the profile in γ.
    fn derivatives(&mut self, gamma: f64) -> (f64, f64) {
        let lse = self.lse(gamma);
        let mut mean = 0.0;
        let mut second = 0.0;
        for (s, &y) in self.scratch.iter().zip(self.logs) {
            let w = (s - lse).exp();
            mean += w * y;
            second += w * y * y;
        }
        let var = (second - mean * mean).max(0.0);
        let n = self.n;
        (
            n / gamma - n * mean + self.sum_logs,
            -n / (gamma * gamma) - n * var,
        )
    }
}

/// Profile log-likelihood of the stretched exponential at shape `gamma`,
/// returned with the profiled scale `η̂(γ) = (mean x^γ)^{1/γ}`.
pub fn stexp_profile(sample: &Sample, gamma: f64) -> (f64, f64) {
    let (ll, ln_eta) = Profile::new(sample.logs()).value(gamma);
    (ll, ln_eta.exp())
}

/// Stretched-exponential ML via the one-dimensional profile in γ ∈ (0, 1].
pub fn fit_stexp(sample: &Sample, config: &FitConfig) -> Result<FitResult, FitError> {
    let n = sample.len();
    if n < 2 {
        return Err(FitError::InsufficientSample { needed: 2, got: n });
    }
    if sample.min() == sample.max() {
        return Err(FitError::DegenerateSample("all values are equal".into()));
    }
    let mut profile = Profile::new(sample.logs());
    let mut diagnostics = Diagnostics::default();

    let (d_hi, _) = profile.derivatives(GAMMA_MAX);
    let gamma = if d_hi >= 0.0 {
        diagnostics.boundary_fit = true;
        diagnostics
            .warnings
            .push("profile still rising at gamma = 1; shape pinned to the boundary".into());
        GAMMA_MAX
    } else {
        let mut lo = 0.5;
        while profile.derivatives(lo).0 <= 0.0 {
            lo *= 0.5;
            if lo < GAMMA_FLOOR {
                break;
            }
        }
        if lo < GAMMA_FLOOR {
            diagnostics.boundary_fit = true;
            diagnostics
                .warnings
                .push("profile maximum approaches gamma = 0".into());
            GAMMA_FLOOR
        } else {
            let (g, iters) = golden_max(|g| profile.value(g).0, lo, (2.0 * lo).min(GAMMA_MAX));
            diagnostics.iterations = iters;
            polish(&mut profile, g, lo, (2.0 * lo).min(GAMMA_MAX))
        }
    };

    let (ll, ln_eta) = profile.value(gamma);
    diagnostics.converged = !diagnostics.boundary_fit;
    let model = DistributionModel::stexp(gamma, ln_eta.exp())?;
    Ok(finish(model, ll, sample, diagnostics, config.std_errors))
}

/// Golden-section search for the maximum of a unimodal function.
fn golden_max<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64) -> (f64, usize) {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    let mut iters = 0;
    while b - a > GOLDEN_TOL {
        iters += 1;
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    (0.5 * (a + b), iters)
}

/// Newton steps on the profile score, kept inside the bracket.
fn polish(profile: &mut Profile, mut g: f64, lo: f64, hi: f64) -> f64 {
    for _ in 0..4 {
        let (d1, d2) = profile.derivatives(g);
        let next = g - d1 / d2;
        if !(next > lo && next < hi) || (next - g).abs() > 10.0 * GOLDEN_TOL {
            break;
        }
        let done = (next - g).abs() < 1e-15 * g;
        g = next;
        if done {
            break;
        }
    }
    g
}
