//! Size-distribution families and their images under `y = ln x`.
//!
//! Every family is implemented once in log coordinates (where the formulas
//! are simplest and numerically best behaved). Size-space quantities follow
//! from the change of variables `f_size(x) = f_log(ln x) / x`.
//!
//! | size space | log space |
//! |------------|-----------|
//! | STEXP      | ESTEXP    |
//! | LN         | N         |
//! | mLN        | mN        |
//! | Pareto     | EXP       |
//! | LNt        | Nt        |

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sample::Sample;
use crate::special::{
    bisect_increasing, ln_std_normal_pdf, ln_std_normal_sf, std_normal_cdf, std_normal_quantile,
    std_normal_sf,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("parameter {name} = {value} violates {constraint}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        constraint: &'static str,
    },
    #[error("{x} lies outside the support ({support})")]
    OutsideSupport { x: f64, support: String },
    #[error("probability {0} must lie strictly between 0 and 1")]
    InvalidProbability(f64),
    #[error("mixture needs at least two components, got {0}")]
    TooFewComponents(usize),
    #[error("mixture has {components} components but {weights} weights")]
    WeightCount { components: usize, weights: usize },
}

fn check(
    name: &'static str,
    value: f64,
    ok: bool,
    constraint: &'static str,
) -> Result<(), ModelError> {
    if ok && value.is_finite() {
        Ok(())
    } else {
        Err(ModelError::InvalidParameter {
            name,
            value,
            constraint,
        })
    }
}

/// Stretched exponential: `f(x) = (γ/η)(x/η)^(γ−1) exp(−(x/η)^γ)`.
///
/// Fits restrict `γ` to (0, 1); evaluation accepts any `γ > 0` so the
/// exponential boundary `γ = 1` can be inspected.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StexpParams {
    gamma: f64,
    eta: f64,
}

impl StexpParams {
    pub fn new(gamma: f64, eta: f64) -> Result<Self, ModelError> {
        check("gamma", gamma, gamma > 0.0, "gamma > 0")?;
        check("eta", eta, eta > 0.0, "eta > 0")?;
        Ok(Self { gamma, eta })
    }
    pub fn gamma(&self) -> f64 {
        self.gamma
    }
    pub fn eta(&self) -> f64 {
        self.eta
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LognormalParams {
    mu: f64,
    sigma: f64,
}

impl LognormalParams {
    pub fn new(mu: f64, sigma: f64) -> Result<Self, ModelError> {
        check("mu", mu, true, "mu finite")?;
        check("sigma", sigma, sigma > 0.0, "sigma > 0")?;
        Ok(Self { mu, sigma })
    }
    pub fn mu(&self) -> f64 {
        self.mu
    }
    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

/// Finite mixture of lognormals, stored in canonical order (μ descending).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureParams {
    mus: Vec<f64>,
    sigmas: Vec<f64>,
    weights: Vec<f64>,
}

impl MixtureParams {
    /// Components as `(μ_j, σ_j)` and the first `m − 1` weights; the last
    /// weight is `1 − Σ p_j`.
    pub fn new(components: &[(f64, f64)], free_weights: &[f64]) -> Result<Self, ModelError> {
        if free_weights.len() + 1 != components.len() {
            return Err(ModelError::WeightCount {
                components: components.len(),
                weights: free_weights.len(),
            });
        }
        let total: f64 = free_weights.iter().sum();
        let mut weights = free_weights.to_vec();
        weights.push((1.0 - total).max(0.0));
        if total > 1.0 + 1e-12 {
            return Err(ModelError::InvalidParameter {
                name: "weights",
                value: total,
                constraint: "sum of free weights <= 1",
            });
        }
        Self::from_full_weights(components, &weights)
    }

    /// Components with a complete weight vector (renormalized to sum to 1).
    pub fn from_full_weights(
        components: &[(f64, f64)],
        weights: &[f64],
    ) -> Result<Self, ModelError> {
        let m = components.len();
        if m < 2 {
            return Err(ModelError::TooFewComponents(m));
        }
        if weights.len() != m {
            return Err(ModelError::WeightCount {
                components: m,
                weights: weights.len(),
            });
        }
        for &(mu, sigma) in components {
            check("mu", mu, true, "mu finite")?;
            check("sigma", sigma, sigma > 0.0, "sigma > 0")?;
        }
        for &p in weights {
            check("weight", p, p >= 0.0, "weight >= 0")?;
        }
        let total: f64 = weights.iter().sum();
        check("weights", total, total > 0.0, "weights sum > 0")?;

        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| {
            components[b]
                .0
                .total_cmp(&components[a].0)
                .then(components[b].1.total_cmp(&components[a].1))
        });
        Ok(Self {
            mus: order.iter().map(|&j| components[j].0).collect(),
            sigmas: order.iter().map(|&j| components[j].1).collect(),
            weights: order.iter().map(|&j| weights[j] / total).collect(),
        })
    }

    pub fn m(&self) -> usize {
        self.mus.len()
    }
    pub fn mus(&self) -> &[f64] {
        &self.mus
    }
    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }
    /// All `m` weights, summing to 1.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Posterior component probabilities `τ_j(y) = p_j f_N(y; μ_j, σ_j) / f_mN(y)`.
    pub fn responsibilities(&self, y: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.m()];
        self.responsibilities_into(y, &mut out);
        out
    }

    /// Allocation-free form of [`responsibilities`](Self::responsibilities).
    pub fn responsibilities_into(&self, y: f64, out: &mut [f64]) {
        let mut max = f64::NEG_INFINITY;
        for j in 0..self.m() {
            out[j] = self.ln_weighted_component(j, y);
            max = max.max(out[j]);
        }
        let mut total = 0.0;
        for v in out.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in out.iter_mut() {
            *v /= total;
        }
    }

    fn ln_weighted_component(&self, j: usize, y: f64) -> f64 {
        if self.weights[j] == 0.0 {
            return f64::NEG_INFINITY;
        }
        let z = (y - self.mus[j]) / self.sigmas[j];
        self.weights[j].ln() + ln_std_normal_pdf(z) - self.sigmas[j].ln()
    }
}

/// Power law `f(x) = ((α−1)/x_min)(x/x_min)^(−α)` on `x ≥ x_min`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParetoParams {
    alpha: f64,
    x_min: f64,
}

impl ParetoParams {
    pub fn new(alpha: f64, x_min: f64) -> Result<Self, ModelError> {
        check("alpha", alpha, alpha > 1.0, "alpha > 1")?;
        check("x_min", x_min, x_min > 0.0, "x_min > 0")?;
        Ok(Self { alpha, x_min })
    }
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn x_min(&self) -> f64 {
        self.x_min
    }
}

/// Lognormal renormalized to `[x_min, ∞)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncLognormalParams {
    mu: f64,
    sigma: f64,
    x_min: f64,
}

impl TruncLognormalParams {
    pub fn new(mu: f64, sigma: f64, x_min: f64) -> Result<Self, ModelError> {
        check("mu", mu, true, "mu finite")?;
        check("sigma", sigma, sigma > 0.0, "sigma > 0")?;
        check("x_min", x_min, x_min > 0.0, "x_min > 0")?;
        let p = Self { mu, sigma, x_min };
        let ln_mass = p.ln_upper_mass();
        check(
            "x_min",
            x_min,
            ln_mass.is_finite(),
            "positive lognormal mass above x_min",
        )?;
        Ok(p)
    }
    pub fn mu(&self) -> f64 {
        self.mu
    }
    pub fn sigma(&self) -> f64 {
        self.sigma
    }
    pub fn x_min(&self) -> f64 {
        self.x_min
    }
    /// ln(1 − cdf_LN(x_min; μ, σ)), the log normalizer.
    pub fn ln_upper_mass(&self) -> f64 {
        ln_std_normal_sf((self.x_min.ln() - self.mu) / self.sigma)
    }
}

/// The five size-distribution families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    Stexp(StexpParams),
    Lognormal(LognormalParams),
    Mixture(MixtureParams),
    Pareto(ParetoParams),
    TruncLognormal(TruncLognormalParams),
}

/// Coordinate in which a model's density is expressed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Space {
    /// Sizes `x > 0`.
    Size,
    /// Log-sizes `y = ln x`.
    Log,
}

/// A family with parameters together with the coordinate it is read in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionModel {
    #[serde(flatten)]
    family: Family,
    space: Space,
}

impl From<Family> for DistributionModel {
    fn from(family: Family) -> Self {
        Self::size(family)
    }
}

impl DistributionModel {
    pub fn size(family: Family) -> Self {
        Self {
            family,
            space: Space::Size,
        }
    }

    pub fn log(family: Family) -> Self {
        Self {
            family,
            space: Space::Log,
        }
    }

    pub fn stexp(gamma: f64, eta: f64) -> Result<Self, ModelError> {
        Ok(Self::size(Family::Stexp(StexpParams::new(gamma, eta)?)))
    }
    pub fn lognormal(mu: f64, sigma: f64) -> Result<Self, ModelError> {
        Ok(Self::size(Family::Lognormal(LognormalParams::new(
            mu, sigma,
        )?)))
    }
    pub fn mixture(components: &[(f64, f64)], free_weights: &[f64]) -> Result<Self, ModelError> {
        Ok(Self::size(Family::Mixture(MixtureParams::new(
            components,
            free_weights,
        )?)))
    }
    pub fn pareto(alpha: f64, x_min: f64) -> Result<Self, ModelError> {
        Ok(Self::size(Family::Pareto(ParetoParams::new(alpha, x_min)?)))
    }
    pub fn trunc_lognormal(mu: f64, sigma: f64, x_min: f64) -> Result<Self, ModelError> {
        Ok(Self::size(Family::TruncLognormal(
            TruncLognormalParams::new(mu, sigma, x_min)?,
        )))
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn space(&self) -> Space {
        self.space
    }

    /// The log-space image (identity if already in log space).
    pub fn to_log_space(&self) -> Self {
        Self::log(self.family.clone())
    }

    pub fn to_size_space(&self) -> Self {
        Self::size(self.family.clone())
    }

    /// Conventional short name, e.g. `3LN` in size space or `3N` in log space.
    pub fn name(&self) -> String {
        let log = self.space == Space::Log;
        match (&self.family, log) {
            (Family::Stexp(_), false) => "STEXP".into(),
            (Family::Stexp(_), true) => "ESTEXP".into(),
            (Family::Lognormal(_), false) => "LN".into(),
            (Family::Lognormal(_), true) => "N".into(),
            (Family::Mixture(p), false) => format!("{}LN", p.m()),
            (Family::Mixture(p), true) => format!("{}N", p.m()),
            (Family::Pareto(_), false) => "Pareto".into(),
            (Family::Pareto(_), true) => "EXP".into(),
            (Family::TruncLognormal(_), false) => "LNt".into(),
            (Family::TruncLognormal(_), true) => "Nt".into(),
        }
    }

    /// Number of free parameters counted by information criteria.
    /// `x_min` is data-selected and not counted.
    pub fn num_params(&self) -> usize {
        match &self.family {
            Family::Stexp(_) | Family::Lognormal(_) | Family::TruncLognormal(_) => 2,
            Family::Mixture(p) => 3 * p.m() - 1,
            Family::Pareto(_) => 1,
        }
    }

    /// Named parameter values in reporting order.
    pub fn parameters(&self) -> Vec<(String, f64)> {
        match &self.family {
            Family::Stexp(p) => vec![("gamma".into(), p.gamma), ("eta".into(), p.eta)],
            Family::Lognormal(p) => vec![("mu".into(), p.mu), ("sigma".into(), p.sigma)],
            Family::Mixture(p) => {
                let mut out = Vec::with_capacity(3 * p.m() - 1);
                for j in 0..p.m() {
                    out.push((format!("mu{}", j + 1), p.mus[j]));
                    out.push((format!("sigma{}", j + 1), p.sigmas[j]));
                }
                for j in 0..p.m() - 1 {
                    out.push((format!("p{}", j + 1), p.weights[j]));
                }
                out
            }
            Family::Pareto(p) => vec![("alpha".into(), p.alpha)],
            Family::TruncLognormal(p) => vec![("mu".into(), p.mu), ("sigma".into(), p.sigma)],
        }
    }

    /// Rebuilds the model from a parameter vector laid out as in
    /// [`parameters`](Self::parameters); `x_min` and the space are kept.
    pub fn with_parameters(&self, theta: &[f64]) -> Result<Self, ModelError> {
        let expected = self.num_params();
        if theta.len() != expected {
            return Err(ModelError::WeightCount {
                components: expected,
                weights: theta.len(),
            });
        }
        let family = match &self.family {
            Family::Stexp(_) => Family::Stexp(StexpParams::new(theta[0], theta[1])?),
            Family::Lognormal(_) => Family::Lognormal(LognormalParams::new(theta[0], theta[1])?),
            Family::Mixture(p) => {
                let m = p.m();
                let components: Vec<(f64, f64)> =
                    (0..m).map(|j| (theta[2 * j], theta[2 * j + 1])).collect();
                Family::Mixture(MixtureParams::new(&components, &theta[2 * m..])?)
            }
            Family::Pareto(p) => Family::Pareto(ParetoParams::new(theta[0], p.x_min)?),
            Family::TruncLognormal(p) => {
                Family::TruncLognormal(TruncLognormalParams::new(theta[0], theta[1], p.x_min)?)
            }
        };
        Ok(Self {
            family,
            space: self.space,
        })
    }

    /// Lower support bound of the log-space law, if any (`ln x_min`).
    fn log_lower(&self) -> Option<f64> {
        match &self.family {
            Family::Pareto(p) => Some(p.x_min.ln()),
            Family::TruncLognormal(p) => Some(p.x_min.ln()),
            _ => None,
        }
    }

    /// Lower support bound in this model's own coordinate.
    pub fn support_lower(&self) -> Option<f64> {
        match (&self.family, self.space) {
            (Family::Pareto(p), Space::Size) => Some(p.x_min),
            (Family::TruncLognormal(p), Space::Size) => Some(p.x_min),
            _ => self.log_lower(),
        }
    }

    fn support_text(&self) -> String {
        match (self.support_lower(), self.space) {
            (Some(b), Space::Size) => format!("x >= x_min = {b}"),
            (Some(b), Space::Log) => format!("y >= y_min = {b}"),
            (None, Space::Size) => "x > 0".into(),
            (None, Space::Log) => "finite y".into(),
        }
    }

    /// Maps a coordinate in this model's space to a log-size, checking support.
    fn to_log_coord(&self, x: f64) -> Result<f64, ModelError> {
        let outside = || ModelError::OutsideSupport {
            x,
            support: self.support_text(),
        };
        let y = match self.space {
            Space::Size => {
                if !(x > 0.0 && x.is_finite()) {
                    return Err(outside());
                }
                if let Some(b) = self.support_lower() {
                    if x < b {
                        return Err(outside());
                    }
                }
                x.ln()
            }
            Space::Log => {
                if !x.is_finite() {
                    return Err(outside());
                }
                x
            }
        };
        if let Some(lo) = self.log_lower() {
            // closed support; ln x_min itself belongs to it
            if y < lo && self.space == Space::Log {
                return Err(outside());
            }
            return Ok(y.max(lo));
        }
        Ok(y)
    }

    /// Log-density at `x` (a size or a log-size according to [`space`](Self::space)).
    pub fn log_pdf(&self, x: f64) -> Result<f64, ModelError> {
        let y = self.to_log_coord(x)?;
        let ln_f = ln_density_log(&self.family, y);
        Ok(match self.space {
            Space::Log => ln_f,
            Space::Size => match &self.family {
                // exact algebraic form keeps the closed-form likelihood identity tight
                Family::Pareto(p) => {
                    (p.alpha - 1.0).ln() - p.x_min.ln() - p.alpha * (x / p.x_min).ln()
                }
                _ => ln_f - y,
            },
        })
    }

    pub fn pdf(&self, x: f64) -> Result<f64, ModelError> {
        self.log_pdf(x).map(f64::exp)
    }

    /// Distribution function, clamped to 0 below the support.
    pub fn cdf(&self, x: f64) -> f64 {
        match self.clamp_coord(x) {
            Clamped::Below => 0.0,
            Clamped::Above => 1.0,
            Clamped::At(y) => cdf_log(&self.family, y),
        }
    }

    /// Survival function `1 − cdf`, accurate in the upper tail.
    pub fn sf(&self, x: f64) -> f64 {
        match self.clamp_coord(x) {
            Clamped::Below => 1.0,
            Clamped::Above => 0.0,
            Clamped::At(y) => sf_log(&self.family, y),
        }
    }

    fn clamp_coord(&self, x: f64) -> Clamped {
        let y = match self.space {
            Space::Size if x <= 0.0 => return Clamped::Below,
            Space::Size => x.ln(),
            Space::Log => x,
        };
        if y.is_nan() {
            return Clamped::Below;
        }
        if y == f64::INFINITY {
            return Clamped::Above;
        }
        if y == f64::NEG_INFINITY {
            return Clamped::Below;
        }
        match self.log_lower() {
            Some(lo) if y < lo => {
                // size-space rounding of ln(x_min) must not exclude x_min itself
                if self.space == Space::Size && x >= self.support_lower().unwrap_or(0.0) {
                    Clamped::At(lo)
                } else {
                    Clamped::Below
                }
            }
            _ => Clamped::At(y),
        }
    }

    /// Inverse distribution function for `0 < q < 1`.
    pub fn quantile(&self, q: f64) -> Result<f64, ModelError> {
        if !(q > 0.0 && q < 1.0) {
            return Err(ModelError::InvalidProbability(q));
        }
        if let (Family::Pareto(p), Space::Size) = (&self.family, self.space) {
            return Ok(p.x_min * (1.0 - q).powf(1.0 / (1.0 - p.alpha)));
        }
        let y = quantile_log(&self.family, q);
        Ok(match self.space {
            Space::Log => y,
            Space::Size => {
                let x = y.exp();
                self.support_lower().map_or(x, |b| x.max(b))
            }
        })
    }

    /// `n` i.i.d. draws, deterministic in `seed`.
    pub fn sample(&self, n: usize, seed: u64) -> Sample {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample_with(n, &mut rng)
    }

    /// `n` i.i.d. draws from a caller-owned generator.
    pub fn sample_with<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Sample {
        let n = n.max(1);
        let logs: Vec<f64> = (0..n).map(|_| draw_log(&self.family, rng)).collect();
        let out = match self.space {
            Space::Log => Sample::from_logs(logs),
            Space::Size => {
                let lower = self.support_lower().unwrap_or(f64::MIN_POSITIVE);
                Sample::new(
                    logs.into_iter()
                        .map(|y| y.exp().clamp(lower, f64::MAX))
                        .collect(),
                )
            }
        };
        out.expect("draws from a valid model are finite")
    }

    /// The slice of `sample` in this model's coordinate.
    pub fn coords<'a>(&self, sample: &'a Sample) -> &'a [f64] {
        match self.space {
            Space::Size => sample.values(),
            Space::Log => sample.logs(),
        }
    }
}

enum Clamped {
    Below,
    Above,
    At(f64),
}

// ---------------------------------------------------------------------------
// Log-space implementations. `y` is assumed to be inside the support.

fn ln_density_log(family: &Family, y: f64) -> f64 {
    match family {
        Family::Stexp(p) => {
            let t = p.gamma * (y - p.eta.ln());
            p.gamma.ln() + t - t.exp()
        }
        Family::Lognormal(p) => ln_std_normal_pdf((y - p.mu) / p.sigma) - p.sigma.ln(),
        Family::Mixture(p) => {
            // streaming log-sum-exp
            let mut max = f64::NEG_INFINITY;
            let mut acc = 0.0;
            for j in 0..p.m() {
                let t = p.ln_weighted_component(j, y);
                if t == f64::NEG_INFINITY {
                    continue;
                }
                if t > max {
                    acc = acc * (max - t).exp() + 1.0;
                    max = t;
                } else {
                    acc += (t - max).exp();
                }
            }
            max + acc.ln()
        }
        Family::Pareto(p) => {
            let rate = p.alpha - 1.0;
            rate.ln() - rate * (y - p.x_min.ln())
        }
        Family::TruncLognormal(p) => {
            ln_std_normal_pdf((y - p.mu) / p.sigma) - p.sigma.ln() - p.ln_upper_mass()
        }
    }
}

fn cdf_log(family: &Family, y: f64) -> f64 {
    match family {
        Family::Stexp(p) => -(-(p.gamma * (y - p.eta.ln())).exp()).exp_m1(),
        Family::Lognormal(p) => std_normal_cdf((y - p.mu) / p.sigma),
        Family::Mixture(p) => (0..p.m())
            .map(|j| p.weights[j] * std_normal_cdf((y - p.mus[j]) / p.sigmas[j]))
            .sum::<f64>()
            .min(1.0),
        Family::Pareto(p) => -(-(p.alpha - 1.0) * (y - p.x_min.ln())).exp_m1(),
        Family::TruncLognormal(p) => {
            let z = (y - p.mu) / p.sigma;
            let z0 = (p.x_min.ln() - p.mu) / p.sigma;
            if z <= 0.0 {
                ((std_normal_cdf(z) - std_normal_cdf(z0)) / std_normal_sf(z0)).max(0.0)
            } else {
                -(ln_std_normal_sf(z) - ln_std_normal_sf(z0)).exp_m1()
            }
        }
    }
}

fn sf_log(family: &Family, y: f64) -> f64 {
    match family {
        Family::Stexp(p) => (-(p.gamma * (y - p.eta.ln())).exp()).exp(),
        Family::Lognormal(p) => std_normal_sf((y - p.mu) / p.sigma),
        Family::Mixture(p) => (0..p.m())
            .map(|j| p.weights[j] * std_normal_sf((y - p.mus[j]) / p.sigmas[j]))
            .sum::<f64>()
            .min(1.0),
        Family::Pareto(p) => (-(p.alpha - 1.0) * (y - p.x_min.ln())).exp(),
        Family::TruncLognormal(p) => {
            let z = (y - p.mu) / p.sigma;
            (ln_std_normal_sf(z) - p.ln_upper_mass()).exp().min(1.0)
        }
    }
}

fn quantile_log(family: &Family, q: f64) -> f64 {
    match family {
        Family::Stexp(p) => p.eta.ln() + (-(-q).ln_1p()).ln() / p.gamma,
        Family::Lognormal(p) => p.mu + p.sigma * std_normal_quantile(q),
        Family::Mixture(p) => {
            // the mixture quantile lies between the extreme component quantiles
            let z = std_normal_quantile(q);
            let (lo, hi) = (0..p.m())
                .filter(|&j| p.weights[j] > 0.0)
                .map(|j| p.mus[j] + p.sigmas[j] * z)
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                    (lo.min(v), hi.max(v))
                });
            if lo == hi {
                return lo;
            }
            bisect_increasing(|y| cdf_log(family, y) - q, lo, hi)
        }
        Family::Pareto(p) => p.x_min.ln() - (-q).ln_1p() / (p.alpha - 1.0),
        Family::TruncLognormal(p) => {
            let lo = p.x_min.ln();
            let mut step = p.sigma.min(1.0);
            let mut hi = lo + step;
            while cdf_log(family, hi) < q {
                step *= 2.0;
                hi = lo + step;
            }
            bisect_increasing(|y| cdf_log(family, y) - q, lo, hi)
        }
    }
}

fn draw_log<R: Rng + ?Sized>(family: &Family, rng: &mut R) -> f64 {
    match family {
        Family::Lognormal(p) => {
            let z: f64 = rng.sample(StandardNormal);
            p.mu + p.sigma * z
        }
        Family::Mixture(p) => {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut j = p.m() - 1;
            for (k, w) in p.weights.iter().enumerate() {
                acc += w;
                if u < acc {
                    j = k;
                    break;
                }
            }
            let z: f64 = rng.sample(StandardNormal);
            p.mus[j] + p.sigmas[j] * z
        }
        Family::Pareto(p) => {
            let e: f64 = rng.sample(Exp1);
            p.x_min.ln() + e / (p.alpha - 1.0)
        }
        Family::Stexp(_) | Family::TruncLognormal(_) => {
            // inverse transform; reject the measure-zero endpoint
            let u: f64 = loop {
                let u: f64 = rng.random();
                if u > 0.0 {
                    break u;
                }
            };
            quantile_log(family, u)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{E, PI};

    fn approx(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs().max(1e-300)
    }

    #[test]
    fn pareto_density_at_bound() {
        let m = DistributionModel::pareto(2.0, 1.0).unwrap();
        assert_eq!(m.pdf(1.0).unwrap(), 1.0);
        assert!(matches!(m.pdf(0.5), Err(ModelError::OutsideSupport { .. })));
    }

    #[test]
    fn lognormal_density_at_median() {
        let (mu, sigma) = (1.3, 0.7);
        let m = DistributionModel::lognormal(mu, sigma).unwrap();
        let expected = 1.0 / ((2.0 * PI).sqrt() * sigma * mu.exp());
        assert!(approx(m.pdf(mu.exp()).unwrap(), expected, 1e-14));
        assert!(approx(m.cdf(mu.exp()), 0.5, 1e-14));
    }

    #[test]
    fn stexp_gamma_one_is_exponential() {
        let eta = 3.0;
        let m = DistributionModel::stexp(1.0, eta).unwrap();
        for &x in &[0.1, 1.0, 5.0, 20.0] {
            let expected = (-x / eta).exp() / eta;
            assert!(approx(m.pdf(x).unwrap(), expected, 1e-13));
        }
    }

    #[test]
    fn pareto_log_pdf_identity_and_cdf() {
        let (alpha, x_min) = (2.3, 4.0);
        let m = DistributionModel::pareto(alpha, x_min).unwrap();
        for &x in &[4.0, 5.5, 100.0, 1e6] {
            let lp = (alpha - 1.0f64).ln() - x_min.ln() - alpha * (x / x_min).ln();
            assert!(approx(m.log_pdf(x).unwrap(), lp, 1e-14));
            let cdf = 1.0 - (x / x_min).powf(1.0 - alpha);
            assert!((m.cdf(x) - cdf).abs() < 1e-14);
        }
        assert_eq!(m.cdf(3.0), 0.0);
    }

    #[test]
    fn pareto_median() {
        let m = DistributionModel::pareto(2.0, 1.0).unwrap();
        assert!(approx(m.quantile(0.5).unwrap(), 2.0, 1e-15));
        assert!(m.quantile(0.0).is_err());
        assert!(m.quantile(1.0).is_err());
        assert!(m.quantile(f64::NAN).is_err());
    }

    #[test]
    fn trunc_lognormal_cdf_limits() {
        let m = DistributionModel::trunc_lognormal(7.0, 2.0, 8f64.exp()).unwrap();
        assert_eq!(m.cdf(8f64.exp()), 0.0);
        assert!(m.cdf(1e300) > 1.0 - 1e-12);
        assert_eq!(m.cdf(1.0), 0.0);
    }

    #[test]
    fn degenerate_mixture_quantile_matches_component() {
        let mix = DistributionModel::mixture(&[(3.0, 1.5), (1.0, 0.5)], &[1.0]).unwrap();
        let ln = DistributionModel::lognormal(3.0, 1.5).unwrap();
        for &q in &[0.01, 0.2, 0.5, 0.93] {
            let a = mix.quantile(q).unwrap();
            let b = ln.quantile(q).unwrap();
            assert!(approx(a, b, 1e-12), "q={q}: {a} vs {b}");
        }
    }

    #[test]
    fn mixture_is_canonicalized() {
        let p = MixtureParams::new(&[(1.0, 1.0), (5.0, 2.0), (3.0, 0.5)], &[0.2, 0.3]).unwrap();
        assert_eq!(p.mus(), &[5.0, 3.0, 1.0]);
        assert_eq!(p.sigmas(), &[2.0, 0.5, 1.0]);
        assert!(approx(p.weights()[0], 0.3, 1e-15));
        assert!(approx(p.weights()[1], 0.5, 1e-15));
        assert!(approx(p.weights()[2], 0.2, 1e-15));
    }

    #[test]
    fn mixture_validation() {
        assert!(MixtureParams::new(&[(1.0, 1.0)], &[]).is_err());
        assert!(MixtureParams::new(&[(1.0, 1.0), (2.0, 0.0)], &[0.5]).is_err());
        assert!(MixtureParams::new(&[(1.0, 1.0), (2.0, 1.0)], &[1.2]).is_err());
        assert!(MixtureParams::new(&[(1.0, 1.0), (2.0, 1.0)], &[-0.1]).is_err());
        assert!(MixtureParams::new(&[(1.0, 1.0), (2.0, 1.0)], &[0.1, 0.2]).is_err());
    }

    #[test]
    fn responsibilities_degenerate_and_symmetric() {
        let p = MixtureParams::new(&[(2.0, 1.0), (-2.0, 1.0)], &[1.0]).unwrap();
        assert_eq!(p.responsibilities(0.3), vec![1.0, 0.0]);
        let sym = MixtureParams::new(&[(1.5, 0.8), (-1.5, 0.8)], &[0.5]).unwrap();
        let tau = sym.responsibilities(0.0);
        assert!((tau[0] - 0.5).abs() < 1e-15 && (tau[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn responsibilities_france_three_component() {
        // mu_2 = 6.640 is the central component at its own mean
        let p = MixtureParams::new(
            &[(8.510, 2.174), (6.640, 1.662), (4.804, 1.335)],
            &[0.081, 0.523],
        )
        .unwrap();
        let tau = p.responsibilities(6.640);
        // direct evaluation of the three weighted normal densities
        let phi = |y: f64, m: f64, s: f64| (-(y - m).powi(2) / (2.0 * s * s)).exp() / s;
        let w = [
            0.081 * phi(6.64, 8.510, 2.174),
            0.523 * phi(6.64, 6.640, 1.662),
            0.396 * phi(6.64, 4.804, 1.335),
        ];
        let total: f64 = w.iter().sum();
        for j in 0..3 {
            assert!((tau[j] - w[j] / total).abs() < 1e-14);
        }
        assert!(tau[1] > tau[0] && tau[1] > tau[2]);
    }

    #[test]
    fn log_space_images() {
        let pareto = DistributionModel::pareto(2.5, 10.0).unwrap().to_log_space();
        assert_eq!(pareto.name(), "EXP");
        assert_eq!(pareto.support_lower(), Some(10f64.ln()));
        let y0 = 10f64.ln();
        // EXP(rate α−1, origin ln x_min)
        assert!(approx(
            pareto.pdf(y0 + 1.0).unwrap(),
            1.5 * (-1.5f64).exp(),
            1e-14
        ));

        let (gamma, eta) = (0.45, 2000.0);
        let estexp = DistributionModel::stexp(gamma, eta).unwrap().to_log_space();
        assert_eq!(estexp.name(), "ESTEXP");
        assert!(approx(estexp.pdf(eta.ln()).unwrap(), gamma / E, 1e-14));
        assert!(estexp.pdf(f64::NAN).is_err());
    }

    #[test]
    fn names_and_param_counts() {
        let m =
            DistributionModel::mixture(&[(3.0, 1.0), (1.0, 1.0), (0.0, 1.0)], &[0.3, 0.3]).unwrap();
        assert_eq!(m.name(), "3LN");
        assert_eq!(m.num_params(), 8);
        assert_eq!(m.to_log_space().name(), "3N");
        assert_eq!(DistributionModel::pareto(2.0, 1.0).unwrap().num_params(), 1);
        assert_eq!(
            DistributionModel::trunc_lognormal(1.0, 1.0, 1.0)
                .unwrap()
                .num_params(),
            2
        );
    }

    #[test]
    fn parameter_vector_round_trip() {
        let m =
            DistributionModel::mixture(&[(3.0, 1.0), (1.0, 0.5), (0.0, 2.0)], &[0.3, 0.3]).unwrap();
        let theta: Vec<f64> = m.parameters().into_iter().map(|(_, v)| v).collect();
        assert_eq!(m.with_parameters(&theta).unwrap(), m);
        let t = DistributionModel::trunc_lognormal(1.0, 2.0, 5.0).unwrap();
        let moved = t.with_parameters(&[1.5, 2.5]).unwrap();
        assert_eq!(moved.support_lower(), Some(5.0));
        assert!(t.with_parameters(&[1.0]).is_err());
        assert!(DistributionModel::pareto(2.0, 1.0)
            .unwrap()
            .with_parameters(&[0.5])
            .is_err());
    }

    #[test]
    fn sampling_is_deterministic() {
        let m = DistributionModel::trunc_lognormal(7.0, 2.0, 8f64.exp()).unwrap();
        assert_eq!(m.sample(100, 42), m.sample(100, 42));
        assert_ne!(m.sample(100, 42), m.sample(100, 43));
        assert!(m.sample(100, 1).min() >= 8f64.exp());
    }

    #[test]
    fn ridge_trunc_lognormal_rejects_empty_tail() {
        // no representable mass above x_min
        assert!(TruncLognormalParams::new(0.0, 1e-3, 1e300).is_ok());
        assert!(TruncLognormalParams::new(0.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn far_left_truncated_lognormal_approaches_pareto() {
        // the gap is 0.0274 at these rounded parameters
        let (x_min, alpha) = (4000.0, 1.885);
        let lnt = DistributionModel::trunc_lognormal(-41.0, 7.63, x_min).unwrap();
        let pareto = DistributionModel::pareto(alpha, x_min).unwrap();
        let gap = (0..=2000)
            .map(|i| x_min * 100f64.powf(i as f64 / 2000.0))
            .map(|x| (lnt.log_pdf(x).unwrap() - pareto.log_pdf(x).unwrap()).abs())
            .fold(0.0, f64::max);
        assert!(gap < 0.03, "{gap}");
        // a narrow lognormal is far from any power law here
        let curved = DistributionModel::trunc_lognormal(7.0, 1.0, x_min).unwrap();
        let far =
            (curved.log_pdf(100.0 * x_min).unwrap() - pareto.log_pdf(100.0 * x_min).unwrap()).abs();
        assert!(far > 1.0, "{far}");
    }
}
