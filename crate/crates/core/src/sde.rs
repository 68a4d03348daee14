//! Itô diffusions `dy = b(y) dt + √a dB` whose stationary laws are the
//! log-space images of the size families, simulated by Euler–Maruyama.
//!
//! For constant `a` the stationary density `f` satisfies `2b/a = (ln f)'`,
//! which is what [`score_identity_check`] verifies and what every drift in
//! the catalog is built from.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gof::ks_stat;
use crate::model::{
    DistributionModel, Family, LognormalParams, MixtureParams, ModelError, ParetoParams,
    StexpParams, TruncLognormalParams,
};
use crate::sample::Sample;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SdeError {
    #[error("diffusion coefficient must be positive, got {0}")]
    Diffusion(f64),
    #[error("invalid simulation settings: {0}")]
    Config(String),
    #[error("start point {y0} lies outside the domain [{y_min}, inf)")]
    StartOutsideDomain { y0: f64, y_min: f64 },
    #[error("drift step {step:.3e} at y = {y:.6} exceeds 10; use a smaller dt")]
    StepTooLarge { y: f64, step: f64 },
    #[error("mixture drift needs {expected} components, got {got}")]
    ComponentCount { expected: usize, got: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Drift catalog. Each entry is the drift whose stationary law (for any
/// constant diffusion) is the named log-space distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Drift {
    Estexp { gamma: f64, eta: f64 },
    Normal { mu: f64, sigma: f64 },
    Exponential { alpha: f64, y_min: f64 },
    TruncNormal { mu: f64, sigma: f64, y_min: f64 },
    Mix2N(MixtureParams),
    Mix3N(MixtureParams),
}

impl Drift {
    pub fn name(&self) -> &'static str {
        match self {
            Drift::Estexp { .. } => "ESTEXP",
            Drift::Normal { .. } => "N",
            Drift::Exponential { .. } => "EXP",
            Drift::TruncNormal { .. } => "Nt",
            Drift::Mix2N(_) => "2N",
            Drift::Mix3N(_) => "3N",
        }
    }
}

/// Parses `kind:key=value,...`, for example `normal:mu=0,sigma=1`,
/// `exp:alpha=1.9,y_min=6`, `estexp:gamma=0.3,eta=500` or
/// `mix2n:mu1=7.4,sigma1=2,mu2=5,sigma2=1.4,p1=0.7`. Mixtures take
/// `mu<j>`, `sigma<j>` and the first m − 1 weights `p<j>`.
impl std::str::FromStr for Drift {
    type Err = SdeError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let bad = |msg: String| SdeError::Config(msg);
        let (kind, rest) = text.split_once(':').unwrap_or((text, ""));
        let mut params = std::collections::BTreeMap::new();
        for pair in rest.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = pair
                .split_once('=')
                .ok_or_else(|| bad(format!("expected key=value, got {pair:?}")))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| bad(format!("{k}: {v:?} is not a number")))?;
            params.insert(k.trim().to_ascii_lowercase(), v);
        }
        let mut take = |k: &str| {
            params
                .remove(k)
                .ok_or_else(|| bad(format!("drift {kind:?} needs parameter {k}")))
        };
        let mut mixture = |m: usize| -> Result<MixtureParams, SdeError> {
            let mut comps = Vec::with_capacity(m);
            for j in 1..=m {
                comps.push((take(&format!("mu{j}"))?, take(&format!("sigma{j}"))?));
            }
            let weights = (1..m)
                .map(|j| take(&format!("p{j}")))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(MixtureParams::new(&comps, &weights)?)
        };
        let drift = match kind.trim().to_ascii_lowercase().as_str() {
            "estexp" => Drift::Estexp {
                gamma: take("gamma")?,
                eta: take("eta")?,
            },
            "normal" | "n" => Drift::Normal {
                mu: take("mu")?,
                sigma: take("sigma")?,
            },
            "exp" | "exponential" => Drift::Exponential {
                alpha: take("alpha")?,
                y_min: take("y_min")?,
            },
            "truncnormal" | "nt" => Drift::TruncNormal {
                mu: take("mu")?,
                sigma: take("sigma")?,
                y_min: take("y_min")?,
            },
            "mix2n" | "2n" => Drift::Mix2N(mixture(2)?),
            "mix3n" | "3n" => Drift::Mix3N(mixture(3)?),
            other => {
                return Err(bad(format!(
                    "unknown drift {other:?}; expected estexp, normal, exp, truncnormal, mix2n or mix3n"
                )))
            }
        };
        if let Some(k) = params.keys().next() {
            return Err(bad(format!("unexpected parameter {k} for drift {kind:?}")));
        }
        Ok(drift)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Boundary {
    None,
    Reflecting { y_min: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdeSpec {
    drift: Drift,
    diffusion_sq: f64,
}

impl SdeSpec {
    /// Validates the drift parameters against the model invariants.
    pub fn new(drift: Drift, diffusion_sq: f64) -> Result<Self, SdeError> {
        if !(diffusion_sq > 0.0 && diffusion_sq.is_finite()) {
            return Err(SdeError::Diffusion(diffusion_sq));
        }
        match &drift {
            Drift::Estexp { gamma, eta } => {
                StexpParams::new(*gamma, *eta)?;
            }
            Drift::Normal { mu, sigma } => {
                LognormalParams::new(*mu, *sigma)?;
            }
            Drift::Exponential { alpha, y_min } => {
                ParetoParams::new(*alpha, y_min.exp())?;
            }
            Drift::TruncNormal { mu, sigma, y_min } => {
                TruncLognormalParams::new(*mu, *sigma, y_min.exp())?;
            }
            Drift::Mix2N(p) if p.m() != 2 => {
                return Err(SdeError::ComponentCount {
                    expected: 2,
                    got: p.m(),
                })
            }
            Drift::Mix3N(p) if p.m() != 3 => {
                return Err(SdeError::ComponentCount {
                    expected: 3,
                    got: p.m(),
                })
            }
            _ => {}
        }
        Ok(Self {
            drift,
            diffusion_sq,
        })
    }

    /// The diffusion whose stationary law is `model` read in log space.
    pub fn for_target(model: &DistributionModel, diffusion_sq: f64) -> Result<Self, SdeError> {
        let drift = match model.family() {
            Family::Stexp(p) => Drift::Estexp {
                gamma: p.gamma(),
                eta: p.eta(),
            },
            Family::Lognormal(p) => Drift::Normal {
                mu: p.mu(),
                sigma: p.sigma(),
            },
            Family::Pareto(p) => Drift::Exponential {
                alpha: p.alpha(),
                y_min: p.x_min().ln(),
            },
            Family::TruncLognormal(p) => Drift::TruncNormal {
                mu: p.mu(),
                sigma: p.sigma(),
                y_min: p.x_min().ln(),
            },
            Family::Mixture(p) if p.m() == 2 => Drift::Mix2N(p.clone()),
            Family::Mixture(p) if p.m() == 3 => Drift::Mix3N(p.clone()),
            Family::Mixture(p) => {
                return Err(SdeError::ComponentCount {
                    expected: 3,
                    got: p.m(),
                })
            }
        };
        Self::new(drift, diffusion_sq)
    }

    pub fn drift_kind(&self) -> &Drift {
        &self.drift
    }

    pub fn diffusion_sq(&self) -> f64 {
        self.diffusion_sq
    }

    /// Reflecting at `y_min` exactly when the domain is a half-line.
    pub fn boundary(&self) -> Boundary {
        match self.drift {
            Drift::Exponential { y_min, .. } | Drift::TruncNormal { y_min, .. } => {
                Boundary::Reflecting { y_min }
            }
            _ => Boundary::None,
        }
    }

    /// `b(y)`.
    pub fn drift(&self, y: f64) -> f64 {
        let a = self.diffusion_sq;
        match &self.drift {
            Drift::Estexp { gamma, eta } => -0.5 * gamma * a * (gamma * (y - eta.ln())).exp_m1(),
            Drift::Normal { mu, sigma } | Drift::TruncNormal { mu, sigma, .. } => {
                -a / (2.0 * sigma * sigma) * (y - mu)
            }
            Drift::Exponential { alpha, .. } => -0.5 * (alpha - 1.0) * a,
            Drift::Mix2N(p) => mixture_drift::<2>(p, a, y),
            Drift::Mix3N(p) => mixture_drift::<3>(p, a, y),
        }
    }

    /// The log-space model the diffusion is stationary for.
    pub fn target_log_model(&self) -> DistributionModel {
        let family = match &self.drift {
            Drift::Estexp { gamma, eta } => {
                Family::Stexp(StexpParams::new(*gamma, *eta).expect("validated"))
            }
            Drift::Normal { mu, sigma } => {
                Family::Lognormal(LognormalParams::new(*mu, *sigma).expect("validated"))
            }
            Drift::Exponential { alpha, y_min } => {
                Family::Pareto(ParetoParams::new(*alpha, y_min.exp()).expect("validated"))
            }
            Drift::TruncNormal { mu, sigma, y_min } => Family::TruncLognormal(
                TruncLognormalParams::new(*mu, *sigma, y_min.exp()).expect("validated"),
            ),
            Drift::Mix2N(p) | Drift::Mix3N(p) => Family::Mixture(p.clone()),
        };
        DistributionModel::log(family)
    }
}

fn mixture_drift<const M: usize>(p: &MixtureParams, a: f64, y: f64) -> f64 {
    let mut tau = [0.0; M];
    p.responsibilities_into(y, &mut tau);
    let mut b = 0.0;
    for j in 0..M {
        let s = p.sigmas()[j];
        b -= a / (2.0 * s * s) * tau[j] * (y - p.mus()[j]);
    }
    b
}

/// `max |2b(y)/a − (ln f)'(y)|` over the grid, with the score of the target
/// taken by Richardson-extrapolated central differences. Grid points need
/// at least 1e−3 of clearance from a lower support bound.
pub fn score_identity_check(
    spec: &SdeSpec,
    target: &DistributionModel,
    grid: &[f64],
) -> Result<f64, ModelError> {
    let h = 1e-3;
    let central = |y: f64, h: f64| -> Result<f64, ModelError> {
        Ok((target.log_pdf(y + h)? - target.log_pdf(y - h)?) / (2.0 * h))
    };
    let mut worst: f64 = 0.0;
    for &y in grid {
        let score = (4.0 * central(y, h / 2.0)? - central(y, h)?) / 3.0;
        let lhs = 2.0 * spec.drift(y) / spec.diffusion_sq;
        worst = worst.max((lhs - score).abs());
    }
    Ok(worst)
}

/// `points` equally spaced log-sizes between the target's `q` and `1 − q`
/// quantiles, kept clear of a lower bound.
pub fn default_grid(spec: &SdeSpec, points: usize, q: f64) -> Vec<f64> {
    let target = spec.target_log_model();
    let mut lo = target.quantile(q).unwrap_or(-10.0);
    let hi = target.quantile(1.0 - q).unwrap_or(10.0);
    if let Boundary::Reflecting { y_min } = spec.boundary() {
        lo = lo.max(y_min + 2e-3);
    }
    let k = points.max(2) - 1;
    (0..=k)
        .map(|i| lo + (hi - lo) * i as f64 / k as f64)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt: f64,
    pub n_steps: usize,
    pub burn_in: usize,
    pub thin: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 0.01,
            n_steps: 20_000_000,
            burn_in: 200_000,
            thin: 200,
        }
    }
}

impl SimConfig {
    pub fn retained(&self) -> usize {
        if self.thin == 0 || self.n_steps <= self.burn_in {
            0
        } else {
            (self.n_steps - self.burn_in) / self.thin
        }
    }
}

/// Euler–Maruyama chain. Returns every `thin`-th state after `burn_in`, in
/// time order.
pub fn simulate(
    spec: &SdeSpec,
    y0: f64,
    config: &SimConfig,
    seed: u64,
) -> Result<Vec<f64>, SdeError> {
    if !(config.dt > 0.0 && config.dt.is_finite()) {
        return Err(SdeError::Config(format!(
            "dt must be positive, got {}",
            config.dt
        )));
    }
    if config.n_steps <= config.burn_in {
        return Err(SdeError::Config("n_steps must exceed burn_in".into()));
    }
    if config.thin == 0 {
        return Err(SdeError::Config("thin must be at least 1".into()));
    }
    if !y0.is_finite() {
        return Err(SdeError::Config(format!("start point {y0} is not finite")));
    }
    let boundary = spec.boundary();
    if let Boundary::Reflecting { y_min } = boundary {
        if y0 < y_min {
            return Err(SdeError::StartOutsideDomain { y0, y_min });
        }
    }
    let dt = config.dt;
    let noise = (spec.diffusion_sq * dt).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(config.retained());
    let mut y = y0;
    for step in 1..=config.n_steps {
        let drift_step = spec.drift(y) * dt;
        if !(drift_step.abs() <= 10.0) {
            return Err(SdeError::StepTooLarge {
                y,
                step: drift_step,
            });
        }
        let z: f64 = StandardNormal.sample(&mut rng);
        y += drift_step + noise * z;
        if let Boundary::Reflecting { y_min } = boundary {
            if y < y_min {
                y = 2.0 * y_min - y;
            }
        }
        if step > config.burn_in && (step - config.burn_in) % config.thin == 0 {
            out.push(y);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryCheck {
    pub ks_distance: f64,
    pub retained: usize,
    pub threshold: f64,
    pub pass: bool,
}

/// Simulates from the target's median and compares the retained draws with
/// the target CDF by the KS distance.
pub fn stationary_check(
    spec: &SdeSpec,
    target: &DistributionModel,
    config: &SimConfig,
    threshold: f64,
    seed: u64,
) -> Result<StationaryCheck, SdeError> {
    let start = spec.target_log_model().quantile(0.5)?;
    let draws = simulate(spec, start, config, seed)?;
    let retained = draws.len();
    let sample = Sample::from_logs(draws)
        .map_err(|e| SdeError::Config(format!("no retained draws: {e}")))?;
    let ks_distance = ks_stat(&target.to_log_space(), &sample)?;
    Ok(StationaryCheck {
        ks_distance,
        retained,
        threshold,
        pass: ks_distance < threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn drift_text_round_trips() {
        let d: Drift = "normal:mu=1,sigma=2".parse().unwrap();
        assert_eq!(
            d,
            Drift::Normal {
                mu: 1.0,
                sigma: 2.0
            }
        );
        let m: Drift = "mix2n:mu1=7.363,sigma1=1.972,mu2=4.954,sigma2=1.381,p1=0.696"
            .parse()
            .unwrap();
        assert_eq!(m.name(), "2N");
        assert!("normal:mu=1".parse::<Drift>().is_err());
        assert!("normal:mu=1,sigma=2,eta=3".parse::<Drift>().is_err());
        assert!("cauchy:x=1".parse::<Drift>().is_err());
    }

    fn canada_2n() -> MixtureParams {
        MixtureParams::new(&[(7.363, 1.972), (4.954, 1.381)], &[0.696]).unwrap()
    }

    #[test]
    fn fixed_points() {
        let n = SdeSpec::new(
            Drift::Normal {
                mu: 2.0,
                sigma: 1.5,
            },
            0.7,
        )
        .unwrap();
        assert_eq!(n.drift(2.0), 0.0);
        let e = SdeSpec::new(
            Drift::Estexp {
                gamma: 0.45,
                eta: 2000.0,
            },
            1.0,
        )
        .unwrap();
        assert!(e.drift(2000f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn degenerate_mixture_reduces_to_normal() {
        let p = MixtureParams::new(&[(5.0, 1.2), (1.0, 0.5)], &[1.0]).unwrap();
        let a = 2.3;
        let mix = SdeSpec::new(Drift::Mix2N(p), a).unwrap();
        let normal = SdeSpec::new(
            Drift::Normal {
                mu: 5.0,
                sigma: 1.2,
            },
            a,
        )
        .unwrap();
        for y in [-3.0, 0.0, 4.0, 9.0] {
            assert!((mix.drift(y) - normal.drift(y)).abs() < 1e-12);
        }
    }

    #[test]
    fn score_identity_for_every_catalog_entry() {
        let specs = [
            Drift::Estexp {
                gamma: 0.45,
                eta: 2000.0,
            },
            Drift::Normal {
                mu: 6.5,
                sigma: 2.0,
            },
            Drift::Exponential {
                alpha: 1.9,
                y_min: 8.3,
            },
            Drift::TruncNormal {
                mu: 7.0,
                sigma: 2.0,
                y_min: 8.0,
            },
            Drift::Mix2N(canada_2n()),
            Drift::Mix3N(
                MixtureParams::new(
                    &[(8.510, 2.174), (6.640, 1.662), (4.804, 1.335)],
                    &[0.081, 0.523],
                )
                .unwrap(),
            ),
        ];
        for d in specs {
            for a in [0.3, 1.0, 4.0] {
                let spec = SdeSpec::new(d.clone(), a).unwrap();
                let grid = default_grid(&spec, 400, 1e-4);
                let err = score_identity_check(&spec, &spec.target_log_model(), &grid).unwrap();
                assert!(err < 1e-6, "{} a={a}: {err}", d.name());
            }
        }
    }

    #[test]
    fn zero_noise_converges_monotonically() {
        // a = σ² gives the unit-rate drift −(y − μ)/2 whatever the size of a
        let spec = SdeSpec::new(
            Drift::Normal {
                mu: 1.0,
                sigma: 1e-6,
            },
            1e-12,
        )
        .unwrap();
        let cfg = SimConfig {
            dt: 0.01,
            n_steps: 2000,
            burn_in: 0,
            thin: 1,
        };
        let path = simulate(&spec, 5.0, &cfg, 1).unwrap();
        assert!(path.windows(2).all(|w| w[1] <= w[0] + 1e-5));
        assert!((path.last().unwrap() - 1.0).abs() < 1e-3);
    }

    #[test]
    fn ou_moments() {
        let spec = SdeSpec::new(
            Drift::Normal {
                mu: 0.0,
                sigma: 1.0,
            },
            1.0,
        )
        .unwrap();
        let cfg = SimConfig {
            dt: 0.01,
            n_steps: 1_000_000,
            burn_in: 100_000,
            thin: 10,
        };
        let draws = simulate(&spec, 0.0, &cfg, 3).unwrap();
        let n = draws.len() as f64;
        let mean = draws.iter().sum::<f64>() / n;
        let sd = (draws.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!(mean.abs() < 0.05, "{mean}");
        assert!((sd - 1.0).abs() < 0.05, "{sd}");
    }

    #[test]
    fn reflection_stays_in_domain_and_is_deterministic() {
        let spec = SdeSpec::new(
            Drift::Exponential {
                alpha: 2.0,
                y_min: 0.0,
            },
            1.0,
        )
        .unwrap();
        let cfg = SimConfig {
            dt: 0.01,
            n_steps: 50_000,
            burn_in: 1000,
            thin: 7,
        };
        let a = simulate(&spec, 0.5, &cfg, 11).unwrap();
        let b = simulate(&spec, 0.5, &cfg, 11).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|&y| y >= -1e-12));
        assert_eq!(a.len(), cfg.retained());
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(
            SdeSpec::new(
                Drift::Normal {
                    mu: 0.0,
                    sigma: 1.0
                },
                0.0
            ),
            Err(SdeError::Diffusion(_))
        ));
        assert!(SdeSpec::new(
            Drift::Estexp {
                gamma: -1.0,
                eta: 1.0
            },
            1.0
        )
        .is_err());
        assert!(matches!(
            SdeSpec::new(Drift::Mix3N(canada_2n()), 1.0),
            Err(SdeError::ComponentCount { .. })
        ));
        let spec = SdeSpec::new(
            Drift::Exponential {
                alpha: 2.0,
                y_min: 1.0,
            },
            1.0,
        )
        .unwrap();
        assert!(matches!(
            simulate(&spec, 0.0, &SimConfig::default(), 1),
            Err(SdeError::StartOutsideDomain { .. })
        ));
        let stiff = SdeSpec::new(
            Drift::Normal {
                mu: 0.0,
                sigma: 1e-3,
            },
            1.0,
        )
        .unwrap();
        let cfg = SimConfig {
            dt: 1.0,
            n_steps: 10,
            burn_in: 0,
            thin: 1,
        };
        assert!(matches!(
            simulate(&stiff, 1.0, &cfg, 1),
            Err(SdeError::StepTooLarge { .. })
        ));
    }
}
