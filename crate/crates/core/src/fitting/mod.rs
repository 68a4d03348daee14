//! Maximum-likelihood estimation for every family.
//!
//! All estimators take a [`Sample`] of sizes and return a [`FitResult`] whose
//! log-likelihood is expressed in size space (the log-space likelihood minus
//! `Σ ln x_i`), matching the convention used for information criteria.

mod closed_form;
mod information;
mod mixture;
mod stexp;
mod trunc;

pub use closed_form::{
    fit_lognormal, fit_pareto, lognormal_max_log_likelihood, pareto_max_log_likelihood,
};
pub use information::{log_likelihood, scaled_gradient_norm, standard_errors};
pub use mixture::{em_run, fit_mixture, EmConfig, EmRun};
pub use stexp::{fit_stexp, stexp_profile};
pub use trunc::{fit_trunc_lognormal, LntConfig};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{DistributionModel, ModelError};
use crate::sample::Sample;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("need at least {needed} observations, got {got}")]
    InsufficientSample { needed: usize, got: usize },
    #[error("degenerate sample: {0}")]
    DegenerateSample(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("every one of {runs} EM runs collapsed a component")]
    DegenerateMixture { runs: usize },
    #[error("no interior optimum; best point lies on the parameter bounds")]
    NoInteriorOptimum { best: Box<FitResult> },
}

impl FitError {
    /// The best fit found before failing, when the failure still produced one.
    pub fn best_effort(&self) -> Option<&FitResult> {
        match self {
            FitError::NoInteriorOptimum { best } => Some(best),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub iterations: usize,
    pub converged: bool,
    /// Max over parameters of `|∂lnL/∂θ_i| · max(|θ_i|, 1) / n`.
    pub gradient_norm: f64,
    pub em_restarts_used: usize,
    pub boundary_fit: bool,
    pub ridge_suspected: bool,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: DistributionModel,
    pub log_likelihood: f64,
    /// Aligned with [`DistributionModel::parameters`]; `None` when the
    /// observed information is not positive definite.
    pub std_errors: Option<Vec<f64>>,
    pub k: usize,
    pub diagnostics: Diagnostics,
}

impl FitResult {
    pub fn name(&self) -> String {
        self.model.name()
    }
}

/// Which family to fit, with the pre-selected cutoff where one applies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum FamilyKind {
    Stexp,
    Lognormal,
    Mixture { m: usize },
    Pareto { x_min: f64 },
    TruncLognormal { x_min: f64 },
}

impl FamilyKind {
    pub fn name(&self) -> String {
        match self {
            FamilyKind::Stexp => "STEXP".into(),
            FamilyKind::Lognormal => "LN".into(),
            FamilyKind::Mixture { m } => format!("{m}LN"),
            FamilyKind::Pareto { .. } => "Pareto".into(),
            FamilyKind::TruncLognormal { .. } => "LNt".into(),
        }
    }

    /// The family of an already fitted model.
    pub fn of(model: &DistributionModel) -> Self {
        use crate::model::Family;
        match model.family() {
            Family::Stexp(_) => FamilyKind::Stexp,
            Family::Lognormal(_) => FamilyKind::Lognormal,
            Family::Mixture(p) => FamilyKind::Mixture { m: p.m() },
            Family::Pareto(p) => FamilyKind::Pareto { x_min: p.x_min() },
            Family::TruncLognormal(p) => FamilyKind::TruncLognormal { x_min: p.x_min() },
        }
    }

    pub fn fit(
        &self,
        sample: &Sample,
        config: &FitConfig,
        seed: u64,
    ) -> Result<FitResult, FitError> {
        match *self {
            FamilyKind::Stexp => fit_stexp(sample, config),
            FamilyKind::Lognormal => fit_lognormal(sample),
            FamilyKind::Mixture { m } => fit_mixture(sample, m, config, seed),
            FamilyKind::Pareto { x_min } => fit_pareto(sample, x_min),
            FamilyKind::TruncLognormal { x_min } => fit_trunc_lognormal(sample, x_min, config),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub em: EmConfig,
    pub lnt: LntConfig,
    /// Compute observed-information standard errors.
    pub std_errors: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            em: EmConfig::default(),
            lnt: LntConfig::default(),
            std_errors: true,
        }
    }
}

impl FitConfig {
    /// Lighter settings for refitting many synthetic data sets: fewer
    /// random starts and no standard errors. Pair with a warm start.
    pub fn bootstrap() -> Self {
        Self {
            em: EmConfig {
                restarts: 1,
                max_iter: 500,
                screen_iter: 50,
                screen_keep: 1,
                nest_lower: false,
                ..EmConfig::default()
            },
            lnt: LntConfig {
                mu_points: 2,
                sigma_points: 2,
                ..LntConfig::default()
            },
            std_errors: false,
        }
    }

    /// Seeds the multi-start optimizers with an existing model of the same
    /// family (used when refitting data simulated from that model).
    pub fn with_warm_start(mut self, model: &DistributionModel) -> Self {
        use crate::model::Family;
        match model.family() {
            Family::Mixture(p) => self.em.warm_start = Some(p.clone()),
            Family::TruncLognormal(p) => self.lnt.warm_start = Some((p.mu(), p.sigma())),
            _ => {}
        }
        self
    }
}

/// Assembles a result, filling standard errors and the gradient diagnostic.
fn finish(
    model: DistributionModel,
    log_likelihood: f64,
    sample: &Sample,
    mut diagnostics: Diagnostics,
    std_errors: bool,
) -> FitResult {
    diagnostics.gradient_norm = scaled_gradient_norm(&model, sample).unwrap_or(f64::NAN);
    let std_errors = if std_errors {
        let se = standard_errors(&model, sample);
        if se.is_none() {
            diagnostics.warnings.push(
                "observed information not positive definite; standard errors unavailable".into(),
            );
        }
        se
    } else {
        None
    };
    FitResult {
        k: model.num_params(),
        model,
        log_likelihood,
        std_errors,
        diagnostics,
    }
}
