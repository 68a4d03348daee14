//! Information criteria and the Vuong test for non-nested models.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use thiserror::Error;

use crate::fitting::FitResult;
use crate::model::{DistributionModel, ModelError};
use crate::sample::Sample;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SelectionError {
    #[error("parameter count must be at least 1")]
    NoParameters,
    #[error("sample size must be positive")]
    EmptySample,
    #[error("models must share the same support (lower bounds {0:?} and {1:?})")]
    SupportMismatch(Option<f64>, Option<f64>),
    #[error("Vuong test needs at least 2 observations")]
    TooFewForVuong,
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Criteria {
    pub aic: f64,
    pub bic: f64,
    /// Undefined for `n < 3`, where `ln ln n` is not positive.
    pub hqc: Option<f64>,
}

/// AIC, BIC and HQC from the parameter count, sample size and maximized
/// log-likelihood.
pub fn criteria(k: usize, n: usize, log_likelihood: f64) -> Result<Criteria, SelectionError> {
    if k == 0 {
        return Err(SelectionError::NoParameters);
    }
    if n == 0 {
        return Err(SelectionError::EmptySample);
    }
    let kf = k as f64;
    let ln_n = (n as f64).ln();
    let dev = -2.0 * log_likelihood;
    Ok(Criteria {
        aic: 2.0 * kf + dev,
        bic: kf * ln_n + dev,
        hqc: (n >= 3).then(|| 2.0 * kf * ln_n.ln() + dev),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRow {
    pub name: String,
    pub k: usize,
    pub log_likelihood: f64,
    #[serde(flatten)]
    pub criteria: Criteria,
}

/// Names achieving the minimum of each criterion; more than one name is a tie.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Winners {
    pub aic: Vec<String>,
    pub bic: Vec<String>,
    pub hqc: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub n: usize,
    pub rows: Vec<SelectionRow>,
    pub winners: Winners,
}

fn argmins(rows: &[SelectionRow], key: impl Fn(&SelectionRow) -> Option<f64>) -> Vec<String> {
    let best = rows.iter().filter_map(&key).fold(f64::INFINITY, f64::min);
    rows.iter()
        .filter(|r| key(r) == Some(best))
        .map(|r| r.name.clone())
        .collect()
}

impl SelectionReport {
    /// Builds the table from `(name, k, lnL)` triples fitted on `n` points.
    pub fn from_rows(n: usize, models: &[(String, usize, f64)]) -> Result<Self, SelectionError> {
        let rows = models
            .iter()
            .map(|(name, k, ll)| {
                Ok(SelectionRow {
                    name: name.clone(),
                    k: *k,
                    log_likelihood: *ll,
                    criteria: criteria(*k, n, *ll)?,
                })
            })
            .collect::<Result<Vec<_>, SelectionError>>()?;
        let winners = Winners {
            aic: argmins(&rows, |r| Some(r.criteria.aic)),
            bic: argmins(&rows, |r| Some(r.criteria.bic)),
            hqc: argmins(&rows, |r| r.criteria.hqc),
        };
        Ok(Self { n, rows, winners })
    }

    /// Builds the table from fits made on the same `n` observations.
    pub fn from_fits(n: usize, fits: &[FitResult]) -> Result<Self, SelectionError> {
        let triples: Vec<(String, usize, f64)> = fits
            .iter()
            .map(|f| (f.name(), f.k, f.log_likelihood))
            .collect();
        Self::from_rows(n, &triples)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Favors {
    First,
    Second,
    Neither,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VuongResult {
    pub first: String,
    pub second: String,
    pub statistic: f64,
    /// Two-sided standard-normal p-value.
    pub p_value: f64,
    pub n: usize,
    /// Decision at the 5% level; positive statistics favor the first model.
    pub favors: Favors,
    pub schwarz_corrected: bool,
}

/// Vuong statistic `√n · mean(d) / sd(d)` with `d_i = ln f_A(x_i) − ln f_B(x_i)`
/// and the divisor-(n−1) SD. With `schwarz`, `Σ d` is reduced by
/// `(k_A − k_B)·ln(n)/2` first.
pub fn vuong(
    first: &DistributionModel,
    second: &DistributionModel,
    sample: &Sample,
    schwarz: bool,
) -> Result<VuongResult, SelectionError> {
    let (la, lb) = (first.support_lower(), second.support_lower());
    let same = match (la, lb) {
        (Some(a), Some(b)) => (a - b).abs() <= 1e-12 * a.abs().max(1.0),
        (None, None) => true,
        _ => false,
    };
    if !same || first.space() != second.space() {
        return Err(SelectionError::SupportMismatch(la, lb));
    }
    let n = sample.len();
    if n < 2 {
        return Err(SelectionError::TooFewForVuong);
    }
    let xs = first.coords(sample);
    let d: Vec<f64> = xs
        .iter()
        .map(|&x| Ok(first.log_pdf(x)? - second.log_pdf(x)?))
        .collect::<Result<_, ModelError>>()?;
    let nf = n as f64;
    let mut total: f64 = d.iter().sum();
    let mean = total / nf;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    if schwarz {
        total -= (first.num_params() as f64 - second.num_params() as f64) * nf.ln() / 2.0;
    }
    let (statistic, p_value) = if var > 0.0 {
        let t = total / (nf.sqrt() * var.sqrt());
        (t, erfc(t.abs() / std::f64::consts::SQRT_2).min(1.0))
    } else {
        (0.0, 1.0)
    };
    let favors = if p_value >= 0.05 {
        Favors::Neither
    } else if statistic > 0.0 {
        Favors::First
    } else {
        Favors::Second
    };
    Ok(VuongResult {
        first: first.name(),
        second: second.name(),
        statistic,
        p_value,
        n,
        favors,
        schwarz_corrected: schwarz,
    })
}
