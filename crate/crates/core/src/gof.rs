//! KS, Cramér–von Mises and Anderson–Darling statistics with parametric
//! bootstrap p-values that re-estimate the model on every synthetic sample.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fitting::{log_likelihood, FamilyKind, FitConfig, FitError};
use crate::model::{DistributionModel, ModelError};
use crate::sample::{sub_seed, Sample};

const AD_CLAMP: f64 = 1e-12;
/// Dropped-replicate share above which a report is flagged unreliable.
const DROP_WARN: f64 = 0.05;
/// Log-likelihood shortfall of a mirrored estimate that is worth flagging.
const SHORTFALL_WARN: f64 = 1.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GofError {
    #[error("at least one bootstrap replicate is required")]
    NoReplicates,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("fit to the observed data failed: {0}")]
    Fit(#[from] FitError),
    #[error("every one of {0} bootstrap replicates failed to refit")]
    AllReplicatesFailed(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StatKind {
    #[serde(rename = "KS")]
    Ks,
    #[serde(rename = "CM")]
    Cm,
    #[serde(rename = "AD")]
    Ad,
}

impl StatKind {
    pub const ALL: [StatKind; 3] = [StatKind::Ks, StatKind::Cm, StatKind::Ad];

    pub fn name(&self) -> &'static str {
        match self {
            StatKind::Ks => "KS",
            StatKind::Cm => "CM",
            StatKind::Ad => "AD",
        }
    }

    pub fn compute(&self, model: &DistributionModel, sample: &Sample) -> Result<f64, ModelError> {
        match self {
            StatKind::Ks => ks_stat(model, sample),
            StatKind::Cm => cm_stat(model, sample),
            StatKind::Ad => ad_stat(model, sample),
        }
    }
}

impl std::str::FromStr for StatKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "KS" => Ok(StatKind::Ks),
            "CM" => Ok(StatKind::Cm),
            "AD" => Ok(StatKind::Ad),
            other => Err(format!(
                "unknown statistic {other:?}; expected KS, CM or AD"
            )),
        }
    }
}

/// Model CDF (and survival) at the sorted data, after a support check.
fn pit(model: &DistributionModel, sample: &Sample) -> Result<Vec<(f64, f64)>, ModelError> {
    let xs = model.coords(sample);
    if let Some(lo) = model.support_lower() {
        if xs[0] < lo {
            return Err(ModelError::OutsideSupport {
                x: xs[0],
                support: format!("values >= {lo}"),
            });
        }
    }
    Ok(xs.iter().map(|&x| (model.cdf(x), model.sf(x))).collect())
}

/// Two-sided Kolmogorov–Smirnov distance evaluated on both sides of each jump.
pub fn ks_stat(model: &DistributionModel, sample: &Sample) -> Result<f64, ModelError> {
    let u = pit(model, sample)?;
    let n = u.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &(ui, _)) in u.iter().enumerate() {
        d = d.max((i + 1) as f64 / n - ui).max(ui - i as f64 / n);
    }
    Ok(d.clamp(0.0, 1.0))
}

/// Cramér–von Mises `W²`.
pub fn cm_stat(model: &DistributionModel, sample: &Sample) -> Result<f64, ModelError> {
    Ok(cm_from_uniforms(
        &pit(model, sample)?.iter().map(|p| p.0).collect::<Vec<_>>(),
    ))
}

pub fn cm_from_uniforms(u: &[f64]) -> f64 {
    let n = u.len() as f64;
    1.0 / (12.0 * n)
        + u.iter()
            .enumerate()
            .map(|(i, &ui)| (ui - (2 * i + 1) as f64 / (2.0 * n)).powi(2))
            .sum::<f64>()
}

/// Anderson–Darling `A²` with probabilities clamped to `[1e−12, 1 − 1e−12]`.
pub fn ad_stat(model: &DistributionModel, sample: &Sample) -> Result<f64, ModelError> {
    Ok(ad_from_pairs(&pit(model, sample)?))
}

/// `A²` from sorted `(u, 1 − u)` pairs; the survival value is passed
/// separately so upper-tail points keep their precision.
pub fn ad_from_pairs(u: &[(f64, f64)]) -> f64 {
    let n = u.len();
    let nf = n as f64;
    let clamp = |v: f64| v.clamp(AD_CLAMP, 1.0 - AD_CLAMP);
    let mut total = 0.0;
    for i in 0..n {
        let lower = clamp(u[i].0).ln();
        let upper = clamp(u[n - 1 - i].1).ln();
        total += (2 * i + 1) as f64 * (lower + upper);
    }
    -nf - total / nf
}

/// Re-estimation used by the bootstrap. `warm` is the model fitted to the
/// observed data when refitting a replicate, and `None` for the observed fit.
pub trait Refit: Sync {
    fn refit(
        &self,
        sample: &Sample,
        warm: Option<&DistributionModel>,
        seed: u64,
    ) -> Result<DistributionModel, FitError>;
}

/// Refits a [`FamilyKind`] with full settings on the observed data and with
/// lighter warm-started settings on replicates. Mixtures are `mirrored`: the
/// same cold light estimator runs on observed and synthetic data, since a warm
/// start at the generating mixture settles in a nearby local optimum and skews
/// null p-values toward 1. A boundary optimum is accepted as the fit.
#[derive(Debug, Clone)]
pub struct FamilyRefit {
    pub kind: FamilyKind,
    pub observed: FitConfig,
    pub replicate: FitConfig,
    pub mirrored: bool,
}

impl FamilyRefit {
    pub fn new(kind: FamilyKind) -> Self {
        Self {
            kind,
            observed: FitConfig {
                std_errors: false,
                ..FitConfig::default()
            },
            replicate: FitConfig::bootstrap(),
            mirrored: matches!(kind, FamilyKind::Mixture { .. }),
        }
    }

    /// Bootstrap p-values for `fitted`, already fitted to `sample`. A mirrored
    /// refit tests its own estimate instead, recorded in each report, with a
    /// warning when that estimate falls short of `fitted`.
    pub fn pvalues(
        &self,
        sample: &Sample,
        fitted: &DistributionModel,
        kinds: &[StatKind],
        replicates: usize,
        seed: u64,
    ) -> Result<Vec<GofReport>, GofError> {
        if !self.mirrored {
            return mc_pvalues_from(self, sample, fitted, kinds, replicates, seed);
        }
        let mut reports = mc_pvalues(self, sample, kinds, replicates, seed)?;
        let (Some(first), Ok(want)) = (reports.first(), log_likelihood(fitted, sample)) else {
            return Ok(reports);
        };
        let got = log_likelihood(&first.model, sample)?;
        if got < want - SHORTFALL_WARN {
            let note = format!(
                "the bootstrap estimator reached lnL {got:.2}, below the reported fit's {want:.2}"
            );
            for r in &mut reports {
                r.warning = Some(match r.warning.take() {
                    Some(w) => format!("{w}; {note}"),
                    None => note.clone(),
                });
            }
        }
        Ok(reports)
    }
}

impl Refit for FamilyRefit {
    fn refit(
        &self,
        sample: &Sample,
        warm: Option<&DistributionModel>,
        seed: u64,
    ) -> Result<DistributionModel, FitError> {
        let config = match warm {
            _ if self.mirrored => self.replicate.clone(),
            Some(m) => self.replicate.clone().with_warm_start(m),
            None => self.observed.clone(),
        };
        match self.kind.fit(sample, &config, seed) {
            Ok(fit) => Ok(fit.model),
            Err(e) => e.best_effort().map(|b| b.model.clone()).ok_or(e),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GofReport {
    pub statistic_kind: StatKind,
    pub observed_stat: f64,
    /// Replicates that refitted successfully.
    pub replicates: usize,
    pub requested: usize,
    pub dropped: usize,
    pub synthetic_stats: Vec<f64>,
    pub p_value: f64,
    pub seed: u64,
    pub model: DistributionModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

/// Parametric-bootstrap p-value for one statistic.
pub fn mc_pvalue<R: Refit>(
    refit: &R,
    sample: &Sample,
    kind: StatKind,
    replicates: usize,
    seed: u64,
) -> Result<GofReport, GofError> {
    Ok(mc_pvalues(refit, sample, &[kind], replicates, seed)?.remove(0))
}

/// Parametric-bootstrap p-values for several statistics sharing one set of
/// synthetic samples and refits.
pub fn mc_pvalues<R: Refit>(
    refit: &R,
    sample: &Sample,
    kinds: &[StatKind],
    replicates: usize,
    seed: u64,
) -> Result<Vec<GofReport>, GofError> {
    if replicates == 0 {
        return Err(GofError::NoReplicates);
    }
    let model = refit.refit(sample, None, seed)?;
    mc_pvalues_from(refit, sample, &model, kinds, replicates, seed)
}

/// As [`mc_pvalues`], for a model already fitted to `sample`.
pub fn mc_pvalues_from<R: Refit>(
    refit: &R,
    sample: &Sample,
    model: &DistributionModel,
    kinds: &[StatKind],
    replicates: usize,
    seed: u64,
) -> Result<Vec<GofReport>, GofError> {
    if replicates == 0 {
        return Err(GofError::NoReplicates);
    }
    let model = model.clone();
    let observed: Vec<f64> = kinds
        .iter()
        .map(|k| k.compute(&model, sample))
        .collect::<Result<_, _>>()?;
    let n = sample.len();

    let outcomes: Vec<Option<Vec<f64>>> = (0..replicates as u64)
        .into_par_iter()
        .map(|r| {
            let stream = sub_seed(seed, r);
            let mut rng = ChaCha8Rng::seed_from_u64(stream);
            let synthetic = model.sample_with(n, &mut rng);
            let refitted = refit.refit(&synthetic, Some(&model), stream).ok()?;
            kinds
                .iter()
                .map(|k| {
                    k.compute(&refitted, &synthetic)
                        .ok()
                        .filter(|v| v.is_finite())
                })
                .collect()
        })
        .collect();

    let kept: Vec<&Vec<f64>> = outcomes.iter().flatten().collect();
    if kept.is_empty() {
        return Err(GofError::AllReplicatesFailed(replicates));
    }
    let dropped = replicates - kept.len();
    let warning = (dropped as f64 > DROP_WARN * replicates as f64).then(|| {
        format!("{dropped} of {replicates} replicates failed to refit; p-value may be unreliable")
    });

    Ok(kinds
        .iter()
        .enumerate()
        .map(|(j, &kind)| {
            let synthetic_stats: Vec<f64> = kept.iter().map(|s| s[j]).collect();
            let exceed = synthetic_stats
                .iter()
                .filter(|&&s| s >= observed[j])
                .count();
            GofReport {
                statistic_kind: kind,
                observed_stat: observed[j],
                replicates: kept.len(),
                requested: replicates,
                dropped,
                p_value: (1 + exceed) as f64 / (kept.len() + 1) as f64,
                synthetic_stats,
                seed,
                model: model.clone(),
                warning: warning.clone(),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    #[test]
    fn cm_minimal_value_on_midpoint_grid() {
        let n = 40;
        let u: Vec<f64> = (0..n)
            .map(|i| (2 * i + 1) as f64 / (2.0 * n as f64))
            .collect();
        assert!((cm_from_uniforms(&u) - 1.0 / (12.0 * n as f64)).abs() < 1e-15);
        assert!((cm_from_uniforms(&[0.5]) - 1.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn ad_matches_brute_force() {
        let n = 9;
        let u: Vec<f64> = (1..=n).map(|i| i as f64 / (n + 1) as f64).collect();
        let pairs: Vec<(f64, f64)> = u.iter().map(|&v| (v, 1.0 - v)).collect();
        let mut brute = 0.0;
        for i in 1..=n {
            for j in 1..=n {
                if j == n + 1 - i {
                    brute += (2 * i - 1) as f64 * (1.0 - u[j - 1]).ln();
                }
                if j == i {
                    brute += (2 * i - 1) as f64 * u[j - 1].ln();
                }
            }
        }
        let want = -(n as f64) - brute / n as f64;
        assert!((ad_from_pairs(&pairs) - want).abs() < 1e-12);
    }

    #[test]
    fn ks_vanishes_on_quantile_grid() {
        let m = DistributionModel::lognormal(1.0, 2.0).unwrap();
        let n = 20_000;
        let xs: Vec<f64> = (0..n)
            .map(|i| m.quantile((i as f64 + 0.5) / n as f64).unwrap())
            .collect();
        let s = Sample::new(xs).unwrap();
        let d = ks_stat(&m, &s).unwrap();
        assert!(d <= 0.5 / n as f64 + 1e-9, "{d}");
    }

    #[test]
    fn statistics_reject_support_violation() {
        let m = DistributionModel::pareto(2.0, 10.0).unwrap();
        let s = Sample::new(vec![5.0, 20.0]).unwrap();
        for k in StatKind::ALL {
            assert!(k.compute(&m, &s).is_err());
        }
    }

    struct Probe {
        calls: AtomicUsize,
        model: DistributionModel,
    }

    impl Refit for Probe {
        fn refit(
            &self,
            _: &Sample,
            _: Option<&DistributionModel>,
            _: u64,
        ) -> Result<DistributionModel, FitError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            Ok(self.model.clone())
        }
    }

    #[test]
    fn every_replicate_is_refitted() {
        let model = DistributionModel::lognormal(0.0, 1.0).unwrap();
        let probe = Probe {
            calls: AtomicUsize::new(0),
            model: model.clone(),
        };
        let s = model.sample(100, 1);
        let r = mc_pvalue(&probe, &s, StatKind::Ks, 37, 5).unwrap();
        assert_eq!(probe.calls.load(Ordering::SeqCst), 38);
        assert_eq!(r.synthetic_stats.len(), r.replicates);
        assert!(r.p_value > 0.0 && r.p_value <= 1.0);
    }

    #[test]
    fn mixture_refit_ignores_warm_starts() {
        let truth = DistributionModel::mixture(&[(6.0, 1.0), (2.0, 0.7)], &[0.4]).unwrap();
        let s = truth.sample(300, 9);
        let refit = FamilyRefit::new(FamilyKind::Mixture { m: 2 });
        assert!(refit.mirrored);
        let far = DistributionModel::mixture(&[(20.0, 3.0), (-5.0, 0.2)], &[0.5]).unwrap();
        assert_eq!(
            refit.refit(&s, Some(&far), 4).unwrap(),
            refit.refit(&s, None, 4).unwrap()
        );
        let reports = refit.pvalues(&s, &truth, &[StatKind::Ad], 20, 4).unwrap();
        assert_eq!(reports[0].model, refit.refit(&s, None, 4).unwrap());
        assert!(!FamilyRefit::new(FamilyKind::Lognormal).mirrored);
    }

    #[test]
    fn single_replicate_smoothing() {
        // a model far from the data gives a huge observed statistic
        let data = DistributionModel::lognormal(5.0, 1.0)
            .unwrap()
            .sample(200, 3);
        let probe = Probe {
            calls: AtomicUsize::new(0),
            model: DistributionModel::lognormal(0.0, 1.0).unwrap(),
        };
        let r = mc_pvalue(&probe, &data, StatKind::Ad, 1, 9).unwrap();
        assert!(r.synthetic_stats[0] < r.observed_stat);
        assert_eq!(r.p_value, 0.5);
    }

    #[test]
    fn deterministic_given_seed() {
        let s = DistributionModel::lognormal(2.0, 1.0)
            .unwrap()
            .sample(150, 2);
        let f = FamilyRefit::new(FamilyKind::Lognormal);
        let a = mc_pvalues(&f, &s, &StatKind::ALL, 30, 77).unwrap();
        let b = mc_pvalues(&f, &s, &StatKind::ALL, 30, 77).unwrap();
        assert_eq!(a, b);
        for r in &a {
            assert!(r.observed_stat >= 0.0);
        }
    }

    #[test]
    fn zero_replicates_rejected() {
        let s = DistributionModel::lognormal(2.0, 1.0)
            .unwrap()
            .sample(50, 2);
        let f = FamilyRefit::new(FamilyKind::Lognormal);
        assert_eq!(
            mc_pvalue(&f, &s, StatKind::Ks, 0, 1).unwrap_err(),
            GofError::NoReplicates
        );
    }
}
