use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{finish, Diagnostics, FitConfig, FitError, FitResult};
use crate::model::{DistributionModel, Family, MixtureParams};
use crate::sample::{sub_seed, Sample};
use crate::special::ln_std_normal_pdf;

/// Runs within this many log-likelihood units are treated as tied.
const TIE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmConfig {
    /// Random (Dirichlet-responsibility) starts, in addition to the
    /// deterministic quantile-split start.
    pub restarts: usize,
    pub max_iter: usize,
    /// Convergence when `|ΔlnL|` stays below this for `patience` iterations.
    pub tol: f64,
    pub patience: usize,
    /// Component SD floor as a multiple of the log-data SD.
    pub sigma_floor_factor: f64,
    /// Every start first runs this many iterations; only the best
    /// `screen_keep` then continue to `max_iter`.
    pub screen_iter: usize,
    pub screen_keep: usize,
    /// For `m ≥ 3`, also fit `m − 1` components and continue from that fit
    /// with its heaviest component split, so the fitted likelihood never
    /// falls below the smaller mixture.
    #[serde(default = "yes")]
    pub nest_lower: bool,
    /// Optional extra start tried before all others.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warm_start: Option<MixtureParams>,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            restarts: 20,
            max_iter: 2000,
            tol: 1e-8,
            patience: 3,
            sigma_floor_factor: 1e-3,
            screen_iter: 200,
            screen_keep: 3,
            nest_lower: true,
            warm_start: None,
        }
    }
}

fn yes() -> bool {
    true
}

/// Outcome of a single EM run on log-data.
#[derive(Debug, Clone, PartialEq)]
pub struct EmRun {
    pub params: MixtureParams,
    /// Log-space log-likelihood at `params`.
    pub log_likelihood: f64,
    /// Log-likelihood before each update and at the final parameters.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// A component SD fell below the floor or a weight vanished.
    pub collapsed: bool,
}

struct Raw {
    mus: Vec<f64>,
    sigmas: Vec<f64>,
    weights: Vec<f64>,
}

impl Raw {
    fn from_params(p: &MixtureParams) -> Self {
        Self {
            mus: p.mus().to_vec(),
            sigmas: p.sigmas().to_vec(),
            weights: p.weights().to_vec(),
        }
    }

    fn to_params(&self) -> Option<MixtureParams> {
        let comps: Vec<(f64, f64)> = self
            .mus
            .iter()
            .copied()
            .zip(self.sigmas.iter().copied())
            .collect();
        MixtureParams::from_full_weights(&comps, &self.weights).ok()
    }

    /// M-step from per-component sums of τ, τ·y and τ·y².
    fn from_moments(s0: &[f64], s1: &[f64], s2: &[f64], n: f64) -> Self {
        let m = s0.len();
        let mut out = Raw {
            mus: vec![0.0; m],
            sigmas: vec![0.0; m],
            weights: vec![0.0; m],
        };
        for j in 0..m {
            let mean = s1[j] / s0[j];
            out.mus[j] = mean;
            out.sigmas[j] = (s2[j] / s0[j] - mean * mean).max(0.0).sqrt();
            out.weights[j] = s0[j] / n;
        }
        out
    }
}

/// One E-step and M-step. Returns the log-likelihood at the incoming
/// parameters and the updated parameters. Moments are accumulated around
/// the incoming means to avoid cancellation.
fn em_step(logs: &[f64], cur: &Raw, buf: &mut [f64]) -> (f64, Raw) {
    let m = cur.mus.len();
    let mut s0 = vec![0.0; m];
    let mut s1 = vec![0.0; m];
    let mut s2 = vec![0.0; m];
    let ln_w: Vec<f64> = cur.weights.iter().map(|w| w.ln()).collect();
    let ln_s: Vec<f64> = cur.sigmas.iter().map(|s| s.ln()).collect();
    let mut ll = 0.0;
    for &y in logs {
        let mut max = f64::NEG_INFINITY;
        for j in 0..m {
            let z = (y - cur.mus[j]) / cur.sigmas[j];
            buf[j] = ln_w[j] + ln_std_normal_pdf(z) - ln_s[j];
            max = max.max(buf[j]);
        }
        let mut total = 0.0;
        for b in buf.iter_mut() {
            *b = (*b - max).exp();
            total += *b;
        }
        ll += max + total.ln();
        for j in 0..m {
            let t = buf[j] / total;
            let d = y - cur.mus[j];
            s0[j] += t;
            s1[j] += t * d;
            s2[j] += t * d * d;
        }
    }
    let mut next = Raw::from_moments(&s0, &s1, &s2, logs.len() as f64);
    for j in 0..m {
        next.mus[j] += cur.mus[j];
    }
    (ll, next)
}

fn log_likelihood_raw(logs: &[f64], p: &Raw) -> f64 {
    let mut buf = vec![0.0; p.mus.len()];
    em_step(logs, p, &mut buf).0
}

/// Runs EM from `init` on log-data.
pub fn em_run(logs: &[f64], init: &MixtureParams, config: &EmConfig) -> EmRun {
    let n = logs.len() as f64;
    let mean = logs.iter().sum::<f64>() / n;
    let sd = (logs.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n).sqrt();
    let floor = config.sigma_floor_factor * sd;
    run_from(logs, Raw::from_params(init), config, floor)
}

fn run_from(logs: &[f64], init: Raw, config: &EmConfig, floor: f64) -> EmRun {
    let mut state = EmState::new(init);
    state.advance(logs, config.max_iter, config, floor);
    state.finish(logs)
}

/// A resumable EM run.
struct EmState {
    cur: Raw,
    trace: Vec<f64>,
    quiet: usize,
    iterations: usize,
    converged: bool,
    collapsed: bool,
}

impl EmState {
    fn new(init: Raw) -> Self {
        Self {
            cur: init,
            trace: Vec::new(),
            quiet: 0,
            iterations: 0,
            converged: false,
            collapsed: false,
        }
    }

    fn active(&self) -> bool {
        !self.converged && !self.collapsed
    }

    /// Latest known log-likelihood (one update stale while running).
    fn score(&self) -> f64 {
        *self.trace.last().unwrap_or(&f64::NEG_INFINITY)
    }

    /// Iterates until convergence, collapse or `limit` total iterations.
    fn advance(&mut self, logs: &[f64], limit: usize, config: &EmConfig, floor: f64) {
        let mut buf = vec![0.0; self.cur.mus.len()];
        while self.active() && self.iterations < limit {
            let (ll, next) = em_step(logs, &self.cur, &mut buf);
            if let Some(&prev) = self.trace.last() {
                debug_assert!(
                    ll >= prev - 1e-9 * (1.0 + f64::abs(prev)),
                    "EM decreased the likelihood: {prev} -> {ll}"
                );
                if (ll - prev).abs() < config.tol {
                    self.quiet += 1;
                } else {
                    self.quiet = 0;
                }
            }
            self.trace.push(ll);
            if self.quiet >= config.patience {
                self.converged = true;
                break;
            }
            self.iterations += 1;
            if next
                .sigmas
                .iter()
                .zip(&next.weights)
                .any(|(&s, &w)| !(s >= floor) || !(w > 0.0) || !s.is_finite())
            {
                self.collapsed = true;
                break;
            }
            self.cur = next;
        }
    }

    fn finish(mut self, logs: &[f64]) -> EmRun {
        if self.active() {
            self.trace.push(log_likelihood_raw(logs, &self.cur));
        }
        let params = self.cur.to_params();
        EmRun {
            log_likelihood: self.score(),
            collapsed: self.collapsed || params.is_none(),
            params: params.unwrap_or_else(|| placeholder(self.cur.mus.len())),
            trace: self.trace,
            iterations: self.iterations,
            converged: self.converged,
        }
    }
}

fn placeholder(m: usize) -> MixtureParams {
    let comps: Vec<(f64, f64)> = (0..m).map(|j| (j as f64, 1.0)).collect();
    MixtureParams::from_full_weights(&comps, &vec![1.0; m]).expect("valid placeholder")
}

/// Splits the sorted logs into `m` equal-count blocks.
fn quantile_split(logs: &[f64], m: usize, floor: f64) -> Raw {
    let n = logs.len();
    let mut out = Raw {
        mus: Vec::with_capacity(m),
        sigmas: Vec::with_capacity(m),
        weights: Vec::with_capacity(m),
    };
    for j in 0..m {
        let block = &logs[j * n / m..(j + 1) * n / m];
        let k = block.len() as f64;
        let mean = block.iter().sum::<f64>() / k;
        let sd = (block.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / k).sqrt();
        out.mus.push(mean);
        out.sigmas.push(sd.max(10.0 * floor));
        out.weights.push(k / n as f64);
    }
    out
}

/// M-step from Dirichlet(1, …, 1) responsibilities.
fn random_start(logs: &[f64], m: usize, seed: u64, floor: f64) -> Raw {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s0 = vec![0.0; m];
    let mut s1 = vec![0.0; m];
    let mut s2 = vec![0.0; m];
    let mut t = vec![0.0; m];
    for &y in logs {
        let mut total = 0.0;
        for v in t.iter_mut() {
            *v = Exp1.sample(&mut rng);
            total += *v;
        }
        for j in 0..m {
            let w = t[j] / total;
            s0[j] += w;
            s1[j] += w * y;
            s2[j] += w * y * y;
        }
    }
    let mut raw = Raw::from_moments(&s0, &s1, &s2, logs.len() as f64);
    for s in raw.sigmas.iter_mut() {
        *s = s.max(10.0 * floor);
    }
    raw
}

/// Lognormal mixture with `m` components by multi-start EM on the logs.
pub fn fit_mixture(
    sample: &Sample,
    m: usize,
    config: &FitConfig,
    seed: u64,
) -> Result<FitResult, FitError> {
    if m < 2 {
        return Err(crate::model::ModelError::TooFewComponents(m).into());
    }
    let n = sample.len();
    if n < 10 * m {
        return Err(FitError::InsufficientSample {
            needed: 10 * m,
            got: n,
        });
    }
    let logs = sample.logs();
    let (_, sd) = sample.log_moments();
    if sd <= 0.0 {
        return Err(FitError::DegenerateSample("log-variance is zero".into()));
    }
    let em = &config.em;
    let floor = em.sigma_floor_factor * sd;

    let mut starts: Vec<Option<&MixtureParams>> = Vec::new();
    if let Some(w) = em.warm_start.as_ref().filter(|w| w.m() == m) {
        starts.push(Some(w));
    }
    let fixed = starts.len() + 1;
    let total = fixed + em.restarts;

    let mut states: Vec<EmState> = (0..total)
        .into_par_iter()
        .map(|r| {
            let init = if r < fixed - 1 {
                Raw::from_params(starts[r].expect("warm start"))
            } else if r == fixed - 1 {
                quantile_split(logs, m, floor)
            } else {
                random_start(logs, m, sub_seed(seed, (r - fixed) as u64), floor)
            };
            let mut state = EmState::new(init);
            state.advance(logs, em.screen_iter.min(em.max_iter), em, floor);
            state
        })
        .collect();

    // continue the most promising screened runs
    let mut ranked: Vec<usize> = (0..total).filter(|&r| states[r].active()).collect();
    ranked.sort_by(|&a, &b| {
        states[b]
            .score()
            .total_cmp(&states[a].score())
            .then(a.cmp(&b))
    });
    let mut keep = vec![false; total];
    for &r in ranked.iter().take(em.screen_keep.max(1)) {
        keep[r] = true;
    }
    states
        .par_iter_mut()
        .enumerate()
        .filter(|(r, _)| keep[*r])
        .for_each(|(_, state)| state.advance(logs, em.max_iter, em, floor));
    let runs: Vec<EmRun> = states
        .into_iter()
        .enumerate()
        .filter(|(r, st)| keep[*r] || !st.active())
        .map(|(_, st)| st.finish(logs))
        .collect();

    let collapsed = runs.iter().filter(|r| r.collapsed).count();
    let mut best: Option<&EmRun> = None;
    for run in runs.iter().filter(|r| !r.collapsed) {
        if best.is_none_or(|b| run.log_likelihood > b.log_likelihood + TIE_TOL) {
            best = Some(run);
        }
    }

    let mut diagnostics = Diagnostics {
        em_restarts_used: total,
        ..Diagnostics::default()
    };
    if collapsed > 0 {
        diagnostics.warnings.push(format!(
            "{collapsed} of {total} EM runs collapsed and were discarded"
        ));
    }
    let mut chosen: Option<(MixtureParams, f64)> = None;
    if let Some(b) = best {
        diagnostics.iterations = b.iterations;
        diagnostics.converged = b.converged;
        if !b.converged {
            diagnostics
                .warnings
                .push(format!("EM hit the {}-iteration cap", em.max_iter));
        }
        chosen = Some((b.params.clone(), b.log_likelihood));
    }
    for (params, ll, label) in nested_candidates(sample, m, config, seed, floor) {
        if chosen.as_ref().is_none_or(|c| ll > c.1 + TIE_TOL) {
            diagnostics.warnings.push(format!(
                "the {label} nested in {m} components beat every EM run and is reported"
            ));
            diagnostics.converged = true;
            chosen = Some((params, ll));
        }
    }
    let (params, log_ll) = chosen.ok_or(FitError::DegenerateMixture { runs: total })?;

    let jacobian: f64 = logs.iter().sum();
    let model = DistributionModel::size(Family::Mixture(params));
    Ok(finish(
        model,
        log_ll - jacobian,
        sample,
        diagnostics,
        config.std_errors,
    ))
}

/// `m − 1` components plus a copy of the heaviest one at half its weight.
/// The tiny `μ` offset keeps the components distinguishable.
fn split_heaviest(p: &MixtureParams, offset: f64) -> Raw {
    let mut raw = Raw::from_params(p);
    let j = (0..p.m())
        .max_by(|&a, &b| raw.weights[a].total_cmp(&raw.weights[b]).then(b.cmp(&a)))
        .expect("at least one component");
    raw.weights[j] /= 2.0;
    raw.mus.push(raw.mus[j] + offset * raw.sigmas[j]);
    raw.sigmas.push(raw.sigmas[j]);
    raw.weights.push(raw.weights[j]);
    raw
}

/// Solutions of the smaller models expressed with `m` components: the
/// single lognormal as `m` identical components and, with `nest_lower`, the
/// fitted `m − 1` mixture split and refined by EM. Each is returned with its
/// log-space likelihood.
fn nested_candidates(
    sample: &Sample,
    m: usize,
    config: &FitConfig,
    seed: u64,
    floor: f64,
) -> Vec<(MixtureParams, f64, &'static str)> {
    let logs = sample.logs();
    let (mu, sigma) = sample.log_moments();
    let mut out = Vec::new();
    let single = Raw {
        mus: (0..m).map(|j| mu + 1e-9 * j as f64).collect(),
        sigmas: vec![sigma; m],
        weights: vec![1.0 / m as f64; m],
    };
    if let Some(p) = single.to_params() {
        out.push((p, log_likelihood_raw(logs, &single), "lognormal"));
    }
    if m >= 3 && config.em.nest_lower {
        let mut lower = config.clone();
        lower.std_errors = false;
        lower.em.warm_start = None;
        if let Ok(fit) = fit_mixture(sample, m - 1, &lower, sub_seed(seed, u64::MAX)) {
            let Family::Mixture(p) = fit.model.family() else {
                unreachable!("mixture fit returns a mixture")
            };
            let exact = split_heaviest(p, 1e-9);
            if let Some(q) = exact.to_params() {
                out.push((q, log_likelihood_raw(logs, &exact), "smaller mixture"));
            }
            let run = run_from(logs, split_heaviest(p, 1e-2), &config.em, floor);
            if !run.collapsed {
                out.push((run.params, run.log_likelihood, "smaller mixture"));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fitting::{fit_lognormal, log_likelihood};

    fn france() -> DistributionModel {
        DistributionModel::mixture(
            &[(8.510, 2.174), (6.640, 1.662), (4.804, 1.335)],
            &[0.081, 0.523],
        )
        .unwrap()
    }

    #[test]
    fn em_is_monotone() {
        let s = france().sample(2000, 3);
        for seed in 0..4 {
            let init = random_start(s.logs(), 3, seed, 1e-3);
            let run = run_from(s.logs(), init, &EmConfig::default(), 1e-3);
            for w in run.trace.windows(2) {
                assert!(w[1] >= w[0] - 1e-9 * w[0].abs(), "{} -> {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn likelihood_matches_summation() {
        let s = france().sample(800, 5);
        let fit = fit_mixture(&s, 2, &FitConfig::default(), 1).unwrap();
        let summed = log_likelihood(&fit.model, &s).unwrap();
        assert!((fit.log_likelihood - summed).abs() < 1e-8 * summed.abs());
        assert_eq!(fit.k, 5);
    }

    #[test]
    fn nests_lognormal_on_single_component_data() {
        let s = DistributionModel::lognormal(4.0, 1.5)
            .unwrap()
            .sample(1000, 7);
        let ln = fit_lognormal(&s).unwrap();
        let two = fit_mixture(&s, 2, &FitConfig::default(), 2).unwrap();
        assert!(two.log_likelihood >= ln.log_likelihood - 1e-6);
    }

    #[test]
    fn three_nests_two() {
        let s = france().sample(3000, 8);
        let cfg = FitConfig::default();
        let two = fit_mixture(&s, 2, &cfg, 4).unwrap();
        let three = fit_mixture(&s, 3, &cfg, 4).unwrap();
        assert!(three.log_likelihood >= two.log_likelihood - 1e-6);
    }

    #[test]
    fn deterministic_in_seed() {
        let s = france().sample(600, 1);
        let cfg = FitConfig::default();
        let a = fit_mixture(&s, 2, &cfg, 42).unwrap();
        let b = fit_mixture(&s, 2, &cfg, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn recovers_separated_components() {
        let truth = DistributionModel::mixture(&[(8.0, 0.5), (3.0, 0.7)], &[0.4]).unwrap();
        let s = truth.sample(5000, 12);
        let fit = fit_mixture(&s, 2, &FitConfig::default(), 3).unwrap();
        let p: Vec<f64> = fit.model.parameters().into_iter().map(|(_, v)| v).collect();
        let want = [8.0, 0.5, 3.0, 0.7, 0.4];
        for (a, b) in p.iter().zip(&want) {
            assert!((a - b).abs() < 0.05 * b, "{p:?}");
        }
        assert!(fit.diagnostics.gradient_norm < 1e-4);
        assert!(fit.std_errors.is_some());
    }

    #[test]
    fn too_small_sample() {
        let s = france().sample(25, 1);
        assert!(matches!(
            fit_mixture(&s, 3, &FitConfig::default(), 0),
            Err(FitError::InsufficientSample { needed: 30, .. })
        ));
    }
}
