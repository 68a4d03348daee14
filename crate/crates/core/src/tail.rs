//! Power-law cutoff selection by minimizing the KS distance between the tail
//! data and a Pareto law fitted to it.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sample::Sample;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TailError {
    #[error("need at least {needed} observations for the cutoff scan, got {got}")]
    InsufficientSample { needed: usize, got: usize },
    #[error("no candidate cutoff leaves a non-degenerate tail of at least {n_floor} points")]
    NoCandidate { n_floor: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailConfig {
    /// Smallest tail a candidate cutoff may leave.
    pub n_floor: usize,
    /// Cap on the number of candidates scanned; beyond it a quantile-spaced
    /// subset of the unique values is used.
    pub max_candidates: usize,
}

impl Default for TailConfig {
    fn default() -> Self {
        Self {
            n_floor: 50,
            max_candidates: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailScan {
    /// Ascending unique values scanned.
    pub candidates: Vec<f64>,
    /// KS distance for each candidate.
    pub distances: Vec<f64>,
    /// Hill estimate for each candidate.
    pub alphas: Vec<f64>,
    pub chosen_xmin: f64,
    pub tail_n: usize,
    pub alpha_at_choice: f64,
}

/// Two-sided KS distance between the tail `logs[start..]` and the Pareto law
/// fitted to it by Hill's estimator. Returns `(D, α̂)`.
pub fn ks_distance_at(logs: &[f64], start: usize, suffix_sum: f64) -> (f64, f64) {
    let tail = &logs[start..];
    let m = tail.len() as f64;
    let y_min = tail[0];
    let excess = suffix_sum - m * y_min;
    if excess <= 0.0 {
        return (1.0, f64::INFINITY);
    }
    let alpha = 1.0 + m / excess;
    let mut d: f64 = 0.0;
    for (i, &y) in tail.iter().enumerate() {
        let p = -(-(alpha - 1.0) * (y - y_min)).exp_m1();
        let hi = (i + 1) as f64 / m;
        let lo = i as f64 / m;
        d = d.max((hi - p).abs()).max((p - lo).abs());
    }
    (d.min(1.0), alpha)
}

/// Scans candidate cutoffs and returns the one with the smallest KS distance;
/// ties go to the smallest cutoff.
pub fn select_xmin(sample: &Sample, config: &TailConfig) -> Result<TailScan, TailError> {
    let n = sample.len();
    let needed = 2 * config.n_floor;
    if n < needed || n < 2 {
        return Err(TailError::InsufficientSample {
            needed: needed.max(2),
            got: n,
        });
    }
    let values = sample.values();
    let logs = sample.logs();

    // first index of each unique value that still leaves n_floor points
    let mut starts: Vec<usize> = Vec::new();
    for i in 0..n {
        if n - i < config.n_floor.max(2) {
            break;
        }
        if i == 0 || values[i] != values[i - 1] {
            starts.push(i);
        }
    }
    if starts.len() > config.max_candidates && config.max_candidates > 0 {
        let u = starts.len() - 1;
        let k = config.max_candidates.max(2) - 1;
        let mut picked: Vec<usize> = (0..=k).map(|j| starts[(j * u + k / 2) / k]).collect();
        picked.dedup();
        starts = picked;
    }

    let mut suffix = vec![0.0; n + 1];
    for i in (0..n).rev() {
        suffix[i] = suffix[i + 1] + logs[i];
    }

    let scored: Vec<(f64, f64)> = starts
        .par_iter()
        .map(|&s| ks_distance_at(logs, s, suffix[s]))
        .collect();

    let mut best: Option<usize> = None;
    for (j, &(d, alpha)) in scored.iter().enumerate() {
        if alpha.is_finite() && best.is_none_or(|b| d < scored[b].0) {
            best = Some(j);
        }
    }
    let best = best.ok_or(TailError::NoCandidate {
        n_floor: config.n_floor,
    })?;
    Ok(TailScan {
        candidates: starts.iter().map(|&s| values[s]).collect(),
        distances: scored.iter().map(|p| p.0).collect(),
        alphas: scored.iter().map(|p| p.1).collect(),
        chosen_xmin: values[starts[best]],
        tail_n: n - starts[best],
        alpha_at_choice: scored[best].1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DistributionModel;

    /// Direct O(m) oracle: conditional ECDF vs Pareto CDF, both sides.
    fn oracle(values: &[f64], x_min: f64) -> f64 {
        let tail: Vec<f64> = values.iter().copied().filter(|&x| x >= x_min).collect();
        let m = tail.len() as f64;
        let alpha = 1.0 + m / tail.iter().map(|x| (x / x_min).ln()).sum::<f64>();
        let cdf = |x: f64| 1.0 - (x / x_min).powf(1.0 - alpha);
        let mut d: f64 = 0.0;
        for &x in &tail {
            let below = tail.iter().filter(|&&t| t < x).count() as f64 / m;
            let at = tail.iter().filter(|&&t| t <= x).count() as f64 / m;
            d = d.max((at - cdf(x)).abs()).max((cdf(x) - below).abs());
        }
        d
    }

    #[test]
    fn distances_match_oracle() {
        let s = DistributionModel::lognormal(3.0, 1.0)
            .unwrap()
            .sample(400, 1);
        let scan = select_xmin(&s, &TailConfig::default()).unwrap();
        for (j, &c) in scan.candidates.iter().enumerate().step_by(37) {
            let want = oracle(s.values(), c);
            assert!((scan.distances[j] - want).abs() < 1e-12, "{c}");
        }
    }

    #[test]
    fn ties_are_handled_like_the_oracle() {
        let mut v: Vec<f64> = (0..150).map(|i| 10.0 + (i / 3) as f64).collect();
        v.extend([500.0; 10]);
        let s = Sample::new(v).unwrap();
        let scan = select_xmin(&s, &TailConfig::default()).unwrap();
        for (j, &c) in scan.candidates.iter().enumerate() {
            assert!((scan.distances[j] - oracle(s.values(), c)).abs() < 1e-12);
        }
        assert!(scan.tail_n >= 50);
    }

    #[test]
    fn too_few_points() {
        let s = Sample::new((1..=60).map(f64::from).collect()).unwrap();
        assert!(matches!(
            select_xmin(&s, &TailConfig::default()),
            Err(TailError::InsufficientSample {
                needed: 100,
                got: 60
            })
        ));
    }

    #[test]
    fn candidate_cap_respected() {
        let s = DistributionModel::pareto(2.0, 1.0).unwrap().sample(3000, 2);
        let cfg = TailConfig {
            n_floor: 50,
            max_candidates: 100,
        };
        let scan = select_xmin(&s, &cfg).unwrap();
        assert!(scan.candidates.len() <= 100);
        assert_eq!(scan.candidates[0], s.min());
        assert!(scan.candidates.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn pure_pareto_picks_low_cutoff() {
        let s = DistributionModel::pareto(2.0, 10.0)
            .unwrap()
            .sample(5000, 5);
        let scan = select_xmin(&s, &TailConfig::default()).unwrap();
        let decile = s.values()[s.len() / 10];
        assert!(
            scan.chosen_xmin <= decile,
            "{} > {}",
            scan.chosen_xmin,
            decile
        );
        assert!((scan.alpha_at_choice - 2.0).abs() < 0.15);
    }
}
