use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sample::Sample;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("descriptive statistics need at least 2 observations, got {0}")]
pub struct DescribeError(pub usize);

/// Summary of a sample. SDs use the divisor `n − 1`; skewness and raw
/// (non-excess) kurtosis of the logs use divisor-`n` central moments and
/// are `None` when the logs have no spread.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptiveStats {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub log_mean: f64,
    pub log_sd: f64,
    pub log_skewness: Option<f64>,
    pub log_kurtosis: Option<f64>,
    pub min: f64,
    pub max: f64,
}

fn mean_and_sample_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let ss = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>();
    (mean, (ss / (n - 1.0)).sqrt())
}

pub fn describe(sample: &Sample) -> Result<DescriptiveStats, DescribeError> {
    let n = sample.len();
    if n < 2 {
        return Err(DescribeError(n));
    }
    let (mean, sd) = mean_and_sample_sd(sample.values());
    let (log_mean, log_sd) = mean_and_sample_sd(sample.logs());
    let nf = n as f64;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &y in sample.logs() {
        let d = y - log_mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= nf;
    m3 /= nf;
    m4 /= nf;
    let spread = m2 > 0.0;
    Ok(DescriptiveStats {
        n,
        mean,
        sd,
        log_mean,
        log_sd,
        log_skewness: spread.then(|| m3 / m2.powf(1.5)),
        log_kurtosis: spread.then(|| m4 / (m2 * m2)),
        min: sample.min(),
        max: sample.max(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::DistributionModel;

    #[test]
    fn constant_sample_has_undefined_shape() {
        let s = Sample::new(vec![4.0; 5]).unwrap();
        let d = describe(&s).unwrap();
        assert_eq!(d.sd, 0.0);
        assert!(d.log_skewness.is_none() && d.log_kurtosis.is_none());
        assert!(describe(&Sample::new(vec![1.0]).unwrap()).is_err());
    }

    #[test]
    fn normal_logs_have_normal_shape() {
        let s = DistributionModel::lognormal(0.0, 1.0)
            .unwrap()
            .sample(1_000_000, 8);
        let d = describe(&s).unwrap();
        assert!(d.log_skewness.unwrap().abs() < 0.01);
        assert!((d.log_kurtosis.unwrap() - 3.0).abs() < 0.03);
    }

    #[test]
    fn pareto_log_mean_identity() {
        let (alpha, x_min) = (2.007, 31680.0);
        let s = DistributionModel::pareto(alpha, x_min)
            .unwrap()
            .sample(200_000, 3);
        let d = describe(&s).unwrap();
        assert!((d.log_mean - x_min.ln() - 1.0 / (alpha - 1.0)).abs() < 0.01);
    }
}
