use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SampleError {
    #[error("sample is empty")]
    Empty,
    #[error("value {value} at position {index} is not a finite positive size")]
    NotPositive { index: usize, value: f64 },
    #[error("log value {value} at position {index} is not finite")]
    NotFinite { index: usize, value: f64 },
}

/// Sorted positive sizes together with their natural logarithms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    values: Vec<f64>,
    logs: Vec<f64>,
}

impl Sample {
    /// Validates and sorts a collection of sizes.
    pub fn new(mut values: Vec<f64>) -> Result<Self, SampleError> {
        if values.is_empty() {
            return Err(SampleError::Empty);
        }
        if let Some((index, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v > 0.0))
        {
            return Err(SampleError::NotPositive { index, value });
        }
        values.sort_by(f64::total_cmp);
        let logs = values.iter().map(|v| v.ln()).collect();
        Ok(Self { values, logs })
    }

    /// Builds a sample from log-sizes; the sizes are their exponentials.
    ///
    /// The logs are kept exactly as given, which matters for log-space
    /// models whose support starts at a boundary such as `y_min`.
    pub fn from_logs(mut logs: Vec<f64>) -> Result<Self, SampleError> {
        if logs.is_empty() {
            return Err(SampleError::Empty);
        }
        if let Some((index, &value)) = logs.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(SampleError::NotFinite { index, value });
        }
        logs.sort_by(f64::total_cmp);
        let values = logs.iter().map(|y| y.exp()).collect();
        Ok(Self { values, logs })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn logs(&self) -> &[f64] {
        &self.logs
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    /// Values at or above `x_min`, i.e. the upper tail used for power-law
    /// and truncated fits.
    pub fn tail(&self, x_min: f64) -> Option<Sample> {
        let start = self.values.partition_point(|&v| v < x_min);
        if start == self.values.len() {
            return None;
        }
        Some(Sample {
            values: self.values[start..].to_vec(),
            logs: self.logs[start..].to_vec(),
        })
    }

    /// Mean and population (divisor n) standard deviation of the logs.
    pub fn log_moments(&self) -> (f64, f64) {
        let n = self.logs.len() as f64;
        let mean = self.logs.iter().sum::<f64>() / n;
        let var = self.logs.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n;
        (mean, var.sqrt())
    }
}

/// Derives an independent stream seed from a master seed and an index.
///
/// SplitMix64 finalizer over a mix of both inputs, so replicate `r` gets the
/// same stream regardless of which worker runs it.
pub fn sub_seed(seed: u64, index: u64) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    mix(seed ^ mix(index.wrapping_add(0x632B_E59B_D9B4_E019)))
}
