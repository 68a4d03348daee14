//! Fitting, testing and comparing heavy-tailed size distributions.
//!
//! The crate covers five families of positive size laws (stretched
//! exponential, lognormal, lognormal mixtures, Pareto and truncated
//! lognormal), maximum-likelihood estimation with observed-information
//! standard errors, KS-based power-law cutoff selection, parametric
//! bootstrap goodness-of-fit tests, information criteria and the Vuong
//! test, and Euler–Maruyama simulation of the diffusions whose stationary
//! laws are the log-space images of those families.

pub mod fitting;
pub mod gof;
pub mod model;
pub mod pipeline;
pub mod sample;
pub mod sde;
pub mod selection;
pub mod special;
pub mod tail;

pub use model::{DistributionModel, Family, ModelError, Space};
pub use sample::{sub_seed, Sample, SampleError};
