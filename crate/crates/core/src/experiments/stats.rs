use rayon::prelude::*;
use serde::Serialize;

use super::sampling::PerturbationSample;
use crate::error::{Error, Result};
use crate::mdp::{expected_reward, MdpInstance, Policy};
use crate::numerics::pairwise_sum;

/// Mean and 95% half-width of `100·R(π, P)/normalizer` over a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EmpiricalStats {
    pub mean: f64,
    pub conf95: f64,
    pub n: usize,
    pub normalizer: f64,
}

impl EmpiricalStats {
    /// Statistics of already-scaled values; `std` is the population standard deviation.
    pub fn from_values(values: &[f64], normalizer: f64) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput);
        }
        let n = values.len();
        let mean = pairwise_sum(values) / n as f64;
        let sq: Vec<f64> = values.iter().map(|x| (x - mean) * (x - mean)).collect();
        let std = (pairwise_sum(&sq) / n as f64).sqrt();
        Ok(EmpiricalStats {
            mean,
            conf95: 1.96 * std / (n as f64).sqrt(),
            n,
            normalizer,
        })
    }
}

pub fn empirical_stats(
    inst: &MdpInstance,
    pi: &Policy,
    sample: &PerturbationSample,
    normalizer: f64,
) -> Result<EmpiricalStats> {
    if !(normalizer > 0.0) {
        return Err(Error::invalid("normalizer", "must be positive"));
    }
    let values = sample
        .kernels
        .par_iter()
        .map(|p| Ok(100.0 * expected_reward(inst, pi, p)? / normalizer))
        .collect::<Result<Vec<f64>>>()?;
    EmpiricalStats::from_values(&values, normalizer)
}
