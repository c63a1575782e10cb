use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub seed: u64,
    /// (train, validation, test)
    pub fractions: [f64; 3],
}

impl SplitSpec {
    pub const DEFAULT_FRACTIONS: [f64; 3] = [0.6, 0.2, 0.2];

    pub fn new(seed: u64) -> Self {
        SplitSpec {
            seed,
            fractions: Self::DEFAULT_FRACTIONS,
        }
    }
}

/// Row indices of each partition, ascending within a partition.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

pub fn split(n: usize, spec: &SplitSpec) -> Result<SplitIndices> {
    let [ft, fv, fs] = spec.fractions;
    if spec.fractions.iter().any(|f| !(0.0..=1.0).contains(f)) || (ft + fv + fs - 1.0).abs() > 1e-9 {
        return Err(Error::config(format!(
            "split fractions {:?} must be in [0,1] and sum to 1",
            spec.fractions
        )));
    }
    let n_train = (ft * n as f64).round() as usize;
    let n_val = ((fv * n as f64).round() as usize).min(n - n_train.min(n));
    if n_train == 0 || n_val == 0 || n_train + n_val >= n {
        return Err(Error::config(format!(
            "split of {n} rows with fractions {:?} leaves an empty partition",
            spec.fractions
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(spec.seed, "split"));
    let mut train = order[..n_train].to_vec();
    let mut val = order[n_train..n_train + n_val].to_vec();
    let mut test = order[n_train + n_val..].to_vec();
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    Ok(SplitIndices { train, val, test })
}
