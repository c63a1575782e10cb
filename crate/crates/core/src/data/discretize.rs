use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BinningScheme {
    #[default]
    Quantile,
    Uniform,
}

impl FromStr for BinningScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quantile" => Ok(BinningScheme::Quantile),
            "uniform" => Ok(BinningScheme::Uniform),
            other => Err(Error::config(format!(
                "unknown binning scheme '{other}' (expected quantile or uniform)"
            ))),
        }
    }
}

impl fmt::Display for BinningScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BinningScheme::Quantile => "quantile",
            BinningScheme::Uniform => "uniform",
        })
    }
}

/// `t_max` ascending cut points splitting time into bins `0..=t_max`.
/// Bin `k` is `(cut[k-1], cut[k]]`; bin 0 is everything up to `cut[0]` and
/// bin `t_max` everything beyond the last cut.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscretizationGrid {
    cuts: Vec<f64>,
}

impl DiscretizationGrid {
    pub fn from_cuts(cuts: Vec<f64>) -> Result<Self> {
        if cuts.is_empty() || cuts.iter().any(|c| !c.is_finite()) || cuts.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("cut points must be finite and strictly increasing"));
        }
        Ok(DiscretizationGrid { cuts })
    }

    pub fn cuts(&self) -> &[f64] {
        &self.cuts
    }

    pub fn t_max(&self) -> usize {
        self.cuts.len()
    }

    pub fn num_bins(&self) -> usize {
        self.cuts.len() + 1
    }

    /// Bin index of a duration; never exceeds `t_max`.
    pub fn bin(&self, duration: f64) -> usize {
        self.cuts.partition_point(|&c| c < duration)
    }
}

/// Linear-interpolation empirical quantile of sorted data.
pub(crate) fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Fits `t_max` cut points so that durations fall into `t_max + 1` bins:
/// equally spaced empirical quantiles, or equally spaced times over
/// `[min, max]`.
pub fn fit_discretization(durations: &[f64], t_max: usize, scheme: BinningScheme) -> Result<DiscretizationGrid> {
    if t_max < 2 {
        return Err(Error::config(format!("t_max must be at least 2, got {t_max}")));
    }
    let mut sorted: Vec<f64> = durations.to_vec();
    if sorted.iter().any(|d| !d.is_finite()) {
        return Err(Error::config("durations must be finite"));
    }
    sorted.sort_by(f64::total_cmp);
    let (Some(&min), Some(&max)) = (sorted.first(), sorted.last()) else {
        return Err(Error::config("cannot discretize an empty duration vector"));
    };
    if min == max {
        return Err(Error::config("all durations are equal; cannot build a time grid"));
    }
    let bins = (t_max + 1) as f64;
    let cuts: Vec<f64> = match scheme {
        BinningScheme::Uniform => (1..=t_max).map(|k| min + (max - min) * k as f64 / bins).collect(),
        BinningScheme::Quantile => {
            let mut distinct = sorted.clone();
            distinct.dedup();
            if distinct.len() < t_max {
                return Err(Error::config(format!(
                    "quantile binning with t_max={t_max} needs at least {t_max} distinct durations, found {}",
                    distinct.len()
                )));
            }
            (1..=t_max).map(|k| quantile_sorted(&sorted, k as f64 / bins)).collect()
        }
    };
    DiscretizationGrid::from_cuts(cuts).map_err(|_| {
        Error::config(format!(
            "too many tied durations for {} {scheme} bins; lower t_max",
            t_max + 1
        ))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn one_to_hundred() -> Vec<f64> {
        (1..=100).map(f64::from).collect()
    }

    #[test]
    fn uniform_cuts_over_one_to_hundred() {
        // Width (100 - 1) / (t_max + 1).
        let g = fit_discretization(&one_to_hundred(), 4, BinningScheme::Uniform).unwrap();
        let expect = [20.8, 40.6, 60.4, 80.2];
        for (c, e) in g.cuts().iter().zip(expect) {
            assert!((c - e).abs() < 1e-12, "{c} vs {e}");
        }
        assert_eq!(g.num_bins(), 5);
        let used: std::collections::BTreeSet<usize> = one_to_hundred().iter().map(|&d| g.bin(d)).collect();
        assert_eq!(used.into_iter().collect::<Vec<_>>(), vec![0, 1, 2, 3, 4]);

        let g3 = fit_discretization(&one_to_hundred(), 3, BinningScheme::Uniform).unwrap();
        let expect = [25.75, 50.5, 75.25];
        for (c, e) in g3.cuts().iter().zip(expect) {
            assert!((c - e).abs() < 1e-12);
        }
    }

    #[test]
    fn durations_below_first_cut_map_to_zero() {
        let g = DiscretizationGrid::from_cuts(vec![10.0, 20.0, 30.0]).unwrap();
        assert!([0.0, 1.0, 9.99, 10.0].iter().all(|&d| g.bin(d) == 0));
        assert_eq!(g.bin(10.5), 1);
        assert_eq!(g.bin(1e9), 3);
    }

    #[test]
    fn degenerate_durations_rejected() {
        assert!(matches!(
            fit_discretization(&[5.0; 10], 3, BinningScheme::Uniform),
            Err(Error::Config(_))
        ));
        assert!(fit_discretization(&[1.0, 2.0], 1, BinningScheme::Uniform).is_err());
        assert!(fit_discretization(&[1.0, 2.0, 2.0], 4, BinningScheme::Quantile).is_err());
    }

    #[test]
    fn quantile_matches_uniform_on_uniform_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let data: Vec<f64> = (0..10_000).map(|_| rng.random_range(0.0..50.0)).collect();
        let q = fit_discretization(&data, 9, BinningScheme::Quantile).unwrap();
        let u = fit_discretization(&data, 9, BinningScheme::Uniform).unwrap();
        let range = 50.0;
        for (a, b) in q.cuts().iter().zip(u.cuts()) {
            assert!((a - b).abs() < 0.05 * range);
        }
    }

    proptest! {
        #[test]
        fn bins_are_monotone_and_clamped(
            mut train in proptest::collection::vec(0.0f64..100.0, 30..80),
            probe in proptest::collection::vec(-50.0f64..500.0, 1..40),
            t_max in 2usize..12,
        ) {
            train.push(0.0);
            train.push(100.0);
            let g = fit_discretization(&train, t_max, BinningScheme::Uniform).unwrap();
            let mut sorted = probe.clone();
            sorted.sort_by(f64::total_cmp);
            let bins: Vec<usize> = sorted.iter().map(|&d| g.bin(d)).collect();
            prop_assert!(bins.windows(2).all(|w| w[0] <= w[1]));
            prop_assert!(bins.iter().all(|&b| b <= t_max));
        }
    }
}
