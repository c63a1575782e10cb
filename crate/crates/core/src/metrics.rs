//! Concordance metrics for right-censored discrete-time data.
//!
//! Counts are kept in integer half-units so results do not depend on the
//! order in which pairs are visited.

use serde::{Deserialize, Serialize};

use crate::data::quantile_sorted;
use crate::error::{Error, Result};
use crate::model::HazardCurve;

/// Risk differences at or below this are ties.
pub const TIE_TOL: f64 = 1e-12;

pub const DEFAULT_PERCENTILES: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConcordanceResult {
    pub value: f64,
    pub comparable_pairs: u64,
    /// Concordant pairs, ties counted as one half.
    pub concordant: f64,
}

impl ConcordanceResult {
    fn from_halves(halves: u64, pairs: u64, what: &str) -> Result<Self> {
        if pairs == 0 {
            return Err(Error::UndefinedMetric(format!("{what}: no comparable pairs")));
        }
        Ok(ConcordanceResult {
            value: halves as f64 / (2 * pairs) as f64,
            comparable_pairs: pairs,
            concordant: halves as f64 / 2.0,
        })
    }
}

/// 2 if `a` is riskier than `b`, 1 on a tie, 0 otherwise.
fn credit(a: f64, b: f64) -> u64 {
    if (a - b).abs() <= TIE_TOL {
        1
    } else if a > b {
        2
    } else {
        0
    }
}

fn check_lengths(n: usize, tau: &[usize], event: &[bool]) -> Result<()> {
    if tau.len() != n || event.len() != n {
        return Err(Error::usage(format!(
            "length mismatch: {n} risks, {} times, {} events",
            tau.len(),
            event.len()
        )));
    }
    Ok(())
}

fn order_by_time(tau: &[usize]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..tau.len()).collect();
    idx.sort_by_key(|&i| (tau[i], i));
    idx
}

/// Harrell's C. A pair is comparable when the earlier subject had the event;
/// at equal times only event-versus-censored pairs count.
pub fn harrell_cindex(risk: &[f64], tau: &[usize], event: &[bool]) -> Result<ConcordanceResult> {
    check_lengths(risk.len(), tau, event)?;
    let order = order_by_time(tau);
    let (mut halves, mut pairs) = (0u64, 0u64);
    for (pos, &i) in order.iter().enumerate() {
        if !event[i] {
            continue;
        }
        // Same-time subjects precede and follow `i` in the sorted order.
        let start = order[..pos].partition_point(|&j| tau[j] < tau[i]);
        for &j in order[start..].iter().filter(|&&j| j != i) {
            if tau[j] == tau[i] && event[j] {
                continue;
            }
            pairs += 1;
            halves += credit(risk[i], risk[j]);
        }
    }
    ConcordanceResult::from_halves(halves, pairs, "C-index")
}

/// Negative expected number of survived bins; higher means riskier.
pub fn model_risk_score(curve: &HazardCurve) -> f64 {
    -curve.survival.iter().sum::<f64>()
}

/// Concordance of `1 - S(h)` among pairs decided by horizon `h`: the first
/// subject had its event at or before `h` and strictly before the second.
pub fn td_cindex(curves: &[HazardCurve], tau: &[usize], event: &[bool], h: usize) -> Result<ConcordanceResult> {
    check_lengths(curves.len(), tau, event)?;
    let mut risk = Vec::with_capacity(curves.len());
    for c in curves {
        let s = c
            .survival
            .get(h)
            .ok_or_else(|| Error::usage(format!("horizon {h} beyond {} bins", c.num_bins())))?;
        risk.push(1.0 - s);
    }
    let order = order_by_time(tau);
    let (mut halves, mut pairs) = (0u64, 0u64);
    for (pos, &i) in order.iter().enumerate() {
        if !event[i] || tau[i] > h {
            continue;
        }
        let later = pos + order[pos..].partition_point(|&j| tau[j] <= tau[i]);
        for &j in &order[later..] {
            pairs += 1;
            halves += credit(risk[i], risk[j]);
        }
    }
    ConcordanceResult::from_halves(halves, pairs, &format!("time-dependent C-index at bin {h}"))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HorizonGrid {
    pub percentiles: Vec<f64>,
    pub bins: Vec<usize>,
}

/// Percentiles of the event times (linear interpolation), floored to a bin.
pub fn fit_horizons(tau: &[usize], event: &[bool], percentiles: &[f64]) -> Result<HorizonGrid> {
    check_lengths(tau.len(), tau, event)?;
    let mut times: Vec<f64> = tau
        .iter()
        .zip(event)
        .filter(|(_, &e)| e)
        .map(|(&t, _)| t as f64)
        .collect();
    if times.is_empty() {
        return Err(Error::UndefinedMetric("no events to place horizons".into()));
    }
    times.sort_by(f64::total_cmp);
    let bins = percentiles
        .iter()
        .map(|&p| quantile_sorted(&times, p).floor() as usize)
        .collect();
    Ok(HorizonGrid {
        percentiles: percentiles.to_vec(),
        bins,
    })
}

/// Overall and per-horizon concordance on one evaluation set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub cindex: ConcordanceResult,
    pub horizons: HorizonGrid,
    /// `None` where a horizon had no comparable pairs.
    pub td: Vec<Option<ConcordanceResult>>,
}

impl MetricReport {
    pub fn mean_td(&self) -> Option<f64> {
        let vals: Vec<f64> = self.td.iter().flatten().map(|c| c.value).collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }
}

pub fn evaluate_curves(
    curves: &[HazardCurve],
    risk: &[f64],
    tau: &[usize],
    event: &[bool],
    percentiles: &[f64],
) -> Result<MetricReport> {
    let cindex = harrell_cindex(risk, tau, event)?;
    let horizons = fit_horizons(tau, event, percentiles)?;
    let td = horizons
        .bins
        .iter()
        .zip(&horizons.percentiles)
        .map(|(&h, &p)| match td_cindex(curves, tau, event, h) {
            Ok(c) => Ok(Some(c)),
            Err(Error::UndefinedMetric(msg)) => {
                log::warn!("skipping {:.0}% horizon: {msg}", p * 100.0);
                Ok(None)
            }
            Err(e) => Err(e),
        })
        .collect::<Result<_>>()?;
    Ok(MetricReport { cindex, horizons, td })
}
