//! Cox proportional-hazards baseline with Breslow ties.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{DiscretizationGrid, PatientRecord};
use crate::error::{Error, Result};
use crate::model::HazardCurve;

/// Norm beyond which coefficients are treated as diverging.
pub const DIVERGENCE_NORM: f64 = 1e3;
pub const RIDGE_FALLBACK: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoxOptions {
    pub max_iter: usize,
    /// Convergence threshold on the max-norm of the score.
    pub tol: f64,
}

impl Default for CoxOptions {
    fn default() -> Self {
        CoxOptions {
            max_iter: 100,
            tol: 1e-6,
        }
    }
}

/// Breslow cumulative baseline hazard, a step function over event times.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BreslowBaseline {
    pub times: Vec<f64>,
    pub cumhaz: Vec<f64>,
    /// Largest training duration; the open-ended last bin is evaluated here.
    pub max_time: f64,
}

impl BreslowBaseline {
    pub fn at(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&s| s <= t);
        if k == 0 {
            0.0
        } else {
            self.cumhaz[k - 1]
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoxModel {
    pub beta: Vec<f64>,
    pub baseline: Option<BreslowBaseline>,
    /// Ridge penalty used in the final fit (0 unless the fallback fired).
    pub ridge: f64,
    pub iterations: usize,
    /// Penalized partial log-likelihood after each accepted iterate,
    /// starting from `beta = 0`.
    pub log_likelihood: Vec<f64>,
}

/// Breslow partial log-likelihood with its score and Hessian.
pub struct PartialLikelihood {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub hessian: Vec<Vec<f64>>,
}

fn descending_time_order(durations: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..durations.len()).collect();
    idx.sort_by(|&a, &b| durations[b].total_cmp(&durations[a]).then(a.cmp(&b)));
    idx
}

pub fn partial_log_likelihood(x: &[Vec<f64>], durations: &[f64], events: &[bool], beta: &[f64]) -> PartialLikelihood {
    let p = beta.len();
    let order = descending_time_order(durations);
    let lp: Vec<f64> = x.iter().map(|r| r.iter().zip(beta).map(|(a, b)| a * b).sum()).collect();
    // Shift by the max linear predictor so the exponentials stay finite.
    let shift = lp.iter().copied().fold(f64::NEG_INFINITY, f64::max).max(0.0);
    let mut s0 = 0.0;
    let mut s1 = vec![0.0; p];
    let mut s2 = vec![vec![0.0; p]; p];
    let mut value = 0.0;
    let mut gradient = vec![0.0; p];
    let mut hessian = vec![vec![0.0; p]; p];
    let mut k = 0;
    while k < order.len() {
        let t = durations[order[k]];
        let mut end = k;
        while end < order.len() && durations[order[end]] == t {
            let i = order[end];
            let w = (lp[i] - shift).exp();
            s0 += w;
            for a in 0..p {
                s1[a] += w * x[i][a];
                for b in 0..p {
                    s2[a][b] += w * x[i][a] * x[i][b];
                }
            }
            end += 1;
        }
        for &i in &order[k..end] {
            if !events[i] {
                continue;
            }
            value += lp[i] - shift - s0.ln();
            for a in 0..p {
                let mean_a = s1[a] / s0;
                gradient[a] += x[i][a] - mean_a;
                for b in 0..p {
                    hessian[a][b] -= s2[a][b] / s0 - mean_a * s1[b] / s0;
                }
            }
        }
        k = end;
    }
    PartialLikelihood {
        value,
        gradient,
        hessian,
    }
}

fn penalized(x: &[Vec<f64>], d: &[f64], e: &[bool], beta: &[f64], ridge: f64) -> PartialLikelihood {
    let mut pl = partial_log_likelihood(x, d, e, beta);
    if ridge > 0.0 {
        pl.value -= 0.5 * ridge * beta.iter().map(|b| b * b).sum::<f64>();
        for (a, b) in beta.iter().enumerate() {
            pl.gradient[a] -= ridge * b;
            pl.hessian[a][a] -= ridge;
        }
    }
    pl
}

/// Newton direction `(-H)^{-1} g`.
const REL_LL_TOL: f64 = 1e-9;

fn newton_step(pl: &PartialLikelihood) -> Option<Vec<f64>> {
    let p = pl.gradient.len();
    let info = DMatrix::from_fn(p, p, |a, b| -pl.hessian[a][b]);
    let g = DVector::from_column_slice(&pl.gradient);
    let step = match info.clone().cholesky() {
        Some(ch) => ch.solve(&g),
        None => info.lu().solve(&g)?,
    };
    step.iter()
        .all(|v| v.is_finite())
        .then(|| step.iter().copied().collect())
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

enum Outcome {
    Converged(CoxModel),
    Diverged,
}

fn newton(x: &[Vec<f64>], d: &[f64], e: &[bool], ridge: f64, opts: &CoxOptions) -> Result<Outcome> {
    let p = x.first().map_or(0, Vec::len);
    let mut beta = vec![0.0; p];
    let mut pl = penalized(x, d, e, &beta, ridge);
    let mut trace = vec![pl.value];
    for iter in 0..=opts.max_iter {
        let step = newton_step(&pl);
        // Score below tolerance, or a Newton decrement that is negligible
        // relative to the log-likelihood (floating-point floor on large n).
        let flat = step.as_ref().is_some_and(|s| {
            let decrement: f64 = s.iter().zip(&pl.gradient).map(|(a, b)| a * b).sum();
            decrement.abs() <= REL_LL_TOL * pl.value.abs().max(1.0)
        });
        if max_abs(&pl.gradient) < opts.tol || flat {
            // A large remaining Newton step means the likelihood is still
            // rising along a direction: an infinite MLE.
            if ridge == 0.0 {
                if let Some(step) = &step {
                    let runaway = step
                        .iter()
                        .zip(&beta)
                        .any(|(s, b)| s.abs() > opts.tol.sqrt() * b.abs().max(1.0));
                    if runaway {
                        return Ok(Outcome::Diverged);
                    }
                }
            }
            return Ok(Outcome::Converged(CoxModel {
                beta,
                baseline: None,
                ridge,
                iterations: iter,
                log_likelihood: trace,
            }));
        }
        if iter == opts.max_iter {
            break;
        }
        let Some(step) = step else {
            return Ok(Outcome::Diverged);
        };
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let cand: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b + scale * s).collect();
            let cpl = penalized(x, d, e, &cand, ridge);
            if cpl.value.is_finite() && cpl.value >= pl.value {
                accepted = Some((cand, cpl));
                break;
            }
            scale *= 0.5;
        }
        let Some((cand, cpl)) = accepted else {
            break;
        };
        beta = cand;
        pl = cpl;
        trace.push(pl.value);
        if norm(&beta) > DIVERGENCE_NORM {
            return Ok(Outcome::Diverged);
        }
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iter,
        grad_norm: max_abs(&pl.gradient),
        beta,
    })
}

/// Fits on continuous durations. Columns with zero variance keep a zero
/// coefficient. Diverging coefficients trigger one refit with a small ridge
/// penalty.
pub fn fit_cox_raw(x: &[Vec<f64>], durations: &[f64], events: &[bool], opts: &CoxOptions) -> Result<CoxModel> {
    let n = x.len();
    if n == 0 || durations.len() != n || events.len() != n {
        return Err(Error::usage("cox fit needs equally long, non-empty inputs"));
    }
    if !events.iter().any(|&e| e) {
        return Err(Error::config("cox fit needs at least one event"));
    }
    let p = x[0].len();
    let active: Vec<usize> = (0..p)
        .filter(|&j| {
            let mean = x.iter().map(|r| r[j]).sum::<f64>() / n as f64;
            x.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n as f64 > 1e-24
        })
        .collect();
    let xa: Vec<Vec<f64>> = x.iter().map(|r| active.iter().map(|&j| r[j]).collect()).collect();
    let mut fit = match newton(&xa, durations, events, 0.0, opts)? {
        Outcome::Converged(m) => m,
        Outcome::Diverged => {
            log::warn!("cox coefficients diverge (separable data); refitting with ridge {RIDGE_FALLBACK}");
            match newton(&xa, durations, events, RIDGE_FALLBACK, opts)? {
                Outcome::Converged(m) => m,
                Outcome::Diverged => {
                    let pl = penalized(&xa, durations, events, &vec![0.0; active.len()], RIDGE_FALLBACK);
                    return Err(Error::NonConvergence {
                        iterations: opts.max_iter,
                        grad_norm: max_abs(&pl.gradient),
                        beta: vec![],
                    });
                }
            }
        }
    };
    let mut beta = vec![0.0; p];
    for (k, &j) in active.iter().enumerate() {
        beta[j] = fit.beta[k];
    }
    fit.beta = beta;
    fit.baseline = Some(breslow(x, durations, events, &fit.beta));
    Ok(fit)
}

pub fn fit_cox(records: &[PatientRecord], opts: &CoxOptions) -> Result<CoxModel> {
    let x: Vec<Vec<f64>> = records.iter().map(|r| r.x.clone()).collect();
    let d: Vec<f64> = records.iter().map(|r| r.duration).collect();
    let e: Vec<bool> = records.iter().map(|r| r.event).collect();
    fit_cox_raw(&x, &d, &e, opts)
}

/// `Λ₀(t) = Σ_{event times s ≤ t} d_s / Σ_{j: T_j ≥ s} exp(x_j'β)`.
pub fn breslow(x: &[Vec<f64>], durations: &[f64], events: &[bool], beta: &[f64]) -> BreslowBaseline {
    let order = descending_time_order(durations);
    let risk: Vec<f64> = x.iter().map(|r| cox_risk_with(beta, r).exp()).collect();
    let mut at_risk = 0.0;
    let mut steps = Vec::new();
    let mut k = 0;
    while k < order.len() {
        let t = durations[order[k]];
        let mut deaths = 0usize;
        while k < order.len() && durations[order[k]] == t {
            at_risk += risk[order[k]];
            deaths += usize::from(events[order[k]]);
            k += 1;
        }
        if deaths > 0 {
            steps.push((t, deaths as f64 / at_risk));
        }
    }
    steps.reverse();
    let mut total = 0.0;
    let (times, cumhaz) = steps
        .into_iter()
        .map(|(t, h)| {
            total += h;
            (t, total)
        })
        .unzip();
    BreslowBaseline {
        times,
        cumhaz,
        max_time: durations.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    }
}

fn cox_risk_with(beta: &[f64], x: &[f64]) -> f64 {
    beta.iter().zip(x).map(|(b, v)| b * v).sum()
}

/// Linear predictor `x'β`.
pub fn cox_risk(model: &CoxModel, x: &[f64]) -> f64 {
    cox_risk_with(&model.beta, x)
}

/// `S(t|x) = exp(-Λ₀(t)·exp(x'β))` at the right edge of each bin; the
/// open last bin uses the largest training duration.
pub fn cox_survival_curve(model: &CoxModel, x: &[f64], grid: &DiscretizationGrid) -> Result<HazardCurve> {
    let base = model
        .baseline
        .as_ref()
        .ok_or_else(|| Error::usage("cox model has no baseline hazard"))?;
    let hr = cox_risk(model, x).exp();
    let survival = grid
        .cuts()
        .iter()
        .copied()
        .chain(std::iter::once(
            base.max_time.max(*grid.cuts().last().expect("non-empty grid")),
        ))
        .map(|t| (-base.at(t) * hr).exp())
        .collect();
    Ok(HazardCurve::from_survival(survival))
}
