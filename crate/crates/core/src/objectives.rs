//! Discrete-time likelihood and the two router load-balancing penalties.
//!
//! Each term exists twice: on plain curves and routing traces (for
//! reporting and reference checks) and on graph nodes (for training).

use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Matrix, Var};
use crate::data::PatientRecord;
use crate::error::{Error, Result};
use crate::model::{DualMoe, DualMoeConfig, ForwardVars, GraphBatch, HazardCurve, RoutingTrace};

/// Floor applied to probabilities before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub nll: f64,
    pub lb_feat: f64,
    pub lb_haz: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn new(nll: f64, lb_feat: f64, lb_haz: f64) -> Self {
        LossBreakdown {
            nll,
            lb_feat,
            lb_haz,
            total: nll + lb_feat + lb_haz,
        }
    }
}

/// Batch means of the routing probabilities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchRoutingStats {
    pub pi_bar_feat: Vec<f64>,
    /// `(t_max + 1) × L`.
    pub pi_bar_haz: Matrix,
}

impl BatchRoutingStats {
    pub fn from_traces(traces: &[RoutingTrace]) -> Result<Self> {
        let Some(first) = traces.first() else {
            return Err(Error::usage("routing statistics of an empty batch"));
        };
        let n = traces.len() as f64;
        let mut pi_bar_feat = vec![0.0; first.pi_feat.len()];
        let mut pi_bar_haz = Matrix::zeros(first.pi_haz.rows(), first.pi_haz.cols());
        for tr in traces {
            for (a, b) in pi_bar_feat.iter_mut().zip(&tr.pi_feat) {
                *a += b / n;
            }
            for (a, b) in pi_bar_haz.data_mut().iter_mut().zip(tr.pi_haz.data()) {
                *a += b / n;
            }
        }
        Ok(BatchRoutingStats {
            pi_bar_feat,
            pi_bar_haz,
        })
    }
}

/// Mean over records of `-[δ log p(τ) + (1-δ) log S(τ)]`.
pub fn nll_loss(curves: &[HazardCurve], records: &[PatientRecord]) -> Result<f64> {
    if curves.len() != records.len() || curves.is_empty() {
        return Err(Error::usage(format!(
            "nll over {} curves and {} records",
            curves.len(),
            records.len()
        )));
    }
    let mut total = 0.0;
    for (c, r) in curves.iter().zip(records) {
        if r.tau >= c.num_bins() {
            return Err(Error::config(format!("tau {} outside {} bins", r.tau, c.num_bins())));
        }
        let prob = if r.event {
            c.event_mass[r.tau]
        } else {
            c.survival[r.tau]
        };
        total -= prob.max(PROB_FLOOR).ln();
    }
    Ok(total / records.len() as f64)
}

pub fn lb_feat_loss(stats: &BatchRoutingStats, k: usize, alpha: f64) -> f64 {
    let sq: f64 = stats.pi_bar_feat.iter().map(|p| p * p).sum();
    alpha * (k as f64 * sq - 1.0)
}

/// Per-bin balance penalty `L Σ_l π̄²` averaged over the `t_max + 1` bins.
pub fn lb_haz_loss(stats: &BatchRoutingStats, l: usize, t_max: usize, beta: f64) -> f64 {
    let bins = &stats.pi_bar_haz;
    let per_bin: f64 = (0..bins.rows())
        .map(|t| l as f64 * bins.row(t).iter().map(|p| p * p).sum::<f64>())
        .sum();
    beta * (per_bin / (t_max + 1) as f64 - 1.0)
}

pub fn total_loss(
    curves: &[HazardCurve],
    records: &[PatientRecord],
    stats: &BatchRoutingStats,
    config: &DualMoeConfig,
) -> Result<LossBreakdown> {
    let nll = nll_loss(curves, records)?;
    let lb_feat = if config.feature_moe {
        lb_feat_loss(stats, config.k(), config.alpha)
    } else {
        0.0
    };
    let lb_haz = if config.hazard_moe {
        lb_haz_loss(stats, config.l(), config.t_max, config.beta)
    } else {
        0.0
    };
    Ok(LossBreakdown::new(nll, lb_feat, lb_haz))
}

/// Graph form of [`nll_loss`]. `log p(τ)` and `log S(τ)` are accumulated as
/// sums of per-bin logs, so the floor applies per factor.
pub fn nll_graph(g: &mut Graph, lambda: Var, tau: &[usize], event: &[bool]) -> Result<Var> {
    let (b, t1) = g.value(lambda).shape();
    if tau.len() != b || event.len() != b {
        return Err(Error::usage("nll targets do not match the batch"));
    }
    let mut event_mask = Matrix::zeros(b, t1);
    let mut surv_mask = Matrix::zeros(b, t1);
    for i in 0..b {
        if tau[i] >= t1 {
            return Err(Error::config(format!("tau {} outside {t1} bins", tau[i])));
        }
        let upto = if event[i] {
            event_mask.set(i, tau[i], 1.0);
            tau[i]
        } else {
            tau[i] + 1
        };
        surv_mask.row_mut(i)[..upto].fill(1.0);
    }
    let floor_l = g.clamp_min(lambda, PROB_FLOOR);
    let log_l = g.log(floor_l)?;
    let neg = g.neg(lambda);
    let one_minus = g.add_scalar(neg, 1.0);
    let one_minus = g.clamp_min(one_minus, PROB_FLOOR);
    let log_s = g.log(one_minus)?;
    let em = g.constant(event_mask);
    let sm = g.constant(surv_mask);
    let ev = g.mul(log_l, em)?;
    let ev = g.sum(ev);
    let sv = g.mul(log_s, sm)?;
    let sv = g.sum(sv);
    let ll = g.add(ev, sv)?;
    Ok(g.scale(ll, -1.0 / b as f64))
}

/// `pi` is `B × K`.
pub fn lb_feat_graph(g: &mut Graph, pi: Var, alpha: f64) -> Result<Var> {
    let k = g.value(pi).cols() as f64;
    let bar = g.mean_rows(pi);
    let sq = g.mul(bar, bar)?;
    let s = g.sum(sq);
    let s = g.scale(s, k);
    let s = g.add_scalar(s, -1.0);
    Ok(g.scale(s, alpha))
}

/// `pi` is `(B·T1) × L`, patient-major.
pub fn lb_haz_graph(g: &mut Graph, pi: Var, batch: usize, beta: f64) -> Result<Var> {
    let (rows, l) = g.value(pi).shape();
    let t1 = rows / batch.max(1);
    let folded = g.fold_rows(pi, t1)?;
    let bar = g.scale(folded, 1.0 / batch as f64);
    let sq = g.mul(bar, bar)?;
    let per_bin = g.row_sums(sq);
    let per_bin = g.scale(per_bin, l as f64);
    let s = g.mean(per_bin);
    let s = g.add_scalar(s, -1.0);
    Ok(g.scale(s, beta))
}

#[derive(Clone, Copy, Debug)]
pub struct LossVars {
    pub nll: Var,
    pub lb_feat: Option<Var>,
    pub lb_haz: Option<Var>,
    pub total: Var,
}

impl LossVars {
    pub fn breakdown(&self, g: &Graph) -> LossBreakdown {
        let get = |v: Option<Var>| v.map_or(0.0, |v| g.value(v).item());
        LossBreakdown {
            nll: g.value(self.nll).item(),
            lb_feat: get(self.lb_feat),
            lb_haz: get(self.lb_haz),
            total: g.value(self.total).item(),
        }
    }
}

pub fn total_graph(
    g: &mut Graph,
    fv: &ForwardVars,
    tau: &[usize],
    event: &[bool],
    config: &DualMoeConfig,
) -> Result<LossVars> {
    let nll = nll_graph(g, fv.lambda, tau, event)?;
    let lb_feat = fv.pi_feat.map(|pi| lb_feat_graph(g, pi, config.alpha)).transpose()?;
    let lb_haz = fv
        .pi_haz
        .map(|pi| lb_haz_graph(g, pi, fv.batch, config.beta))
        .transpose()?;
    let mut total = nll;
    for term in [lb_feat, lb_haz].into_iter().flatten() {
        total = g.add(total, term)?;
    }
    Ok(LossVars {
        nll,
        lb_feat,
        lb_haz,
        total,
    })
}

/// Loss of one batch without gradients.
pub fn batch_loss(model: &DualMoe, batch: &GraphBatch) -> Result<LossBreakdown> {
    let mut g = Graph::new();
    let p = model.params().bind_constants(&mut g);
    let x = g.constant(batch.x.clone());
    let fv = model.forward_graph(&mut g, &p, x)?;
    Ok(total_graph(&mut g, &fv, &batch.tau, &batch.event, model.config())?.breakdown(&g))
}

/// Loss of one batch; adds its gradients into the model's parameter store.
pub fn batch_loss_and_grads(model: &mut DualMoe, batch: &GraphBatch) -> Result<LossBreakdown> {
    let mut g = Graph::new();
    let p = model.params().bind(&mut g);
    let x = g.constant(batch.x.clone());
    let fv = model.forward_graph(&mut g, &p, x)?;
    let loss = total_graph(&mut g, &fv, &batch.tau, &batch.event, model.config())?;
    let out = loss.breakdown(&g);
    if out.total.is_finite() {
        g.backward(loss.total)?;
        model.params_mut().accumulate_grads(&g, &p);
    }
    Ok(out)
}
