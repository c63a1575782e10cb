//! Training loop, checkpoints and the multi-seed experiment grid.

mod checkpoint;
mod config;
mod grid;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::autodiff::AdamConfig;
use crate::data::{PatientRecord, PreparedSplits};
use crate::error::{Error, Result};
use crate::metrics::{self, MetricReport, DEFAULT_PERCENTILES};
use crate::model::{DualMoe, DualMoeConfig, HazardCurve, RoutingTrace};
use crate::objectives::{self, BatchRoutingStats, LossBreakdown};
use crate::rng;

pub use checkpoint::{Checkpoint, CHECKPOINT_KIND};
pub use config::{StopCriterion, TrainConfig};
pub use grid::{
    aggregate, evaluate_cox, run_grid, write_moe_run, AggregateRow, GridKind, GridResult, GridRun, MeanStd, RunMetrics,
    RunOutcome, Variant, VariantKind,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Batch-size weighted mean over the epoch's mini-batches.
    pub train: LossBreakdown,
    pub val_cindex: Option<f64>,
    pub val_nll: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub seed: u64,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub val_cindex: f64,
    pub test: MetricReport,
    /// Loss of the retained parameters over the whole training split.
    pub final_loss: LossBreakdown,
    pub routing: Vec<RoutingTrace>,
    pub log: Vec<EpochLog>,
    pub model: DualMoe,
}

/// Copies the data-dependent sizes into a model config.
pub fn fit_config_to_data(config: &DualMoeConfig, data: &PreparedSplits) -> Result<DualMoeConfig> {
    let mut cfg = config.clone();
    cfg.input_dim = data.preprocessor.num_features();
    cfg.t_max = data.t_max();
    cfg.validate()?;
    Ok(cfg)
}

fn risk_scores(curves: &[HazardCurve]) -> Vec<f64> {
    curves.iter().map(metrics::model_risk_score).collect()
}

fn targets(records: &[PatientRecord]) -> (Vec<usize>, Vec<bool>) {
    (
        records.iter().map(|r| r.tau).collect(),
        records.iter().map(|r| r.event).collect(),
    )
}

struct Validation {
    cindex: f64,
    nll: f64,
}

fn validate(model: &DualMoe, val: &[PatientRecord]) -> Result<Validation> {
    let curves = model.predict_curves(val)?;
    let (tau, event) = targets(val);
    Ok(Validation {
        cindex: metrics::harrell_cindex(&risk_scores(&curves), &tau, &event)?.value,
        nll: objectives::nll_loss(&curves, val)?,
    })
}

/// Evaluates a model on one split: curves, routing and metrics.
pub fn evaluate_model(model: &DualMoe, records: &[PatientRecord]) -> Result<(MetricReport, Vec<RoutingTrace>)> {
    let (curves, traces) = model.batch_forward(records)?;
    let (tau, event) = targets(records);
    let report = metrics::evaluate_curves(&curves, &risk_scores(&curves), &tau, &event, &DEFAULT_PERCENTILES)?;
    Ok((report, traces))
}

fn improved(criterion: StopCriterion, v: &Validation, best: Option<&Validation>) -> bool {
    match (criterion, best) {
        (_, None) => true,
        (StopCriterion::Cindex, Some(b)) => v.cindex > b.cindex,
        (StopCriterion::Nll, Some(b)) => v.nll < b.nll,
    }
}

/// Trains one model with Adam on shuffled mini-batches, keeps the
/// parameters of the best validation epoch and evaluates them on test.
pub fn train_one(
    model_config: &DualMoeConfig,
    train_config: &TrainConfig,
    data: &PreparedSplits,
    seed: u64,
) -> Result<RunResult> {
    train_config.validate()?;
    let cfg = fit_config_to_data(model_config, data)?;
    if data.train.is_empty() || data.val.is_empty() || data.test.is_empty() {
        return Err(Error::config("train, validation and test splits must be non-empty"));
    }
    let mut model = DualMoe::new(cfg, seed)?;
    let adam = AdamConfig {
        lr: train_config.learning_rate,
        ..AdamConfig::default()
    };
    let mut order_rng = rng::stream(seed, "batch_order");
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    let mut log = Vec::new();
    let mut best: Option<(usize, Validation, crate::autodiff::ParameterStore)> = None;
    let mut last_finite = None;
    let mut epochs_run = 0;

    for epoch in 1..=train_config.epochs {
        epochs_run = epoch;
        order.shuffle(&mut order_rng);
        let (mut nll, mut lbf, mut lbh) = (0.0, 0.0, 0.0);
        for (b, chunk) in order.chunks(train_config.batch_size).enumerate() {
            let batch = crate::model::GraphBatch::from_records(chunk.iter().map(|&i| &data.train[i]))?;
            let nan = Error::NanLoss {
                epoch,
                batch: b,
                last_finite,
            };
            let loss = match objectives::batch_loss_and_grads(&mut model, &batch) {
                Ok(l) if l.total.is_finite() => l,
                Ok(_) => return Err(nan),
                Err(Error::NumericDomain(msg)) => {
                    log::error!("{msg}");
                    return Err(nan);
                }
                Err(e) => return Err(e),
            };
            last_finite = Some(loss.total);
            model.params_mut().adam_step(&adam);
            let w = chunk.len() as f64;
            nll += w * loss.nll;
            lbf += w * loss.lb_feat;
            lbh += w * loss.lb_haz;
        }
        let n = data.train.len() as f64;
        let mut entry = EpochLog {
            epoch,
            train: LossBreakdown::new(nll / n, lbf / n, lbh / n),
            val_cindex: None,
            val_nll: None,
        };
        let evaluate = epoch % train_config.eval_every == 0 || epoch == train_config.epochs;
        if evaluate {
            let v = validate(&model, &data.val)?;
            entry.val_cindex = Some(v.cindex);
            entry.val_nll = Some(v.nll);
            if improved(train_config.early_stopping, &v, best.as_ref().map(|b| &b.1)) {
                best = Some((epoch, v, model.params().clone()));
            }
        }
        log.push(entry);
        if let Some((best_epoch, ..)) = &best {
            if evaluate && epoch - best_epoch >= train_config.patience {
                break;
            }
        }
    }

    let (best_epoch, best_val, params) = best.expect("the final epoch is always evaluated");
    *model.params_mut() = params;
    let retained = validate(&model, &data.val)?;
    debug_assert_eq!(retained.cindex, best_val.cindex);

    let (test, routing) = evaluate_model(&model, &data.test)?;
    let (curves, traces) = model.batch_forward(&data.train)?;
    let stats = BatchRoutingStats::from_traces(&traces)?;
    let final_loss = objectives::total_loss(&curves, &data.train, &stats, model.config())?;
    Ok(RunResult {
        seed,
        best_epoch,
        epochs_run,
        val_cindex: retained.cindex,
        test,
        final_loss,
        routing,
        log,
        model,
    })
}

#[cfg(test)]
mod tests;
