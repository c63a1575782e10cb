use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fit_config_to_data, train_one, Checkpoint, RunResult, TrainConfig};
use crate::cox::{self, CoxModel, CoxOptions};
use crate::data::{prepare_splits, PrepSettings, PreparedSplits, RawDataset};
use crate::error::{Error, Result};
use crate::metrics::{self, MetricReport, DEFAULT_PERCENTILES};
use crate::model::{DualMoeConfig, RouterInput};
use crate::report::{aligned_table, csv_bytes, fmt_f64, fmt_opt, RoutingExport};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum VariantKind {
    Cox(CoxOptions),
    Moe(DualMoeConfig),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Variant {
    pub name: String,
    pub kind: VariantKind,
    /// Row the others are compared against in the summary.
    pub anchor: bool,
}

impl Variant {
    pub fn moe(name: &str, config: DualMoeConfig) -> Self {
        Variant {
            name: name.into(),
            kind: VariantKind::Moe(config),
            anchor: false,
        }
    }

    pub fn cox() -> Self {
        Variant {
            name: "coxph".into(),
            kind: VariantKind::Cox(CoxOptions::default()),
            anchor: false,
        }
    }

    pub fn anchored(mut self) -> Self {
        self.anchor = true;
        self
    }
}

/// Predefined experiment grids built around one base model config.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GridKind {
    /// Naive network, each single MoE, and the dual model.
    MoeComponents,
    /// The three hazard-router inputs.
    RouterInput,
    /// Cox baseline, naive network and the dual model.
    Headline,
}

impl GridKind {
    pub fn variants(self, base: &DualMoeConfig) -> Vec<Variant> {
        let dual = Variant::moe("dual", base.clone()).anchored();
        let naive = Variant::moe("naive", base.naive());
        match self {
            GridKind::MoeComponents => vec![
                naive,
                Variant::moe(
                    "feature_moe",
                    DualMoeConfig {
                        hazard_moe: false,
                        ..base.clone()
                    },
                ),
                Variant::moe(
                    "hazard_moe",
                    DualMoeConfig {
                        feature_moe: false,
                        ..base.clone()
                    },
                ),
                dual,
            ],
            GridKind::RouterInput => RouterInput::ALL
                .iter()
                .map(|&ri| {
                    let v = Variant::moe(
                        ri.as_str(),
                        DualMoeConfig {
                            hazard_router_input: ri,
                            ..base.clone()
                        },
                    );
                    if ri == RouterInput::Both {
                        v.anchored()
                    } else {
                        v
                    }
                })
                .collect(),
            GridKind::Headline => vec![Variant::cox(), naive, dual],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub cindex: f64,
    /// One entry per percentile; `None` where the horizon was undefined.
    pub td: Vec<Option<f64>>,
    pub horizon_bins: Vec<usize>,
    pub best_epoch: Option<usize>,
}

impl RunMetrics {
    fn from_report(r: &MetricReport, best_epoch: Option<usize>) -> Self {
        RunMetrics {
            cindex: r.cindex.value,
            td: r.td.iter().map(|c| c.as_ref().map(|c| c.value)).collect(),
            horizon_bins: r.horizons.bins.clone(),
            best_epoch,
        }
    }

    pub fn mean_td(&self) -> Option<f64> {
        let v: Vec<f64> = self.td.iter().flatten().copied().collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum RunOutcome {
    Completed(RunMetrics),
    Failed(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridRun {
    pub variant: String,
    pub seed: u64,
    pub outcome: RunOutcome,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single value.
    pub std: f64,
    pub n: usize,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Option<Self> {
        let n = values.len();
        if n == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Some(MeanStd { mean, std, n })
    }

    fn display(m: Option<MeanStd>) -> String {
        m.map_or_else(|| "n/a".into(), |m| format!("{:.3} ± {:.3}", m.mean, m.std))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub variant: String,
    pub anchor: bool,
    pub completed: usize,
    pub failed: usize,
    pub cindex: Option<MeanStd>,
    pub td: Vec<Option<MeanStd>>,
    pub mean_td: Option<MeanStd>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub percentiles: Vec<f64>,
    pub runs: Vec<GridRun>,
    pub rows: Vec<AggregateRow>,
}

impl GridResult {
    pub fn row(&self, variant: &str) -> Option<&AggregateRow> {
        self.rows.iter().find(|r| r.variant == variant)
    }

    pub fn runs_csv(&self) -> Vec<u8> {
        let mut header = vec![
            "variant".to_string(),
            "seed".into(),
            "status".into(),
            "best_epoch".into(),
        ];
        header.push("cindex".into());
        header.extend(self.percentiles.iter().map(|p| td_label(*p)));
        header.push("td_mean".into());
        let rows: Vec<Vec<String>> = self
            .runs
            .iter()
            .map(|r| {
                let mut row = vec![r.variant.clone(), r.seed.to_string()];
                match &r.outcome {
                    RunOutcome::Completed(m) => {
                        row.push("ok".into());
                        row.push(m.best_epoch.map(|e| e.to_string()).unwrap_or_default());
                        row.push(fmt_f64(m.cindex));
                        row.extend(m.td.iter().map(|v| fmt_opt(*v)));
                        row.push(fmt_opt(m.mean_td()));
                    }
                    RunOutcome::Failed(msg) => {
                        row.push(format!("failed: {msg}"));
                        row.extend(std::iter::repeat_n(String::new(), self.percentiles.len() + 3));
                    }
                }
                row
            })
            .collect();
        csv_bytes(&header, &rows)
    }

    pub fn summary_csv(&self) -> Vec<u8> {
        let mut header = vec![
            "variant".to_string(),
            "anchor".into(),
            "completed".into(),
            "failed".into(),
        ];
        let mut push = |name: String| {
            header.push(format!("{name}_mean"));
            header.push(format!("{name}_std"));
        };
        push("cindex".into());
        self.percentiles.iter().for_each(|p| push(td_label(*p)));
        push("td_mean".into());
        let cells = |m: Option<MeanStd>| match m {
            Some(m) => [fmt_f64(m.mean), fmt_f64(m.std)],
            None => [String::new(), String::new()],
        };
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                let mut row = vec![
                    r.variant.clone(),
                    r.anchor.to_string(),
                    r.completed.to_string(),
                    r.failed.to_string(),
                ];
                row.extend(cells(r.cindex));
                r.td.iter().for_each(|m| row.extend(cells(*m)));
                row.extend(cells(r.mean_td));
                row
            })
            .collect();
        csv_bytes(&header, &rows)
    }

    /// Overall and per-horizon concordance as `mean ± std` text.
    pub fn summary_table(&self) -> String {
        let mut header = vec!["variant".to_string(), "runs".into(), "C-index".into()];
        header.extend(self.percentiles.iter().map(|p| format!("td@{:.0}%", p * 100.0)));
        header.push("td mean".into());
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                let name = if r.anchor {
                    format!("{} *", r.variant)
                } else {
                    r.variant.clone()
                };
                let runs = if r.failed > 0 {
                    format!("{} ({} failed)", r.completed, r.failed)
                } else {
                    r.completed.to_string()
                };
                let mut row = vec![name, runs, MeanStd::display(r.cindex)];
                row.extend(r.td.iter().map(|m| MeanStd::display(*m)));
                row.push(MeanStd::display(r.mean_td));
                row
            })
            .collect();
        let mut out = aligned_table(&header, &rows);
        if self.rows.iter().any(|r| r.anchor) {
            out.push_str("* comparison anchor\n");
        }
        out
    }
}

fn td_label(p: f64) -> String {
    format!("td_{:.0}", p * 100.0)
}

/// Per-variant mean and sample std over completed runs, in variant order.
pub fn aggregate(variants: &[Variant], runs: &[GridRun], percentiles: &[f64]) -> Vec<AggregateRow> {
    variants
        .iter()
        .map(|v| {
            let mine: Vec<&GridRun> = runs.iter().filter(|r| r.variant == v.name).collect();
            let done: Vec<&RunMetrics> = mine
                .iter()
                .filter_map(|r| match &r.outcome {
                    RunOutcome::Completed(m) => Some(m),
                    RunOutcome::Failed(_) => None,
                })
                .collect();
            let td = (0..percentiles.len())
                .map(|j| {
                    MeanStd::of(
                        &done
                            .iter()
                            .filter_map(|m| m.td.get(j).copied().flatten())
                            .collect::<Vec<_>>(),
                    )
                })
                .collect();
            AggregateRow {
                variant: v.name.clone(),
                anchor: v.anchor,
                completed: done.len(),
                failed: mine.len() - done.len(),
                cindex: MeanStd::of(&done.iter().map(|m| m.cindex).collect::<Vec<_>>()),
                td,
                mean_td: MeanStd::of(&done.iter().filter_map(|m| m.mean_td()).collect::<Vec<_>>()),
            }
        })
        .collect()
}

/// Fits Cox on the training split and evaluates it on test.
pub fn evaluate_cox(data: &PreparedSplits, opts: &CoxOptions) -> Result<(MetricReport, CoxModel)> {
    let model = cox::fit_cox(&data.train, opts)?;
    let grid = &data.preprocessor.grid;
    let curves = data
        .test
        .iter()
        .map(|r| cox::cox_survival_curve(&model, &r.x, grid))
        .collect::<Result<Vec<_>>>()?;
    let risk: Vec<f64> = data.test.iter().map(|r| cox::cox_risk(&model, &r.x)).collect();
    let tau: Vec<usize> = data.test.iter().map(|r| r.tau).collect();
    let event: Vec<bool> = data.test.iter().map(|r| r.event).collect();
    let report = metrics::evaluate_curves(&curves, &risk, &tau, &event, &DEFAULT_PERCENTILES)?;
    Ok((report, model))
}

fn metrics_csv(report: &MetricReport) -> Vec<u8> {
    let mut rows = vec![vec![
        "cindex".to_string(),
        String::new(),
        String::new(),
        fmt_f64(report.cindex.value),
        report.cindex.comparable_pairs.to_string(),
    ]];
    for ((p, bin), td) in report
        .horizons
        .percentiles
        .iter()
        .zip(&report.horizons.bins)
        .zip(&report.td)
    {
        rows.push(vec![
            "td_cindex".into(),
            fmt_f64(*p),
            bin.to_string(),
            fmt_opt(td.as_ref().map(|c| c.value)),
            td.as_ref().map(|c| c.comparable_pairs.to_string()).unwrap_or_default(),
        ]);
    }
    csv_bytes(
        &["metric", "percentile", "horizon_bin", "value", "comparable_pairs"],
        &rows,
    )
}

/// Writes into a private sibling directory, then swaps it into place.
fn write_run_dir(dir: &Path, files: Vec<(&str, Vec<u8>)>, checkpoint: Option<&Checkpoint>) -> Result<()> {
    let mut partial = dir.as_os_str().to_owned();
    partial.push(".partial");
    let partial = PathBuf::from(partial);
    if partial.exists() {
        fs::remove_dir_all(&partial).map_err(|e| Error::io(&partial, e))?;
    }
    fs::create_dir_all(&partial).map_err(|e| Error::io(&partial, e))?;
    for (name, bytes) in files {
        let p = partial.join(name);
        fs::write(&p, bytes).map_err(|e| Error::io(&p, e))?;
    }
    if let Some(c) = checkpoint {
        c.write(&partial.join("checkpoint.bin"))?;
    }
    if dir.exists() {
        fs::remove_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::rename(&partial, dir).map_err(|e| Error::io(dir, e))
}

/// Artifacts of one trained model run.
pub fn write_moe_run(dir: &Path, data: &PreparedSplits, train: &TrainConfig, run: &RunResult) -> Result<()> {
    let mut log_rows = Vec::new();
    for e in &run.log {
        log_rows.push(vec![
            e.epoch.to_string(),
            fmt_f64(e.train.nll),
            fmt_f64(e.train.lb_feat),
            fmt_f64(e.train.lb_haz),
            fmt_f64(e.train.total),
            fmt_opt(e.val_cindex),
            fmt_opt(e.val_nll),
        ]);
    }
    let log = csv_bytes(
        &[
            "epoch",
            "train_nll",
            "train_lb_feat",
            "train_lb_haz",
            "train_total",
            "val_cindex",
            "val_nll",
        ],
        &log_rows,
    );
    let snapshot = format!(
        "seed = {}\nbest_epoch = {}\n\n[model]\n{}\n[train]\n{}",
        run.seed,
        run.best_epoch,
        run.model.config().to_toml_string(),
        train.to_toml_string()
    );
    let routing = RoutingExport::new(data.preprocessor.subgroup_names.clone(), &data.test, &run.routing)?;
    let all: Vec<_> = routing.patients.iter().collect();
    let checkpoint = Checkpoint {
        model: run.model.clone(),
        preprocessor: data.preprocessor.clone(),
        train_config: train.clone(),
        seed: run.seed,
        best_epoch: run.best_epoch,
    };
    write_run_dir(
        dir,
        vec![
            ("config.toml", snapshot.into_bytes()),
            ("train_log.csv", log),
            ("metrics.csv", metrics_csv(&run.test)),
            ("routing_feat.csv", routing.feature_csv()),
            ("routing_haz.csv", routing.hazard_csv(&all)),
        ],
        Some(&checkpoint),
    )
}

fn run_variant(
    variant: &Variant,
    data: &PreparedSplits,
    train: &TrainConfig,
    dir: Option<&Path>,
) -> Result<RunMetrics> {
    match &variant.kind {
        VariantKind::Moe(cfg) => {
            let run = train_one(cfg, train, data, data.seed)?;
            if let Some(dir) = dir {
                write_moe_run(dir, data, train, &run)?;
            }
            Ok(RunMetrics::from_report(&run.test, Some(run.best_epoch)))
        }
        VariantKind::Cox(opts) => {
            let (report, model) = evaluate_cox(data, opts)?;
            if let Some(dir) = dir {
                let json = serde_json::to_vec_pretty(&model).expect("cox model serializes");
                write_run_dir(
                    dir,
                    vec![("cox_model.json", json), ("metrics.csv", metrics_csv(&report))],
                    None,
                )?;
            }
            Ok(RunMetrics::from_report(&report, None))
        }
    }
}

/// Runs every (variant, seed) pair on the current rayon pool. Runs that fail
/// at runtime are recorded and left out of the aggregate; configuration
/// errors abort the grid.
pub fn run_grid(
    raw: &RawDataset,
    settings: &PrepSettings,
    variants: &[Variant],
    train: &TrainConfig,
    out: Option<&Path>,
) -> Result<GridResult> {
    if variants.is_empty() {
        return Err(Error::config("the grid needs at least one variant"));
    }
    train.validate()?;
    let mut names: Vec<&str> = variants.iter().map(|v| v.name.as_str()).collect();
    names.sort_unstable();
    if names.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::config("variant names must be unique"));
    }
    let data: Vec<PreparedSplits> = train
        .seeds
        .par_iter()
        .map(|&s| prepare_splits(raw, settings, s))
        .collect::<Result<_>>()?;
    for v in variants {
        if let VariantKind::Moe(cfg) = &v.kind {
            fit_config_to_data(cfg, &data[0])?;
        }
    }
    let jobs: Vec<(usize, usize)> = (0..variants.len())
        .flat_map(|v| (0..data.len()).map(move |s| (v, s)))
        .collect();
    let runs: Vec<GridRun> = jobs
        .par_iter()
        .map(|&(vi, si)| {
            let v = &variants[vi];
            let d = &data[si];
            let dir = out.map(|o| o.join("runs").join(&v.name).join(format!("seed_{}", d.seed)));
            let outcome = match run_variant(v, d, train, dir.as_deref()) {
                Ok(m) => RunOutcome::Completed(m),
                Err(e @ (Error::Io { .. } | Error::Config(_) | Error::Usage(_))) => return Err(e),
                Err(e) => {
                    log::warn!("{} seed {} failed: {e}", v.name, d.seed);
                    RunOutcome::Failed(e.to_string())
                }
            };
            Ok(GridRun {
                variant: v.name.clone(),
                seed: d.seed,
                outcome,
            })
        })
        .collect::<Result<_>>()?;
    let result = GridResult {
        percentiles: DEFAULT_PERCENTILES.to_vec(),
        rows: aggregate(variants, &runs, &DEFAULT_PERCENTILES),
        runs,
    };
    if let Some(out) = out {
        use crate::container::write_atomic;
        write_atomic(&out.join("runs.csv"), &result.runs_csv())?;
        write_atomic(&out.join("summary.csv"), &result.summary_csv())?;
        write_atomic(&out.join("summary.txt"), result.summary_table().as_bytes())?;
    }
    Ok(result)
}
