//! CSV ingestion, split-dependent preprocessing and time discretization.

mod discretize;
mod raw;
mod split;
mod standardize;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::Matrix;
use crate::container::Container;
use crate::error::{Error, Result};

pub(crate) use discretize::quantile_sorted;
pub use discretize::{fit_discretization, BinningScheme, DiscretizationGrid};
pub use raw::{load_csv, parse_csv, RawDataset, Schema};
pub use split::{split, SplitIndices, SplitSpec};
pub use standardize::Standardizer;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatientRecord {
    pub id: String,
    /// Imputed and standardized covariates.
    pub x: Vec<f64>,
    /// Time bin in `0..=t_max`.
    pub tau: usize,
    pub event: bool,
    /// Original continuous duration.
    pub duration: f64,
    pub subgroups: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrepSettings {
    pub t_max: usize,
    pub scheme: BinningScheme,
    pub fractions: [f64; 3],
}

impl Default for PrepSettings {
    fn default() -> Self {
        PrepSettings {
            t_max: 19,
            scheme: BinningScheme::Quantile,
            fractions: SplitSpec::DEFAULT_FRACTIONS,
        }
    }
}

/// Everything fitted on the training split and reused verbatim elsewhere.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Preprocessor {
    pub feature_names: Vec<String>,
    pub subgroup_names: Vec<String>,
    pub medians: Vec<f64>,
    pub standardizer: Standardizer,
    pub grid: DiscretizationGrid,
}

impl Preprocessor {
    pub fn fit(raw: &RawDataset, train: &[usize], settings: &PrepSettings) -> Result<Self> {
        let p = raw.num_features();
        let medians: Vec<f64> = (0..p)
            .map(|j| {
                let mut col: Vec<f64> = train
                    .iter()
                    .map(|&i| raw.features[i][j])
                    .filter(|v| !v.is_nan())
                    .collect();
                if col.is_empty() {
                    return Err(Error::config(format!(
                        "feature '{}' is missing for every training row",
                        raw.feature_names[j]
                    )));
                }
                col.sort_by(f64::total_cmp);
                Ok(quantile_sorted(&col, 0.5))
            })
            .collect::<Result<_>>()?;
        let imputed: Vec<Vec<f64>> = train.iter().map(|&i| impute(&raw.features[i], &medians)).collect();
        let (standardizer, constant) = Standardizer::fit(&imputed, &raw.one_hot);
        for j in constant {
            log::warn!(
                "feature '{}' has zero variance on the training split; it is set to 0",
                raw.feature_names[j]
            );
        }
        let durations: Vec<f64> = train.iter().map(|&i| raw.durations[i]).collect();
        let grid = fit_discretization(&durations, settings.t_max, settings.scheme)?;
        Ok(Preprocessor {
            feature_names: raw.feature_names.clone(),
            subgroup_names: raw.subgroup_names.clone(),
            medians,
            standardizer,
            grid,
        })
    }

    pub fn num_features(&self) -> usize {
        self.feature_names.len()
    }

    /// Imputes and standardizes a raw covariate row (NaN = missing).
    pub fn transform(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.num_features() {
            return Err(Error::config(format!(
                "expected {} features, got {}",
                self.num_features(),
                x.len()
            )));
        }
        Ok(self.standardizer.apply(&impute(x, &self.medians)))
    }

    pub fn record(&self, raw: &RawDataset, i: usize) -> Result<PatientRecord> {
        Ok(PatientRecord {
            id: raw.ids[i].clone(),
            x: self.transform(&raw.features[i])?,
            tau: self.grid.bin(raw.durations[i]),
            event: raw.events[i],
            duration: raw.durations[i],
            subgroups: raw.subgroups[i].clone(),
        })
    }
}

fn impute(x: &[f64], medians: &[f64]) -> Vec<f64> {
    x.iter()
        .zip(medians)
        .map(|(&v, &m)| if v.is_nan() { m } else { v })
        .collect()
}

/// One seed's worth of model-ready data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreparedSplits {
    pub seed: u64,
    pub settings: PrepSettings,
    pub preprocessor: Preprocessor,
    pub train: Vec<PatientRecord>,
    pub val: Vec<PatientRecord>,
    pub test: Vec<PatientRecord>,
}

impl PreparedSplits {
    pub fn split_named(&self, name: &str) -> Option<&[PatientRecord]> {
        match name {
            "train" => Some(&self.train),
            "val" => Some(&self.val),
            "test" => Some(&self.test),
            _ => None,
        }
    }

    pub fn t_max(&self) -> usize {
        self.preprocessor.grid.t_max()
    }
}

pub fn prepare_splits(raw: &RawDataset, settings: &PrepSettings, seed: u64) -> Result<PreparedSplits> {
    let idx = split(
        raw.len(),
        &SplitSpec {
            seed,
            fractions: settings.fractions,
        },
    )?;
    let preprocessor = Preprocessor::fit(raw, &idx.train, settings)?;
    let build =
        |rows: &[usize]| -> Result<Vec<PatientRecord>> { rows.iter().map(|&i| preprocessor.record(raw, i)).collect() };
    Ok(PreparedSplits {
        seed,
        settings: settings.clone(),
        train: build(&idx.train)?,
        val: build(&idx.val)?,
        test: build(&idx.test)?,
        preprocessor,
    })
}

pub const CACHE_KIND: &str = "dataset";

#[derive(Serialize, Deserialize)]
struct CacheMeta {
    seed: u64,
    settings: PrepSettings,
    preprocessor: Preprocessor,
    ids: [Vec<String>; 3],
    subgroups: [Vec<Vec<String>>; 3],
}

const SPLIT_NAMES: [&str; 3] = ["train", "val", "test"];

impl PreparedSplits {
    /// Features go in a tensor per split; `tau`, `event` and `duration` in a
    /// three-column tensor per split.
    pub fn to_container(&self) -> Result<Container> {
        let splits = [&self.train, &self.val, &self.test];
        let meta = CacheMeta {
            seed: self.seed,
            settings: self.settings.clone(),
            preprocessor: self.preprocessor.clone(),
            ids: splits.map(|s| s.iter().map(|r| r.id.clone()).collect()),
            subgroups: splits.map(|s| s.iter().map(|r| r.subgroups.clone()).collect()),
        };
        let meta = serde_json::to_value(&meta).map_err(|e| Error::config(e.to_string()))?;
        let mut c = Container::new(CACHE_KIND, meta);
        let p = self.preprocessor.num_features();
        for (name, recs) in SPLIT_NAMES.iter().zip(splits) {
            let x: Vec<f64> = recs.iter().flat_map(|r| r.x.iter().copied()).collect();
            c.push(format!("{name}.x"), Matrix::from_vec(recs.len(), p, x)?);
            let y: Vec<f64> = recs
                .iter()
                .flat_map(|r| [r.tau as f64, f64::from(u8::from(r.event)), r.duration])
                .collect();
            c.push(format!("{name}.y"), Matrix::from_vec(recs.len(), 3, y)?);
        }
        Ok(c)
    }

    pub fn from_container(c: Container, origin: &Path) -> Result<Self> {
        let c = c.expect_kind(CACHE_KIND, origin)?;
        let meta: CacheMeta =
            serde_json::from_value(c.meta.clone()).map_err(|e| Error::format(origin, e.to_string()))?;
        let mut splits: [Vec<PatientRecord>; 3] = Default::default();
        for (k, name) in SPLIT_NAMES.iter().enumerate() {
            let missing = |t: &str| Error::format(origin, format!("missing tensor '{t}'"));
            let x = c.tensor(&format!("{name}.x")).ok_or_else(|| missing("x"))?;
            let y = c.tensor(&format!("{name}.y")).ok_or_else(|| missing("y"))?;
            if x.rows() != meta.ids[k].len() || y.rows() != x.rows() || y.cols() != 3 {
                return Err(Error::format(origin, format!("inconsistent shapes for split '{name}'")));
            }
            splits[k] = (0..x.rows())
                .map(|i| PatientRecord {
                    id: meta.ids[k][i].clone(),
                    x: x.row(i).to_vec(),
                    tau: y.get(i, 0) as usize,
                    event: y.get(i, 1) == 1.0,
                    duration: y.get(i, 2),
                    subgroups: meta.subgroups[k][i].clone(),
                })
                .collect();
        }
        let [train, val, test] = splits;
        Ok(PreparedSplits {
            seed: meta.seed,
            settings: meta.settings,
            preprocessor: meta.preprocessor,
            train,
            val,
            test,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        self.to_container()?.write(path)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_container(Container::read(path)?, path)
    }
}

pub const SOURCE_KIND: &str = "source";

/// The full ingested table plus the settings every split is prepared with.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSource {
    pub settings: PrepSettings,
    pub raw: RawDataset,
}

#[derive(Serialize, Deserialize)]
struct SourceMeta {
    settings: PrepSettings,
    feature_names: Vec<String>,
    one_hot: Vec<bool>,
    ids: Vec<String>,
    subgroup_names: Vec<String>,
    subgroups: Vec<Vec<String>>,
}

impl DatasetSource {
    /// Missing cells stay NaN in the feature tensor.
    pub fn to_container(&self) -> Result<Container> {
        let r = &self.raw;
        let meta = SourceMeta {
            settings: self.settings.clone(),
            feature_names: r.feature_names.clone(),
            one_hot: r.one_hot.clone(),
            ids: r.ids.clone(),
            subgroup_names: r.subgroup_names.clone(),
            subgroups: r.subgroups.clone(),
        };
        let meta = serde_json::to_value(&meta).map_err(|e| Error::config(e.to_string()))?;
        let mut c = Container::new(SOURCE_KIND, meta);
        let x = r.features.iter().flatten().copied().collect();
        c.push("x", Matrix::from_vec(r.len(), r.num_features(), x)?);
        let y = r
            .durations
            .iter()
            .zip(&r.events)
            .flat_map(|(&d, &e)| [d, f64::from(u8::from(e))])
            .collect();
        c.push("y", Matrix::from_vec(r.len(), 2, y)?);
        Ok(c)
    }

    pub fn from_container(c: Container, origin: &Path) -> Result<Self> {
        let c = c.expect_kind(SOURCE_KIND, origin)?;
        let meta: SourceMeta =
            serde_json::from_value(c.meta.clone()).map_err(|e| Error::format(origin, e.to_string()))?;
        let (Some(x), Some(y)) = (c.tensor("x"), c.tensor("y")) else {
            return Err(Error::format(origin, "missing tensor 'x' or 'y'"));
        };
        let n = meta.ids.len();
        if x.rows() != n || y.rows() != n || y.cols() != 2 || x.cols() != meta.feature_names.len() {
            return Err(Error::format(origin, "inconsistent source shapes"));
        }
        Ok(DatasetSource {
            settings: meta.settings,
            raw: RawDataset {
                feature_names: meta.feature_names,
                one_hot: meta.one_hot,
                features: (0..n).map(|i| x.row(i).to_vec()).collect(),
                durations: (0..n).map(|i| y.get(i, 0)).collect(),
                events: (0..n).map(|i| y.get(i, 1) == 1.0).collect(),
                ids: meta.ids,
                subgroup_names: meta.subgroup_names,
                subgroups: meta.subgroups,
            },
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        self.to_container()?.write(path)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_container(Container::read(path)?, path)
    }

    pub fn prepare(&self, seed: u64) -> Result<PreparedSplits> {
        prepare_splits(&self.raw, &self.settings, seed)
    }
}
