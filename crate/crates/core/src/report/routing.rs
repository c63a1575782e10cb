use serde::{Deserialize, Serialize};

use super::{csv_bytes, fmt_f64};
use crate::autodiff::Matrix;
use crate::data::PatientRecord;
use crate::error::{Error, Result};
use crate::model::RoutingTrace;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatientRouting {
    pub id: String,
    pub subgroups: Vec<String>,
    pub pi_feat: Vec<f64>,
    /// `(t_max + 1) × L`.
    pub pi_haz: Matrix,
}

/// Per-patient routing probabilities of one split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoutingExport {
    pub subgroup_names: Vec<String>,
    pub patients: Vec<PatientRouting>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubgroupMean {
    pub column: String,
    pub value: String,
    pub count: usize,
    pub mean: Vec<f64>,
}

fn expert_header(prefix: &[&str], n: usize) -> Vec<String> {
    prefix
        .iter()
        .map(|s| s.to_string())
        .chain((0..n).map(|k| format!("expert_{k}")))
        .collect()
}

impl RoutingExport {
    pub fn new(subgroup_names: Vec<String>, records: &[PatientRecord], traces: &[RoutingTrace]) -> Result<Self> {
        if records.len() != traces.len() {
            return Err(Error::usage("one routing trace per record is required"));
        }
        let patients = records
            .iter()
            .zip(traces)
            .map(|(r, t)| PatientRouting {
                id: r.id.clone(),
                subgroups: r.subgroups.clone(),
                pi_feat: t.pi_feat.clone(),
                pi_haz: t.pi_haz.clone(),
            })
            .collect();
        Ok(RoutingExport {
            subgroup_names,
            patients,
        })
    }

    pub fn num_feature_experts(&self) -> usize {
        self.patients.first().map_or(0, |p| p.pi_feat.len())
    }

    pub fn num_hazard_experts(&self) -> usize {
        self.patients.first().map_or(0, |p| p.pi_haz.cols())
    }

    /// Resolves a subgroup column by exact or case-insensitive prefix match
    /// (`ER` finds `er_positive`).
    pub fn subgroup_column(&self, key: &str) -> Result<usize> {
        let lower = key.to_lowercase();
        self.subgroup_names
            .iter()
            .position(|n| n == key)
            .or_else(|| {
                let hits: Vec<usize> = self
                    .subgroup_names
                    .iter()
                    .enumerate()
                    .filter(|(_, n)| n.to_lowercase().starts_with(&lower))
                    .map(|(i, _)| i)
                    .collect();
                (hits.len() == 1).then(|| hits[0])
            })
            .ok_or_else(|| {
                Error::usage(format!(
                    "unknown subgroup column '{key}'; available: {}",
                    self.subgroup_names.join(", ")
                ))
            })
    }

    pub fn patient(&self, id: &str) -> Result<&PatientRouting> {
        self.patients.iter().find(|p| p.id == id).ok_or_else(|| {
            let sample: Vec<&str> = self.patients.iter().take(20).map(|p| p.id.as_str()).collect();
            Error::usage(format!(
                "unknown patient id '{id}'; available ({} total) include: {}",
                self.patients.len(),
                sample.join(", ")
            ))
        })
    }

    /// Mean feature routing per value of one subgroup column, values sorted.
    pub fn subgroup_means(&self, column: usize) -> Vec<SubgroupMean> {
        let k = self.num_feature_experts();
        let mut values: Vec<&str> = self.patients.iter().map(|p| p.subgroups[column].as_str()).collect();
        values.sort_unstable();
        values.dedup();
        values
            .into_iter()
            .map(|value| {
                let mut sum = vec![0.0; k];
                let mut count = 0;
                for p in self.patients.iter().filter(|p| p.subgroups[column] == value) {
                    sum.iter_mut().zip(&p.pi_feat).for_each(|(s, v)| *s += v);
                    count += 1;
                }
                SubgroupMean {
                    column: self.subgroup_names[column].clone(),
                    value: value.to_string(),
                    count,
                    mean: sum.into_iter().map(|s| s / count as f64).collect(),
                }
            })
            .collect()
    }

    /// One row per patient: id, subgroup labels, `pi_feat`.
    pub fn feature_csv(&self) -> Vec<u8> {
        let mut header: Vec<String> = vec!["patient_id".into()];
        header.extend(self.subgroup_names.iter().cloned());
        header.extend((0..self.num_feature_experts()).map(|k| format!("expert_{k}")));
        let rows: Vec<Vec<String>> = self
            .patients
            .iter()
            .map(|p| {
                std::iter::once(p.id.clone())
                    .chain(p.subgroups.iter().cloned())
                    .chain(p.pi_feat.iter().map(|&v| fmt_f64(v)))
                    .collect()
            })
            .collect();
        csv_bytes(&header, &rows)
    }

    /// One row per (patient, bin) for the given patients.
    pub fn hazard_csv(&self, patients: &[&PatientRouting]) -> Vec<u8> {
        let header = expert_header(&["patient_id", "bin"], self.num_hazard_experts());
        let mut rows = Vec::new();
        for p in patients {
            for t in 0..p.pi_haz.rows() {
                let mut row = vec![p.id.clone(), t.to_string()];
                row.extend(p.pi_haz.row(t).iter().map(|&v| fmt_f64(v)));
                rows.push(row);
            }
        }
        csv_bytes(&header, &rows)
    }

    pub fn subgroup_csv(means: &[SubgroupMean]) -> Vec<u8> {
        let k = means.first().map_or(0, |m| m.mean.len());
        let header = expert_header(&["column", "value", "n"], k);
        let rows: Vec<Vec<String>> = means
            .iter()
            .map(|m| {
                [m.column.clone(), m.value.clone(), m.count.to_string()]
                    .into_iter()
                    .chain(m.mean.iter().map(|&v| fmt_f64(v)))
                    .collect()
            })
            .collect();
        csv_bytes(&header, &rows)
    }
}
