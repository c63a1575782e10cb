use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Column roles for a survival CSV.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schema {
    pub duration: String,
    pub event: String,
    #[serde(default)]
    pub id: Option<String>,
    /// Columns holding labels rather than numbers; one-hot encoded.
    #[serde(default)]
    pub categorical: Vec<String>,
    /// Columns carried as subgroup metadata (e.g. receptor status).
    #[serde(default)]
    pub subgroups: Vec<String>,
    /// Subgroup columns that must not be used as model inputs.
    #[serde(default)]
    pub subgroup_only: Vec<String>,
    #[serde(default)]
    pub exclude: Vec<String>,
}

impl Schema {
    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::format(origin, e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, path)
    }

    fn subgroup_columns(&self) -> Vec<String> {
        let mut cols = self.subgroups.clone();
        for c in &self.subgroup_only {
            if !cols.contains(c) {
                cols.push(c.clone());
            }
        }
        cols
    }
}

/// A survival table after type coercion and one-hot encoding, before any
/// split-dependent preprocessing. Missing continuous cells are NaN.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawDataset {
    pub feature_names: Vec<String>,
    /// True for indicator columns produced by one-hot encoding.
    pub one_hot: Vec<bool>,
    pub features: Vec<Vec<f64>>,
    pub durations: Vec<f64>,
    pub events: Vec<bool>,
    pub ids: Vec<String>,
    pub subgroup_names: Vec<String>,
    pub subgroups: Vec<Vec<String>>,
}

impl RawDataset {
    pub fn len(&self) -> usize {
        self.durations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.durations.is_empty()
    }

    pub fn num_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn censoring_rate(&self) -> f64 {
        let censored = self.events.iter().filter(|&&e| !e).count();
        censored as f64 / self.len().max(1) as f64
    }
}

fn is_missing(cell: &str) -> bool {
    matches!(cell.trim(), "" | "NA" | "na" | "NaN" | "nan" | "null" | "NULL")
}

enum ColumnKind {
    Continuous,
    Categorical(Vec<String>),
}

pub fn load_csv(path: &Path, schema: &Schema) -> Result<RawDataset> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text, schema)
}

/// Parses CSV text (header row, comma-delimited) according to `schema`.
pub fn parse_csv(text: &str, schema: &Schema) -> Result<RawDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| ingestion(0, "<header>", e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if headers.iter().all(|h| h.is_empty()) {
        return Err(ingestion(0, "<header>", "empty file"));
    }
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| ingestion(0, name, "column not found in header"))
    };
    let duration_col = find(&schema.duration)?;
    let event_col = find(&schema.event)?;
    let id_col = schema.id.as_deref().map(find).transpose()?;
    let subgroup_cols = schema.subgroup_columns();
    let subgroup_idx = subgroup_cols.iter().map(|c| find(c)).collect::<Result<Vec<_>>>()?;
    for c in schema.categorical.iter().chain(&schema.exclude) {
        find(c)?;
    }

    let mut excluded: HashSet<&str> = schema.exclude.iter().map(String::as_str).collect();
    excluded.insert(&schema.duration);
    excluded.insert(&schema.event);
    if let Some(id) = &schema.id {
        excluded.insert(id);
    }
    for c in &schema.subgroup_only {
        excluded.insert(c);
    }
    let feature_cols: Vec<usize> = (0..headers.len())
        .filter(|&i| !excluded.contains(headers[i].as_str()))
        .collect();

    let records: Vec<csv::StringRecord> = reader
        .records()
        .enumerate()
        .map(|(i, r)| r.map_err(|e| ingestion(i + 1, "<record>", e.to_string())))
        .collect::<Result<_>>()?;
    if records.is_empty() {
        return Err(ingestion(0, "<body>", "no data rows"));
    }

    // Category levels come from the whole file, sorted, so encoding does not
    // depend on the split.
    let kinds: Vec<ColumnKind> = feature_cols
        .iter()
        .map(|&c| {
            if schema.categorical.contains(&headers[c]) {
                let levels: BTreeSet<String> = records.iter().map(|r| r[c].trim().to_string()).collect();
                ColumnKind::Categorical(levels.into_iter().collect())
            } else {
                ColumnKind::Continuous
            }
        })
        .collect();

    let mut feature_names = Vec::new();
    let mut one_hot = Vec::new();
    for (&c, kind) in feature_cols.iter().zip(&kinds) {
        match kind {
            ColumnKind::Continuous => {
                feature_names.push(headers[c].clone());
                one_hot.push(false);
            }
            // First level is the reference and gets no indicator.
            ColumnKind::Categorical(levels) => {
                for level in levels.iter().skip(1) {
                    feature_names.push(format!("{}={}", headers[c], level));
                    one_hot.push(true);
                }
            }
        }
    }

    let n = records.len();
    let mut out = RawDataset {
        feature_names,
        one_hot,
        features: Vec::with_capacity(n),
        durations: Vec::with_capacity(n),
        events: Vec::with_capacity(n),
        ids: Vec::with_capacity(n),
        subgroup_names: subgroup_cols,
        subgroups: Vec::with_capacity(n),
    };
    for (i, rec) in records.iter().enumerate() {
        let row = i + 1;
        if rec.len() != headers.len() {
            return Err(ingestion(
                row,
                "<record>",
                format!("expected {} fields, found {}", headers.len(), rec.len()),
            ));
        }
        let d_cell = &rec[duration_col];
        let d: f64 = d_cell
            .parse()
            .map_err(|_| ingestion(row, &schema.duration, format!("cannot parse '{d_cell}' as a number")))?;
        if !d.is_finite() || d < 0.0 {
            return Err(ingestion(
                row,
                &schema.duration,
                format!("duration must be finite and >= 0, got {d}"),
            ));
        }
        let e_cell = &rec[event_col];
        let e = match e_cell.parse::<f64>() {
            Ok(0.0) => false,
            Ok(1.0) => true,
            _ => {
                return Err(ingestion(
                    row,
                    &schema.event,
                    format!("event must be 0 or 1, got '{e_cell}'"),
                ))
            }
        };
        let mut x = Vec::with_capacity(out.feature_names.len());
        for (&c, kind) in feature_cols.iter().zip(&kinds) {
            let cell = &rec[c];
            match kind {
                ColumnKind::Continuous => {
                    if is_missing(cell) {
                        x.push(f64::NAN);
                    } else {
                        let v: f64 = cell
                            .parse()
                            .map_err(|_| ingestion(row, &headers[c], format!("cannot parse '{cell}' as a number")))?;
                        if !v.is_finite() {
                            return Err(ingestion(row, &headers[c], "non-finite value"));
                        }
                        x.push(v);
                    }
                }
                ColumnKind::Categorical(levels) => {
                    for level in levels.iter().skip(1) {
                        x.push(if cell == level { 1.0 } else { 0.0 });
                    }
                }
            }
        }
        out.features.push(x);
        out.durations.push(d);
        out.events.push(e);
        out.ids.push(match id_col {
            Some(c) => rec[c].to_string(),
            None => format!("row{row}"),
        });
        out.subgroups
            .push(subgroup_idx.iter().map(|&c| rec[c].to_string()).collect());
    }
    Ok(out)
}

fn ingestion(row: usize, column: &str, message: impl Into<String>) -> Error {
    Error::Ingestion {
        row,
        column: column.to_string(),
        message: message.into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> Schema {
        Schema {
            duration: "time".into(),
            event: "status".into(),
            ..Schema::default()
        }
    }

    #[test]
    fn three_rows_two_features() {
        let csv = "time,status,a,b\n1.5,1,0.1,2\n2.0,0,0.2,3\n3.5,1,0.3,4\n";
        let d = parse_csv(csv, &schema()).unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.num_features(), 2);
        assert_eq!(d.events, vec![true, false, true]);
        assert_eq!(d.ids[0], "row1");
    }

    #[test]
    fn missing_event_column() {
        let csv = "time,a\n1,2\n";
        match parse_csv(csv, &schema()) {
            Err(Error::Ingestion { column, .. }) => assert_eq!(column, "status"),
            other => panic!("expected ingestion error, got {other:?}"),
        }
    }

    #[test]
    fn unparseable_cell_names_row_and_column() {
        let csv = "time,status,a\n1,1,0.5\n2,0,abc\n";
        match parse_csv(csv, &schema()) {
            Err(Error::Ingestion { row, column, .. }) => {
                assert_eq!(row, 2);
                assert_eq!(column, "a");
            }
            other => panic!("expected ingestion error, got {other:?}"),
        }
    }

    #[test]
    fn empty_file_and_header_only() {
        assert!(matches!(parse_csv("", &schema()), Err(Error::Ingestion { .. })));
        assert!(matches!(
            parse_csv("time,status\n", &schema()),
            Err(Error::Ingestion { .. })
        ));
    }

    #[test]
    fn bad_event_and_negative_duration() {
        assert!(parse_csv("time,status\n1,2\n", &schema()).is_err());
        assert!(parse_csv("time,status\n-1,1\n", &schema()).is_err());
    }

    #[test]
    fn categorical_one_hot_drops_reference_level() {
        let mut s = schema();
        s.categorical = vec!["size".into()];
        s.subgroups = vec!["er".into()];
        s.subgroup_only = vec!["her2".into()];
        s.id = Some("pid".into());
        let csv = "pid,time,status,size,er,her2\np1,1,1,small,1,pos\np2,2,0,large,0,neg\np3,3,1,mid,1,neg\n";
        let d = parse_csv(csv, &s).unwrap();
        assert_eq!(d.feature_names, vec!["size=mid", "size=small", "er"]);
        assert_eq!(d.one_hot, vec![true, true, false]);
        assert_eq!(d.features[0], vec![0.0, 1.0, 1.0]);
        assert_eq!(d.features[1], vec![0.0, 0.0, 0.0]);
        assert_eq!(d.subgroup_names, vec!["er", "her2"]);
        assert_eq!(d.subgroups[2], vec!["1", "neg"]);
        assert_eq!(d.ids, vec!["p1", "p2", "p3"]);
    }

    #[test]
    fn missing_continuous_cells_become_nan() {
        let csv = "time,status,a\n1,1,\n2,0,NA\n3,1,4\n";
        let d = parse_csv(csv, &schema()).unwrap();
        assert!(d.features[0][0].is_nan());
        assert!(d.features[1][0].is_nan());
        assert_eq!(d.features[2][0], 4.0);
    }

    #[test]
    fn schema_parses_from_toml() {
        let s = Schema::from_toml_str(
            "duration = \"d\"\nevent = \"e\"\ncategorical = [\"c\"]\n",
            Path::new("inline"),
        )
        .unwrap();
        assert_eq!(s.categorical, vec!["c"]);
        assert!(Schema::from_toml_str("duration = 1", Path::new("inline")).is_err());
    }
}
