use serde::{Deserialize, Serialize};

/// Per-column z-scoring fitted on the training split. Indicator columns are
/// passed through unchanged.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    /// Population standard deviations; 0 marks a constant column.
    pub scales: Vec<f64>,
    pub passthrough: Vec<bool>,
}

impl Standardizer {
    /// Fits on complete rows. Returns the fitted transform and the indices of
    /// zero-variance columns, which map to 0 after centering.
    pub fn fit(rows: &[Vec<f64>], passthrough: &[bool]) -> (Self, Vec<usize>) {
        let p = passthrough.len();
        let n = rows.len().max(1) as f64;
        let mut means = vec![0.0; p];
        let mut scales = vec![1.0; p];
        let mut constant = Vec::new();
        for j in 0..p {
            if passthrough[j] {
                continue;
            }
            let mean = rows.iter().map(|r| r[j]).sum::<f64>() / n;
            let var = rows.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n;
            means[j] = mean;
            scales[j] = var.sqrt();
            if scales[j] <= 1e-12 * mean.abs().max(1.0) {
                scales[j] = 0.0;
                constant.push(j);
            }
        }
        (
            Standardizer {
                means,
                scales,
                passthrough: passthrough.to_vec(),
            },
            constant,
        )
    }

    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .enumerate()
            .map(|(j, &v)| {
                if self.passthrough[j] {
                    v
                } else if self.scales[j] == 0.0 {
                    0.0
                } else {
                    (v - self.means[j]) / self.scales[j]
                }
            })
            .collect()
    }
}
