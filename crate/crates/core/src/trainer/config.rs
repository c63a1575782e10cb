use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Validation signal used for early stopping.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StopCriterion {
    #[default]
    Cindex,
    Nll,
}

impl fmt::Display for StopCriterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopCriterion::Cindex => "cindex",
            StopCriterion::Nll => "nll",
        })
    }
}

impl FromStr for StopCriterion {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cindex" => Ok(StopCriterion::Cindex),
            "nll" => Ok(StopCriterion::Nll),
            _ => Err(Error::usage(format!("unknown stopping criterion '{s}' (cindex, nll)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub seeds: Vec<u64>,
    pub eval_every: usize,
    pub early_stopping: StopCriterion,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            batch_size: 128,
            learning_rate: 1e-3,
            patience: 20,
            seeds: (0..10).collect(),
            eval_every: 1,
            early_stopping: StopCriterion::Cindex,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("epochs must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be at least 1"));
        }
        if self.eval_every == 0 {
            return Err(Error::config("eval_every must be at least 1"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::config("learning_rate must be positive and finite"));
        }
        if self.patience > self.epochs {
            return Err(Error::config(format!(
                "patience ({}) exceeds epochs ({})",
                self.patience, self.epochs
            )));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("seeds must not be empty"));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::format(origin, e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, path)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("train config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = TrainConfig::default();
        c.validate().unwrap();
        assert_eq!(c.seeds.len(), 10);
    }

    #[test]
    fn round_trips_through_toml() {
        let c = TrainConfig {
            early_stopping: StopCriterion::Nll,
            seeds: vec![3, 7],
            ..Default::default()
        };
        let back = TrainConfig::from_toml_str(&c.to_toml_string(), Path::new("t.toml")).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn rejects_bad_values() {
        let p = Path::new("t.toml");
        assert!(TrainConfig::from_toml_str("epochs = 5\npatience = 6\n", p).is_err());
        assert!(TrainConfig::from_toml_str("seeds = []\n", p).is_err());
        assert!(TrainConfig::from_toml_str("batch_size = 0\n", p).is_err());
        assert!(matches!(
            TrainConfig::from_toml_str("epoch = 5\n", p),
            Err(Error::Format { .. })
        ));
        let partial = TrainConfig::from_toml_str("epochs = 50\n", p).unwrap();
        assert_eq!(partial.batch_size, 128);
    }
}
