use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// What the hazard router sees at bin `t`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RouterInput {
    FeaturesOnly,
    TimeOnly,
    #[default]
    Both,
}

impl RouterInput {
    pub const ALL: [RouterInput; 3] = [RouterInput::FeaturesOnly, RouterInput::TimeOnly, RouterInput::Both];

    pub fn as_str(self) -> &'static str {
        match self {
            RouterInput::FeaturesOnly => "features_only",
            RouterInput::TimeOnly => "time_only",
            RouterInput::Both => "both",
        }
    }
}

impl fmt::Display for RouterInput {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RouterInput {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RouterInput::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown router input '{s}' (features_only, time_only, both)")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DualMoeConfig {
    /// Number of covariates; 0 in a config file means "take it from the data".
    pub input_dim: usize,
    /// Hidden layers of the shared encoder; 0 makes it the identity.
    pub encoder_depth: usize,
    pub encoder_width: usize,
    /// Hidden layers per feature expert and per hazard expert.
    pub expert_depth: usize,
    pub expert_width: usize,
    pub num_feature_experts: usize,
    pub num_hazard_experts: usize,
    pub t_max: usize,
    pub d_time: usize,
    pub alpha: f64,
    pub beta: f64,
    pub feature_moe: bool,
    pub hazard_moe: bool,
    pub hazard_router_input: RouterInput,
}

impl Default for DualMoeConfig {
    fn default() -> Self {
        Self::metabric(0)
    }
}

impl DualMoeConfig {
    pub fn metabric(input_dim: usize) -> Self {
        DualMoeConfig {
            input_dim,
            encoder_depth: 4,
            encoder_width: 64,
            expert_depth: 1,
            expert_width: 64,
            num_feature_experts: 4,
            num_hazard_experts: 4,
            t_max: 19,
            d_time: 8,
            alpha: 0.3,
            beta: 0.5,
            feature_moe: true,
            hazard_moe: true,
            hazard_router_input: RouterInput::Both,
        }
    }

    pub fn gbsg(input_dim: usize) -> Self {
        DualMoeConfig {
            encoder_depth: 3,
            expert_depth: 2,
            num_feature_experts: 6,
            num_hazard_experts: 3,
            ..Self::metabric(input_dim)
        }
    }

    pub fn preset(name: &str, input_dim: usize) -> Result<Self> {
        match name {
            "metabric" => Ok(Self::metabric(input_dim)),
            "gbsg" => Ok(Self::gbsg(input_dim)),
            other => Err(Error::config(format!("unknown preset '{other}' (metabric, gbsg)"))),
        }
    }

    /// Single encoder and single hazard network, NLL only.
    pub fn naive(&self) -> Self {
        DualMoeConfig {
            feature_moe: false,
            hazard_moe: false,
            ..self.clone()
        }
    }

    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::format(origin, e.to_string()))?;
        cfg.validate_shape()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, path)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Experts actually instantiated on the feature side.
    pub fn k(&self) -> usize {
        if self.feature_moe {
            self.num_feature_experts
        } else {
            1
        }
    }

    /// Experts actually instantiated on the hazard side.
    pub fn l(&self) -> usize {
        if self.hazard_moe {
            self.num_hazard_experts
        } else {
            1
        }
    }

    pub fn num_bins(&self) -> usize {
        self.t_max + 1
    }

    pub fn encoded_dim(&self) -> usize {
        if self.encoder_depth == 0 {
            self.input_dim
        } else {
            self.encoder_width
        }
    }

    pub fn z_dim(&self) -> usize {
        self.expert_width
    }

    fn validate_shape(&self) -> Result<()> {
        let checks = [
            (self.num_feature_experts >= 1, "num_feature_experts must be >= 1"),
            (self.num_hazard_experts >= 1, "num_hazard_experts must be >= 1"),
            (self.d_time >= 1, "d_time must be >= 1"),
            (self.t_max >= 1, "t_max must be >= 1"),
            (self.expert_depth >= 1, "expert_depth must be >= 1"),
            (self.expert_width >= 1, "expert_width must be >= 1"),
            (self.encoder_width >= 1, "encoder_width must be >= 1"),
            (
                self.alpha >= 0.0 && self.alpha.is_finite(),
                "alpha must be finite and >= 0",
            ),
            (
                self.beta >= 0.0 && self.beta.is_finite(),
                "beta must be finite and >= 0",
            ),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, msg)) => Err(Error::config(*msg)),
            None => Ok(()),
        }
    }

    /// Full validation, including a known input width.
    pub fn validate(&self) -> Result<()> {
        self.validate_shape()?;
        if self.input_dim == 0 {
            return Err(Error::config("input_dim must be >= 1"));
        }
        Ok(())
    }
}
