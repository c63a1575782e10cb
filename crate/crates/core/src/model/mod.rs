//! The dual mixture-of-experts hazard network.
//!
//! Two evaluation paths share one parameter store: a graph path over whole
//! batches (used for training and bulk prediction) and a plain per-record
//! path used for single-patient inference. They are written independently
//! and are tested against each other.

mod config;
mod forward;
mod infer;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Matrix, ParameterStore};
use crate::error::{Error, Result};
use crate::rng;

pub use config::{DualMoeConfig, RouterInput};
pub use forward::{ForwardVars, GraphBatch};

/// Parameter ids of one `x·W + b` layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Linear {
    pub w: usize,
    pub b: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) struct HazardExpert {
    pub hidden: Vec<Linear>,
    pub out: Linear,
}

impl HazardExpert {
    /// The layer that consumes `[z; e_t]`.
    pub fn first(&self) -> Linear {
        self.hidden.first().copied().unwrap_or(self.out)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) struct Layout {
    pub encoder: Vec<Linear>,
    pub feat_experts: Vec<Vec<Linear>>,
    pub feat_router: Option<Linear>,
    pub time_embedding: usize,
    pub haz_experts: Vec<HazardExpert>,
    pub haz_router: Option<Linear>,
}

/// Per-bin hazards with the derived survival and event-mass curves.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HazardCurve {
    pub lambda: Vec<f64>,
    pub survival: Vec<f64>,
    pub event_mass: Vec<f64>,
}

impl HazardCurve {
    pub fn from_hazards(lambda: Vec<f64>) -> Self {
        let mut survival = Vec::with_capacity(lambda.len());
        let mut event_mass = Vec::with_capacity(lambda.len());
        let mut prev = 1.0;
        for &l in &lambda {
            event_mass.push(l * prev);
            prev *= 1.0 - l;
            survival.push(prev);
        }
        HazardCurve {
            lambda,
            survival,
            event_mass,
        }
    }

    /// Builds a curve from survival values, recovering hazards as
    /// `1 - S(t)/S(t-1)` (0 where `S(t-1)` is 0).
    pub fn from_survival(survival: Vec<f64>) -> Self {
        let mut prev = 1.0;
        let lambda = survival
            .iter()
            .map(|&s| {
                let l = if prev > 0.0 {
                    (1.0 - s / prev).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                prev = s;
                l
            })
            .collect();
        let mut curve = Self::from_hazards(lambda);
        curve.survival = survival;
        curve
    }

    pub fn num_bins(&self) -> usize {
        self.lambda.len()
    }
}

/// Output of the feature side for one patient.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedRepresentation {
    pub z: Vec<f64>,
    pub pi_feat: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoutingTrace {
    pub pi_feat: Vec<f64>,
    /// `(t_max + 1) × L`.
    pub pi_haz: Matrix,
}

#[derive(Clone, Debug)]
pub struct DualMoe {
    config: DualMoeConfig,
    params: ParameterStore,
    layout: Layout,
}

fn xavier(rows: usize, cols: usize, seed: u64, name: &str) -> Matrix {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let mut rng = rng::stream(seed, name);
    let data = (0..rows * cols).map(|_| rng.random_range(-bound..=bound)).collect();
    Matrix::from_vec(rows, cols, data).expect("init shape")
}

struct Builder<'a> {
    store: &'a mut ParameterStore,
    seed: u64,
}

impl Builder<'_> {
    fn linear(&mut self, prefix: &str, fan_in: usize, fan_out: usize) -> Result<Linear> {
        let wname = format!("{prefix}.weight");
        let w = self.store.insert(&wname, xavier(fan_in, fan_out, self.seed, &wname))?;
        let b = self.store.insert(format!("{prefix}.bias"), Matrix::zeros(1, fan_out))?;
        Ok(Linear { w, b })
    }

    fn stack(&mut self, prefix: &str, fan_in: usize, width: usize, depth: usize) -> Result<Vec<Linear>> {
        (0..depth)
            .map(|i| self.linear(&format!("{prefix}.{i}"), if i == 0 { fan_in } else { width }, width))
            .collect()
    }
}

impl DualMoe {
    /// Fresh parameters. Each tensor draws from its own stream keyed by
    /// `(seed, parameter name)`, so variants that share a parameter name
    /// start from identical values.
    pub fn new(config: DualMoeConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut store = ParameterStore::new();
        let mut b = Builder {
            store: &mut store,
            seed,
        };
        let c = &config;
        let encoder = b.stack("encoder", c.input_dim, c.encoder_width, c.encoder_depth)?;
        let feat_experts = (0..c.k())
            .map(|k| {
                b.stack(
                    &format!("feat_expert.{k}"),
                    c.encoded_dim(),
                    c.expert_width,
                    c.expert_depth,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let feat_router = if c.feature_moe {
            Some(b.linear("feat_router", c.encoded_dim(), c.k())?)
        } else {
            None
        };
        let normal = Normal::new(0.0, 0.1).expect("valid normal");
        let mut erng = rng::stream(seed, "time_embedding");
        let emb: Vec<f64> = (0..c.num_bins() * c.d_time).map(|_| normal.sample(&mut erng)).collect();
        let time_embedding = b
            .store
            .insert("time_embedding", Matrix::from_vec(c.num_bins(), c.d_time, emb)?)?;
        let cat = c.z_dim() + c.d_time;
        let haz_experts = (0..c.l())
            .map(|l| {
                let prefix = format!("haz_expert.{l}");
                let hidden = b.stack(&prefix, cat, c.expert_width, c.expert_depth)?;
                let fan_in = if hidden.is_empty() { cat } else { c.expert_width };
                let out = b.linear(&format!("{prefix}.out"), fan_in, 1)?;
                Ok(HazardExpert { hidden, out })
            })
            .collect::<Result<Vec<_>>>()?;
        let haz_router = if c.hazard_moe {
            let fan_in = match c.hazard_router_input {
                RouterInput::Both => cat,
                RouterInput::FeaturesOnly => c.z_dim(),
                RouterInput::TimeOnly => c.d_time,
            };
            Some(b.linear("haz_router", fan_in, c.l())?)
        } else {
            None
        };
        Ok(DualMoe {
            config,
            params: store,
            layout: Layout {
                encoder,
                feat_experts,
                feat_router,
                time_embedding,
                haz_experts,
                haz_router,
            },
        })
    }

    /// Rebuilds a model around previously saved parameters, checking that
    /// every expected tensor is present with the expected shape.
    pub fn from_parts(config: DualMoeConfig, params: ParameterStore) -> Result<Self> {
        let template = DualMoe::new(config.clone(), 0)?;
        if template.params.names() != params.names() {
            return Err(Error::config(format!(
                "parameter set does not match the model config: expected {:?}, found {:?}",
                template.params.names(),
                params.names()
            )));
        }
        for id in 0..params.len() {
            if template.params.value(id).shape() != params.value(id).shape() {
                return Err(Error::config(format!(
                    "parameter '{}' has shape {:?}, expected {:?}",
                    params.name(id),
                    params.value(id).shape(),
                    template.params.value(id).shape()
                )));
            }
        }
        Ok(DualMoe {
            config,
            params,
            layout: template.layout,
        })
    }

    pub fn config(&self) -> &DualMoeConfig {
        &self.config
    }

    pub fn params(&self) -> &ParameterStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParameterStore {
        &mut self.params
    }

    pub fn into_params(self) -> ParameterStore {
        self.params
    }

    pub(crate) fn layout(&self) -> &Layout {
        &self.layout
    }
}
