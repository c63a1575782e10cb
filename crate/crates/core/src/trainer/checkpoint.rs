use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TrainConfig;
use crate::autodiff::ParameterStore;
use crate::container::Container;
use crate::data::Preprocessor;
use crate::error::{Error, Result};
use crate::model::{DualMoe, DualMoeConfig};

pub const CHECKPOINT_KIND: &str = "checkpoint";

/// A trained model together with everything needed to score new patients.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub model: DualMoe,
    pub preprocessor: Preprocessor,
    pub train_config: TrainConfig,
    pub seed: u64,
    pub best_epoch: usize,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    model_config: DualMoeConfig,
    train_config: TrainConfig,
    preprocessor: Preprocessor,
    seed: u64,
    best_epoch: usize,
    adam_step: u64,
    params: Vec<String>,
}

impl Checkpoint {
    pub fn to_container(&self) -> Container {
        let store = self.model.params();
        let meta = Meta {
            model_config: self.model.config().clone(),
            train_config: self.train_config.clone(),
            preprocessor: self.preprocessor.clone(),
            seed: self.seed,
            best_epoch: self.best_epoch,
            adam_step: store.step_count(),
            params: store.names().to_vec(),
        };
        let mut c = Container::new(CHECKPOINT_KIND, serde_json::to_value(meta).expect("meta serializes"));
        for id in 0..store.len() {
            let name = store.name(id);
            let (m, v) = store.moments(id);
            c.push(format!("param/{name}"), store.value(id).clone());
            c.push(format!("adam_m/{name}"), m.clone());
            c.push(format!("adam_v/{name}"), v.clone());
        }
        c
    }

    pub fn from_container(c: Container, origin: &Path) -> Result<Self> {
        let c = c.expect_kind(CHECKPOINT_KIND, origin)?;
        let meta: Meta = serde_json::from_value(c.meta.clone()).map_err(|e| Error::format(origin, e.to_string()))?;
        let tensor = |prefix: &str, name: &str| {
            c.tensor(&format!("{prefix}/{name}"))
                .cloned()
                .ok_or_else(|| Error::format(origin, format!("missing tensor {prefix}/{name}")))
        };
        let mut store = ParameterStore::new();
        for name in &meta.params {
            let id = store.insert(name.clone(), tensor("param", name)?)?;
            store.set_optimizer_state(id, tensor("adam_m", name)?, tensor("adam_v", name)?)?;
        }
        store.set_step_count(meta.adam_step);
        let model = DualMoe::from_parts(meta.model_config, store)?;
        if meta.preprocessor.num_features() != model.config().input_dim {
            return Err(Error::format(
                origin,
                "preprocessor width does not match the model input",
            ));
        }
        Ok(Checkpoint {
            model,
            preprocessor: meta.preprocessor,
            train_config: meta.train_config,
            seed: meta.seed,
            best_epoch: meta.best_epoch,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        self.to_container().write(path)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_container(Container::read(path)?, path)
    }
}
