//! JSON checkpoints: architecture config, per-layer parameter arrays keyed by
//! layer id, the actnorm state, and the build seed.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::config::FlowConfig;
use crate::flow::model::{build_flow, FlowModel};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config: FlowConfig,
    pub params: BTreeMap<String, Vec<f64>>,
    pub actnorm_initialized: bool,
    pub seed: u64,
}

impl Checkpoint {
    pub fn from_model(model: &FlowModel) -> Self {
        let flat = model.params();
        let params = model
            .param_layout()
            .iter()
            .map(|(name, off, len)| (name.clone(), flat[*off..*off + *len].to_vec()))
            .collect();
        Self {
            format_version: FORMAT_VERSION,
            config: model.config.clone(),
            params,
            actnorm_initialized: model.actnorm_initialized(),
            seed: model.seed,
        }
    }

    pub fn into_model(self) -> Result<FlowModel> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported checkpoint format version {}",
                self.format_version
            )));
        }
        let mut model = build_flow(&self.config, self.seed)?;
        let mut flat = model.params();
        let mut seen = 0usize;
        for (name, off, len) in model.param_layout().to_vec() {
            let values = self.params.get(&name).ok_or_else(|| {
                Error::Format(format!("checkpoint is missing parameters for layer {name}"))
            })?;
            if values.len() != len {
                return Err(Error::Format(format!(
                    "layer {name} expects {len} parameters, checkpoint has {}",
                    values.len()
                )));
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::Format(format!(
                    "layer {name} contains non-finite parameters"
                )));
            }
            flat[off..off + len].copy_from_slice(values);
            seen += 1;
        }
        if seen != self.params.len() {
            return Err(Error::Format(format!(
                "checkpoint has {} parameter entries, model has {} layers",
                self.params.len(),
                seen
            )));
        }
        model.set_params(&flat)?;
        model.set_actnorm_initialized(self.actnorm_initialized);
        Ok(model)
    }
}

pub fn save(model: &FlowModel, path: &Path) -> Result<()> {
    let file = File::create(path)?;
    serde_json::to_writer(BufWriter::new(file), &Checkpoint::from_model(model))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<FlowModel> {
    let file = File::open(path)?;
    let ckpt: Checkpoint = serde_json::from_reader(BufReader::new(file))?;
    ckpt.into_model()
}
