//! Versioned JSON checkpoints: model config, parameters keyed by module
//! path, and optional optimizer state.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{ModelConfig, Network};
use crate::tensor::Tensor;
use crate::train::Adam;
use crate::tracker::{BoxPredictor, EchoHistory};
use crate::data::SeqSample;

pub const CHECKPOINT_FORMAT: &str = "boxseq-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckpointKind {
    Network,
    /// Parameter-free stub that repeats the latest history box.
    EchoHistory,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub value: Tensor,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub kind: CheckpointKind,
    pub model: ModelConfig,
    /// Completed training epochs.
    pub epoch: usize,
    pub params: Vec<NamedTensor>,
    pub optimizer: Option<Adam>,
    /// Selection metric of this checkpoint (lower is better), when known.
    pub metric: Option<f64>,
}

impl Checkpoint {
    pub fn from_network(net: &Network, epoch: usize, optimizer: Option<&Adam>, metric: Option<f64>) -> Self {
        let store = net.params();
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            kind: CheckpointKind::Network,
            model: net.config().clone(),
            epoch,
            params: store
                .ids()
                .map(|id| NamedTensor {
                    name: store.name(id).to_string(),
                    value: store.get(id).clone(),
                })
                .collect(),
            optimizer: optimizer.cloned(),
            metric,
        }
    }

    pub fn echo_history(model: ModelConfig) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            kind: CheckpointKind::EchoHistory,
            model,
            epoch: 0,
            params: Vec::new(),
            optimizer: None,
            metric: None,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        serde_json::to_writer(&mut w, self).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let ck: Checkpoint = serde_json::from_reader(BufReader::new(file))
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "{}: unsupported checkpoint {} v{}",
                path.display(),
                ck.format,
                ck.version
            )));
        }
        Ok(ck)
    }

    /// Fails unless this checkpoint was produced for `expected`.
    pub fn check_config(&self, expected: &ModelConfig) -> Result<()> {
        if &self.model != expected {
            return Err(Error::Checkpoint(format!(
                "checkpoint model config differs from the requested one:\n  checkpoint: {:?}\n  requested:  {:?}",
                self.model, expected
            )));
        }
        Ok(())
    }

    /// Rebuilds the network, checking every parameter's name and shape.
    pub fn to_network(&self) -> Result<Network> {
        if self.kind != CheckpointKind::Network {
            return Err(Error::Checkpoint("checkpoint does not hold network parameters".into()));
        }
        let mut net = Network::new(self.model.clone(), 0).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let store = net.params_mut();
        if store.len() != self.params.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint has {} parameter tensors, model expects {}",
                self.params.len(),
                store.len()
            )));
        }
        for p in &self.params {
            let id = store
                .id(&p.name)
                .ok_or_else(|| Error::Checkpoint(format!("unexpected parameter {}", p.name)))?;
            if store.get(id).shape() != p.value.shape() || p.value.len() != p.value.rows() * p.value.cols() {
                return Err(Error::Checkpoint(format!(
                    "parameter {} has shape {:?}, model expects {:?}",
                    p.name,
                    p.value.shape(),
                    store.get(id).shape()
                )));
            }
            *store.get_mut(id) = p.value.clone();
        }
        Ok(net)
    }

    pub fn into_predictor(self) -> Result<LoadedModel> {
        match self.kind {
            CheckpointKind::Network => Ok(LoadedModel::Network(Box::new(self.to_network()?))),
            CheckpointKind::EchoHistory => Ok(LoadedModel::Echo(EchoHistory {
                n_frames: self.model.n_frames,
                points_per_frame: self.model.points_per_frame,
            })),
        }
    }
}

/// A predictor restored from a checkpoint.
pub enum LoadedModel {
    Network(Box<Network>),
    Echo(EchoHistory),
}

impl BoxPredictor for LoadedModel {
    fn window(&self) -> (usize, usize) {
        match self {
            LoadedModel::Network(n) => n.window(),
            LoadedModel::Echo(e) => e.window(),
        }
    }

    fn predict(&self, sample: &SeqSample) -> Result<[f64; 4]> {
        match self {
            LoadedModel::Network(n) => BoxPredictor::predict(n.as_ref(), sample),
            LoadedModel::Echo(e) => e.predict(sample),
        }
    }
}
