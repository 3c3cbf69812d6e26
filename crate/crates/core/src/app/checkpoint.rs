//! JSON checkpoints for trained networks.
//!
//! Floats are written in shortest round-trip form, so loading a saved
//! network reproduces every parameter bit for bit.

use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::network::{Activation, Dense, Lhnn};
use crate::train::{TrainConfig, TrainingDataset};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    pub layer_sizes: Vec<usize>,
    pub activation: Activation,
    pub d: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub seed: u64,
    pub train: TrainConfig,
    pub dataset_fingerprint: String,
    pub target: String,
    /// Exact gradients spent harvesting the training data.
    pub harvest_gradients: u64,
    pub final_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub schema_version: u32,
    pub architecture: Architecture,
    /// Per layer, `out × in`.
    pub weights: Vec<Vec<Vec<f64>>>,
    pub biases: Vec<Vec<f64>>,
    pub meta: CheckpointMeta,
}

/// SHA-256 over the little-endian bytes of every record value, hex encoded.
pub fn dataset_fingerprint(data: &TrainingDataset) -> String {
    let mut h = Sha256::new();
    for r in &data.records {
        for v in r.z.q.iter().chain(&r.z.p).chain(&r.dq_dt).chain(&r.dp_dt) {
            h.update(v.to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

impl Checkpoint {
    pub fn from_net(net: &Lhnn, meta: CheckpointMeta) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            architecture: Architecture {
                layer_sizes: net.layer_sizes(),
                activation: net.activation(),
                d: net.dim(),
            },
            weights: net
                .layers()
                .iter()
                .map(|l| l.weight.rows().into_iter().map(|r| r.to_vec()).collect())
                .collect(),
            biases: net.layers().iter().map(|l| l.bias.to_vec()).collect(),
            meta,
        }
    }

    /// Rebuilds the network, checking the stored shapes against the
    /// declared architecture.
    pub fn to_net(&self) -> Result<Lhnn> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::InvalidConfig(format!(
                "unsupported checkpoint schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let sizes = &self.architecture.layer_sizes;
        if sizes.len() < 2 || self.weights.len() != sizes.len() - 1 || self.biases.len() != sizes.len() - 1 {
            return Err(Error::InvalidConfig(
                "checkpoint layer count does not match architecture.layer_sizes".into(),
            ));
        }
        let mut layers = Vec::with_capacity(self.weights.len());
        for (k, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let (inputs, outputs) = (sizes[k], sizes[k + 1]);
            if w.len() != outputs || w.iter().any(|row| row.len() != inputs) || b.len() != outputs {
                return Err(Error::InvalidConfig(format!(
                    "checkpoint layer {k} is not {outputs}×{inputs}"
                )));
            }
            let flat: Vec<f64> = w.iter().flatten().copied().collect();
            let weight = Array2::from_shape_vec((outputs, inputs), flat)
                .map_err(|e| Error::InvalidConfig(e.to_string()))?;
            layers.push(Dense {
                weight,
                bias: Array1::from(b.clone()),
            });
        }
        let net = Lhnn::from_layers(layers, self.architecture.activation)?;
        if net.dim() != self.architecture.d {
            return Err(Error::InvalidConfig(format!(
                "checkpoint architecture.d ({}) does not match its output width ({})",
                self.architecture.d,
                net.dim()
            )));
        }
        Ok(net)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta() -> CheckpointMeta {
        CheckpointMeta {
            seed: 4,
            train: TrainConfig::default(),
            dataset_fingerprint: String::new(),
            target: "gaussian".into(),
            harvest_gradients: 0,
            final_loss: 0.0,
        }
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let net = Lhnn::new(3, &[7, 5], Activation::Tanh, 11).unwrap();
        let ck = Checkpoint::from_net(&net, meta());
        let text = serde_json::to_string(&ck).unwrap();
        let back: Checkpoint = serde_json::from_str(&text).unwrap();
        let net2 = back.to_net().unwrap();
        assert_eq!(net, net2);
        let z = [0.1, -2.0, 3.3, 0.7, 1e-3, -0.5];
        assert_eq!(net.forward(&z).unwrap(), net2.forward(&z).unwrap());
    }

    #[test]
    fn rejects_bad_shapes_and_versions() {
        let net = Lhnn::new(2, &[3], Activation::Sine, 0).unwrap();
        let mut ck = Checkpoint::from_net(&net, meta());
        ck.schema_version = 9;
        assert!(ck.to_net().is_err());
        let mut ck = Checkpoint::from_net(&net, meta());
        ck.weights[0].pop();
        assert!(ck.to_net().is_err());
        let mut ck = Checkpoint::from_net(&net, meta());
        ck.architecture.d = 5;
        assert!(ck.to_net().is_err());
    }
}
