//! Checkpoint container.
//!
//! Layout:
//!
//! ```text
//! airscript-ckpt/1\n
//! {manifest JSON on one line}\n
//! <payload: every tensor as little-endian f64, in manifest order>
//! ```
//!
//! The manifest records the model kind, the creation seed, hyperparameters,
//! the embedded preprocessing, a fingerprint of the training split, the loss
//! history and the name and shape of every tensor.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::cnn::CnnParams;
use super::gru::{BgruClassifier, GruLayerParams};
use super::tensor::Tensor;
use super::train::{input_size, Model, Preprocessing, TrainConfig};
use super::{ModelKind, Parameterized};
use crate::error::{Error, Result};
use crate::NUM_CLASSES;

pub const CHECKPOINT_FORMAT: &str = "airscript-ckpt/1";

/// A trained model together with everything inference needs.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: ModelKind,
    pub seed: u64,
    pub config: TrainConfig,
    pub preprocessing: Preprocessing,
    /// SHA-256 of the training recordings.
    pub train_fingerprint: String,
    pub train_size: usize,
    pub loss_history: Vec<f64>,
    pub model: Model,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    format: String,
    kind: ModelKind,
    seed: u64,
    config: TrainConfig,
    preprocessing: Preprocessing,
    train_fingerprint: String,
    train_size: usize,
    loss_history: Vec<f64>,
    tensors: Vec<TensorEntry>,
}

fn skeleton(kind: ModelKind, config: &TrainConfig) -> Result<Model> {
    Ok(match kind {
        ModelKind::Gru1 | ModelKind::Gru2 => {
            let (i, h, a) = (input_size(kind), config.hidden_size, config.candidate);
            Model::Bgru(BgruClassifier {
                forward: GruLayerParams::zeros(i, h, a),
                backward: GruLayerParams::zeros(i, h, a),
                w_out: Tensor::zeros(&[NUM_CLASSES, 2 * h]),
                b_out: Tensor::zeros(&[NUM_CLASSES]),
            })
        }
        ModelKind::Cnn => {
            config.cnn.validate()?;
            Model::Cnn(CnnParams::zeros(config.cnn))
        }
    })
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let manifest = Manifest {
            format: CHECKPOINT_FORMAT.to_string(),
            kind: self.kind,
            seed: self.seed,
            config: self.config.clone(),
            preprocessing: self.preprocessing.clone(),
            train_fingerprint: self.train_fingerprint.clone(),
            train_size: self.train_size,
            loss_history: self.loss_history.clone(),
            tensors: self
                .model
                .named_tensors()
                .iter()
                .map(|(n, t)| TensorEntry {
                    name: n.to_string(),
                    shape: t.shape().to_vec(),
                })
                .collect(),
        };
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_FORMAT.as_bytes());
        out.push(b'\n');
        out.extend_from_slice(serde_json::to_string(&manifest)?.as_bytes());
        out.push(b'\n');
        for t in self.model.tensors() {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
        let bad = |msg: &str| Error::contract(format!("malformed checkpoint: {msg}"));
        let nl = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| bad("missing header"))?;
        let magic = std::str::from_utf8(&bytes[..nl]).map_err(|_| bad("header is not text"))?;
        if magic != CHECKPOINT_FORMAT {
            return Err(Error::UnknownFormat(magic.chars().take(64).collect()));
        }
        let rest = &bytes[nl + 1..];
        let nl2 = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| bad("missing manifest"))?;
        let manifest: Manifest = serde_json::from_slice(&rest[..nl2])?;
        if manifest.format != CHECKPOINT_FORMAT {
            return Err(Error::UnknownFormat(manifest.format));
        }
        let payload = &rest[nl2 + 1..];

        let mut model = skeleton(manifest.kind, &manifest.config)?;
        let expected = model.named_tensors();
        if expected.len() != manifest.tensors.len()
            || expected
                .iter()
                .zip(&manifest.tensors)
                .any(|((n, t), e)| *n != e.name || t.shape() != e.shape.as_slice())
        {
            return Err(bad("tensor list does not match the model configuration"));
        }
        let total: usize = expected.iter().map(|(_, t)| t.len()).sum();
        if payload.len() != total * 8 {
            return Err(bad(&format!(
                "payload has {} bytes, expected {}",
                payload.len(),
                total * 8
            )));
        }
        let mut words = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
        for t in model.tensors_mut() {
            for v in t.data_mut() {
                *v = words.next().expect("payload length checked");
            }
        }
        Ok(Checkpoint {
            kind: manifest.kind,
            seed: manifest.seed,
            config: manifest.config,
            preprocessing: manifest.preprocessing,
            train_fingerprint: manifest.train_fingerprint,
            train_size: manifest.train_size,
            loss_history: manifest.loss_history,
            model,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Checkpoint> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuralnet::cnn::CnnConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample(kind: ModelKind) -> Checkpoint {
        let mut config = TrainConfig::for_kind(kind);
        config.hidden_size = 3;
        config.cnn = CnnConfig {
            input_size: 16,
            conv1_filters: 2,
            conv2_filters: 3,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let model = Model::init(kind, &config, &mut rng).unwrap();
        Checkpoint {
            kind,
            seed: 5,
            config,
            preprocessing: Preprocessing {
                difviz: None,
                raster_size: None,
                scaler: None,
            },
            train_fingerprint: "ab".into(),
            train_size: 3,
            loss_history: vec![2.3, 0.1 + 0.2, 1e-300],
            model,
        }
    }

    #[test]
    fn bytes_round_trip_exactly() {
        for kind in ModelKind::ALL {
            let ck = sample(kind);
            let bytes = ck.to_bytes().unwrap();
            let back = Checkpoint::from_bytes(&bytes).unwrap();
            assert_eq!(back, ck);
            assert_eq!(back.to_bytes().unwrap(), bytes);
        }
    }

    #[test]
    fn rejects_foreign_or_truncated() {
        let bytes = sample(ModelKind::Gru1).to_bytes().unwrap();
        assert!(matches!(
            Checkpoint::from_bytes(b"other/2\n{}\n"),
            Err(Error::UnknownFormat(_))
        ));
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        assert!(Checkpoint::from_bytes(b"").is_err());
    }
}
