//! Feature extraction, mini-batch Adam training and inference.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::checkpoint::Checkpoint;
use super::cnn::{CnnConfig, CnnParams};
use super::gru::{BgruClassifier, CandidateActivation};
use super::tensor::Tensor;
use super::{mean_cross_entropy, ModelKind, Parameterized, RankedPrediction};
use crate::datastore::{self, Dataset, Recording};
use crate::difviz::{self, DifVizConfig};
use crate::error::{Error, Result};
use crate::pipeline::{self, ScalerStats, IMU_CHANNELS, SEQUENCE_LEN};
use crate::NUM_CLASSES;

/// Largest batch used for inference.
const PREDICT_CHUNK: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    pub hidden_size: usize,
    pub candidate: CandidateActivation,
    pub difviz: DifVizConfig,
    pub cnn: CnnConfig,
}

impl TrainConfig {
    /// Published hyperparameters for each model kind: learning rate 1e-3 with
    /// decay 1e-6 for the recurrent models, 1e-4 without decay for the CNN,
    /// 150 epochs.
    pub fn for_kind(kind: ModelKind) -> Self {
        let adam = match kind {
            ModelKind::Gru1 | ModelKind::Gru2 => AdamConfig::default(),
            ModelKind::Cnn => AdamConfig {
                learning_rate: 1e-4,
                decay: 0.0,
                ..AdamConfig::default()
            },
        };
        TrainConfig {
            adam,
            hidden_size: 32,
            candidate: CandidateActivation::Tanh,
            difviz: DifVizConfig::default(),
            cnn: CnnConfig::default(),
        }
    }

    pub fn with_epochs(mut self, epochs: usize) -> Self {
        self.adam.epochs = epochs;
        self
    }
}

/// Preprocessing state a checkpoint needs to turn a raw recording into model
/// input. Everything here is derived from the training split only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preprocessing {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub difviz: Option<DifVizConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raster_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scaler: Option<ScalerStats>,
}

impl Preprocessing {
    pub fn fit<'a, I>(kind: ModelKind, config: &TrainConfig, train: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a Recording>,
    {
        Ok(match kind {
            ModelKind::Gru1 => Preprocessing {
                difviz: Some(config.difviz),
                raster_size: None,
                scaler: None,
            },
            ModelKind::Cnn => Preprocessing {
                difviz: Some(config.difviz),
                raster_size: Some(config.cnn.input_size),
                scaler: None,
            },
            ModelKind::Gru2 => Preprocessing {
                difviz: None,
                raster_size: None,
                scaler: Some(pipeline::fit_scaler(train)?),
            },
        })
    }

    /// Flattened model input for one recording: `T × I` row-major for the
    /// recurrent kinds, `size²` pixels for the CNN.
    pub fn features(&self, kind: ModelKind, rec: &Recording) -> Result<Vec<f64>> {
        let missing = || Error::contract(format!("checkpoint lacks preprocessing for {kind}"));
        match kind {
            ModelKind::Gru1 => {
                let cfg = self.difviz.ok_or_else(missing)?;
                let coords = difviz::reconstruct(rec, &cfg)?;
                let seq = pipeline::preprocess_difviz(&coords)?;
                Ok(seq.values.iter().flat_map(|p| p.iter().copied()).collect())
            }
            ModelKind::Gru2 => {
                let stats = self.scaler.as_ref().ok_or_else(missing)?;
                let imu = pipeline::standardize_imu(rec, stats)?;
                Ok(imu.rows.iter().flat_map(|r| r.iter().copied()).collect())
            }
            ModelKind::Cnn => {
                let cfg = self.difviz.ok_or_else(missing)?;
                let size = self.raster_size.ok_or_else(missing)?;
                let coords = difviz::reconstruct(rec, &cfg)?;
                Ok(difviz::render_raster(&coords, size)?.pixels)
            }
        }
    }
}

/// Trainable parameters of any kind.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Bgru(BgruClassifier),
    Cnn(CnnParams),
}

pub fn input_size(kind: ModelKind) -> usize {
    match kind {
        ModelKind::Gru1 => 2,
        ModelKind::Gru2 => IMU_CHANNELS,
        ModelKind::Cnn => 1,
    }
}

impl Model {
    pub fn init(kind: ModelKind, config: &TrainConfig, rng: &mut ChaCha8Rng) -> Result<Model> {
        Ok(match kind {
            ModelKind::Gru1 | ModelKind::Gru2 => Model::Bgru(BgruClassifier::init(
                input_size(kind),
                config.hidden_size,
                config.candidate,
                rng,
            )),
            ModelKind::Cnn => Model::Cnn(CnnParams::init(config.cnn, rng)?),
        })
    }

    pub fn zeros_like(&self) -> Model {
        match self {
            Model::Bgru(m) => Model::Bgru(m.zeros_like()),
            Model::Cnn(m) => Model::Cnn(m.zeros_like()),
        }
    }

    /// Softmax probabilities, `inputs.len() × 10`.
    pub fn probabilities(&self, inputs: &[&[f64]]) -> Result<Vec<f64>> {
        if inputs.is_empty() {
            return Ok(Vec::new());
        }
        match self {
            Model::Bgru(m) => {
                let (xs, steps) = time_major(inputs, m.input_size())?;
                Ok(m.run(&xs, steps, inputs.len())?.probs)
            }
            Model::Cnn(m) => Ok(m.run(inputs)?.probs),
        }
    }

    /// Mean cross-entropy over the batch and its exact gradient.
    pub fn loss_and_gradients(&self, inputs: &[&[f64]], labels: &[u8]) -> Result<(f64, Model)> {
        if inputs.len() != labels.len() || inputs.is_empty() {
            return Err(Error::contract("batch inputs and labels must be nonempty and aligned"));
        }
        let mut grads = self.zeros_like();
        let loss = match (self, &mut grads) {
            (Model::Bgru(m), Model::Bgru(g)) => {
                let (xs, steps) = time_major(inputs, m.input_size())?;
                let pass = m.run(&xs, steps, inputs.len())?;
                m.backward(&xs, &pass, labels, g);
                mean_cross_entropy(&pass.probs, NUM_CLASSES, labels)?
            }
            (Model::Cnn(m), Model::Cnn(g)) => {
                let pass = m.run(inputs)?;
                m.backward(&pass, labels, g);
                mean_cross_entropy(&pass.probs, NUM_CLASSES, labels)?
            }
            _ => unreachable!("gradient buffer mirrors the model"),
        };
        Ok((loss, grads))
    }
}

impl Parameterized for Model {
    fn named_tensors(&self) -> Vec<(&'static str, &Tensor)> {
        match self {
            Model::Bgru(m) => m.named_tensors(),
            Model::Cnn(m) => m.named_tensors(),
        }
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            Model::Bgru(m) => m.tensors_mut(),
            Model::Cnn(m) => m.tensors_mut(),
        }
    }
}

/// Interleaves per-example `T × I` sequences into a `[T][B][I]` buffer.
fn time_major(inputs: &[&[f64]], dim: usize) -> Result<(Vec<f64>, usize)> {
    let len = inputs[0].len();
    if len == 0 || !len.is_multiple_of(dim) || inputs.iter().any(|x| x.len() != len) {
        return Err(Error::contract("sequence batch has ragged or malformed inputs"));
    }
    let steps = len / dim;
    let b = inputs.len();
    let mut xs = vec![0.0; len * b];
    for (bi, x) in inputs.iter().enumerate() {
        for t in 0..steps {
            let dst = (t * b + bi) * dim;
            xs[dst..dst + dim].copy_from_slice(&x[t * dim..(t + 1) * dim]);
        }
    }
    Ok((xs, steps))
}

/// SHA-256 over the canonical JSON lines of the training recordings.
pub fn fingerprint<'a, I>(recordings: I) -> Result<String>
where
    I: IntoIterator<Item = &'a Recording>,
{
    let mut hasher = Sha256::new();
    for rec in recordings {
        hasher.update(datastore::recording_to_json(rec)?.as_bytes());
        hasher.update(b"\n");
    }
    Ok(hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}

/// Output of the optimization loop.
pub struct Fitted {
    pub model: Model,
    pub loss_history: Vec<f64>,
}

/// Mini-batch Adam over precomputed features. The generator seeded with
/// `seed` draws the initial weights and then every epoch's shuffle.
pub fn fit_model(
    kind: ModelKind,
    config: &TrainConfig,
    inputs: &[&[f64]],
    labels: &[u8],
    seed: u64,
) -> Result<Fitted> {
    config.adam.validate()?;
    if inputs.is_empty() || inputs.len() != labels.len() {
        return Err(Error::domain("training set is empty"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = Model::init(kind, config, &mut rng)?;
    let mut state = AdamState::new(&model.tensors());
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut loss_history = Vec::with_capacity(config.adam.epochs);
    let batch = config.adam.batch_size;
    for epoch in 0..config.adam.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(batch) {
            let xb: Vec<&[f64]> = chunk.iter().map(|&i| inputs[i]).collect();
            let yb: Vec<u8> = chunk.iter().map(|&i| labels[i]).collect();
            let (loss, grads) = model.loss_and_gradients(&xb, &yb)?;
            if !loss.is_finite() {
                return Err(Error::Divergence(format!(
                    "{kind}: non-finite loss in epoch {epoch}"
                )));
            }
            total += loss * chunk.len() as f64;
            let g = grads.tensors();
            adam_step(&mut model.tensors_mut(), &g, &mut state, &config.adam)?;
        }
        let mean = total / inputs.len() as f64;
        log::debug!("{kind} epoch {epoch}: loss {mean:.5}");
        loss_history.push(mean);
    }
    if model.tensors().iter().any(|t| !t.is_finite()) {
        return Err(Error::Divergence(format!("{kind}: non-finite parameters")));
    }
    Ok(Fitted {
        model,
        loss_history,
    })
}

/// Trains one model kind on `train` and packages a self-contained checkpoint.
///
/// Recordings the trajectory chain cannot use (no movement left after
/// redundancy removal) are skipped with a warning.
pub fn train(kind: ModelKind, train: &Dataset, config: &TrainConfig, seed: u64) -> Result<Checkpoint> {
    if train.is_empty() {
        return Err(Error::domain("training set is empty"));
    }
    let prep = Preprocessing::fit(kind, config, &train.recordings)?;
    let mut feats = Vec::with_capacity(train.len());
    let mut labels = Vec::with_capacity(train.len());
    for (i, rec) in train.recordings.iter().enumerate() {
        match prep.features(kind, rec) {
            Ok(f) => {
                feats.push(f);
                labels.push(rec.label);
            }
            Err(Error::Domain(msg)) => log::warn!("{kind}: skipping recording {i}: {msg}"),
            Err(e) => return Err(e),
        }
    }
    if feats.is_empty() {
        return Err(Error::domain("no usable training recordings"));
    }
    let refs: Vec<&[f64]> = feats.iter().map(Vec::as_slice).collect();
    let fitted = fit_model(kind, config, &refs, &labels, seed)?;
    Ok(Checkpoint {
        kind,
        seed,
        config: config.clone(),
        preprocessing: prep,
        train_fingerprint: fingerprint(&train.recordings)?,
        train_size: feats.len(),
        loss_history: fitted.loss_history,
        model: fitted.model,
    })
}

impl Checkpoint {
    /// Applies the embedded preprocessing and returns the full ranking.
    pub fn predict_ranked(&self, rec: &Recording) -> Result<RankedPrediction> {
        rec.validate()?;
        let f = self.preprocessing.features(self.kind, rec)?;
        let probs = self.model.probabilities(&[&f])?;
        Ok(RankedPrediction::from_scores(probs))
    }

    /// Rankings for precomputed feature vectors, evaluated in batches.
    pub fn predict_features(&self, inputs: &[&[f64]]) -> Result<Vec<RankedPrediction>> {
        let mut out = Vec::with_capacity(inputs.len());
        for chunk in inputs.chunks(PREDICT_CHUNK) {
            let probs = self.model.probabilities(chunk)?;
            out.extend(
                probs
                    .chunks_exact(NUM_CLASSES)
                    .map(|p| RankedPrediction::from_scores(p.to_vec())),
            );
        }
        Ok(out)
    }

    pub fn predict_batch(&self, recs: &[&Recording]) -> Result<Vec<RankedPrediction>> {
        let feats = recs
            .iter()
            .map(|r| {
                r.validate()?;
                self.preprocessing.features(self.kind, r)
            })
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<&[f64]> = feats.iter().map(Vec::as_slice).collect();
        self.predict_features(&refs)
    }

    pub fn sequence_len(&self) -> Option<usize> {
        match self.kind {
            ModelKind::Gru1 => Some(SEQUENCE_LEN),
            ModelKind::Gru2 => self.preprocessing.scaler.as_ref().map(|s| s.t_max),
            ModelKind::Cnn => None,
        }
    }
}
