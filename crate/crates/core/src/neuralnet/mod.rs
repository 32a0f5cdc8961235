//! Neural classifiers trained from scratch in double precision.
//!
//! Three model kinds share one training loop:
//!
//! - `gru1`: bidirectional GRU over whitened 100-point trajectories,
//! - `gru2`: bidirectional GRU over scaled, resampled raw IMU channels,
//! - `cnn`: small convolutional network over 64×64 trajectory rasters.
//!
//! Gradients are derived by hand for each layer; [`gradcheck`] verifies them
//! against central finite differences.

mod activation;
pub mod adam;
pub mod checkpoint;
pub mod cnn;
pub mod gradcheck;
pub mod gru;
pub mod tensor;
pub mod train;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::Checkpoint;
pub use cnn::{CnnConfig, CnnParams};
pub use gru::{gru_cell_step, BgruClassifier, CandidateActivation, GruLayerParams};
pub use tensor::Tensor;
pub use train::{train, Model, Preprocessing, TrainConfig};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Gru1,
    Gru2,
    Cnn,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Gru1, ModelKind::Gru2, ModelKind::Cnn];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Gru1 => "gru1",
            ModelKind::Gru2 => "gru2",
            ModelKind::Cnn => "cnn",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gru1" => Ok(ModelKind::Gru1),
            "gru2" => Ok(ModelKind::Gru2),
            "cnn" => Ok(ModelKind::Cnn),
            other => Err(Error::domain(format!("unknown model kind `{other}`"))),
        }
    }
}

/// Ordered access to a model's trainable tensors.
pub trait Parameterized {
    fn named_tensors(&self) -> Vec<(&'static str, &Tensor)>;

    /// Same order as [`Parameterized::named_tensors`].
    fn tensors_mut(&mut self) -> Vec<&mut Tensor>;

    fn tensors(&self) -> Vec<&Tensor> {
        self.named_tensors().into_iter().map(|(_, t)| t).collect()
    }
}

/// Class labels ordered best first, with per-class scores.
///
/// `scores[c]` is the score of class `c`; `labels` sorts classes by
/// descending score, ties broken by ascending label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedPrediction {
    pub labels: Vec<usize>,
    pub scores: Vec<f64>,
}

impl RankedPrediction {
    pub fn from_scores(scores: Vec<f64>) -> Self {
        let mut labels: Vec<usize> = (0..scores.len()).collect();
        labels.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        RankedPrediction { labels, scores }
    }

    /// Uniform scores; the ranking is simply `0, 1, …`.
    pub fn uniform(classes: usize) -> Self {
        RankedPrediction::from_scores(vec![1.0 / classes as f64; classes])
    }

    pub fn top(&self) -> usize {
        self.labels[0]
    }

    pub fn classes(&self) -> usize {
        self.labels.len()
    }

    /// Checks that `labels` is a permutation of `0..m` and scores match.
    pub fn validate(&self) -> Result<()> {
        let m = self.labels.len();
        if m == 0 || self.scores.len() != m {
            return Err(Error::contract("ranking and scores must be nonempty and equal length"));
        }
        let mut seen = vec![false; m];
        for &l in &self.labels {
            if l >= m || seen[l] {
                return Err(Error::contract(format!(
                    "ranking {:?} is not a permutation of 0..{m}",
                    self.labels
                )));
            }
            seen[l] = true;
        }
        Ok(())
    }
}

/// Row-wise softmax of a `rows × k` buffer. Outputs are floored at the
/// smallest normal double so they stay strictly positive.
pub fn softmax_rows(logits: &[f64], k: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(logits.len());
    for row in logits.chunks_exact(k) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        out.extend(exps.iter().map(|e| (e / sum).max(f64::MIN_POSITIVE)));
    }
    out
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    softmax_rows(logits, logits.len())
}

/// `−ln p[label]` with `p` clamped to at least `1e-12`.
pub fn cross_entropy(probs: &[f64], label: usize) -> Result<f64> {
    if label >= probs.len() {
        return Err(Error::contract(format!(
            "label {label} outside 0..{}",
            probs.len()
        )));
    }
    Ok(-probs[label].max(1e-12).ln())
}

/// Mean cross-entropy over a `batch × k` probability buffer.
pub fn mean_cross_entropy(probs: &[f64], k: usize, labels: &[u8]) -> Result<f64> {
    if probs.len() != labels.len() * k {
        return Err(Error::contract("probability buffer does not match labels"));
    }
    let mut total = 0.0;
    for (row, &y) in probs.chunks_exact(k).zip(labels) {
        total += cross_entropy(row, y as usize)?;
    }
    Ok(total / labels.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cross_entropy_values() {
        let mut p = vec![0.0; 10];
        p[3] = 1.0;
        assert_eq!(cross_entropy(&p, 3).unwrap(), 0.0);
        let u = vec![0.1; 10];
        assert!((cross_entropy(&u, 7).unwrap() - 10f64.ln()).abs() < 1e-12);
        assert!(cross_entropy(&u, 10).is_err());
        // clamped
        assert!((cross_entropy(&p, 0).unwrap() - (-(1e-12f64).ln())).abs() < 1e-9);
    }

    #[test]
    fn batch_mean_matches_loop() {
        let probs = softmax_rows(&[0.1, 2.0, -1.0, 0.0, 0.5, 0.5, 3.0, -2.0, 1.0], 3);
        let labels = [1u8, 0, 2];
        let mut acc = 0.0;
        for (i, &y) in labels.iter().enumerate() {
            acc += -probs[i * 3 + y as usize].ln();
        }
        let got = mean_cross_entropy(&probs, 3, &labels).unwrap();
        assert!((got - acc / 3.0).abs() < 1e-15);
    }

    #[test]
    fn softmax_properties() {
        let p = softmax(&[1000.0, -1000.0, 0.0, 3.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(p.iter().all(|&v| v > 0.0));
        assert_eq!(softmax(&[0.0; 10]), vec![0.1; 10]);
    }

    #[test]
    fn ranking_ties_prefer_lower_label() {
        let r = RankedPrediction::from_scores(vec![0.2, 0.4, 0.2, 0.2]);
        assert_eq!(r.labels, vec![1, 0, 2, 3]);
        assert_eq!(r.top(), 1);
        r.validate().unwrap();
        let bad = RankedPrediction {
            labels: vec![0, 0, 1],
            scores: vec![0.3; 3],
        };
        assert!(bad.validate().is_err());
    }
}
