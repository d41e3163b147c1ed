//! The two interchangeable classifier heads: softmax regression and
//! one-vs-rest linear SVM.

mod softmax;
mod svm;

pub use softmax::{
    mean_cross_entropy, softmax_logits, softmax_predict, softmax_probs, train_softmax,
    SoftmaxHead,
};
pub use svm::{
    svm_decision, svm_distance, svm_margin, svm_predict, train_binary_svm,
    train_binary_svm_traced, train_multiclass_svm, BinarySvm, SvmHead,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Penultimate-layer activations fed to a head.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector(Tensor);

impl FeatureVector {
    pub fn new(tensor: Tensor) -> Result<Self> {
        if tensor.rank() != 1 {
            return Err(Error::ShapeMismatch(format!(
                "feature vector must be rank-1, got {:?}",
                tensor.shape()
            )));
        }
        if !tensor.is_finite() {
            return Err(Error::InvalidArgument(
                "feature vector contains non-finite values".into(),
            ));
        }
        Ok(FeatureVector(tensor))
    }

    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        FeatureVector::new(Tensor::from_vec(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        self.0.data()
    }

    pub fn tensor(&self) -> &Tensor {
        &self.0
    }
}

/// Per-dimension affine rescaling fitted on the training split and stored in
/// each head so inference sees the same transform.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    mean: Vec<f64>,
    std: Vec<f64>,
}

impl Standardizer {
    /// The do-nothing transform, for heads constructed from explicit
    /// parameters.
    pub fn identity(dim: usize) -> Self {
        Standardizer {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    /// Population mean / standard deviation per dimension. Dimensions with
    /// (near-)zero variance keep scale 1 so constant features pass through.
    pub fn fit(features: &[FeatureVector]) -> Result<Self> {
        let n = features.len();
        if n == 0 {
            return Err(Error::Dataset("cannot standardize zero samples".into()));
        }
        let dim = features[0].dim();
        let mut mean = vec![0.0; dim];
        for f in features {
            if f.dim() != dim {
                return Err(Error::ShapeMismatch(format!(
                    "feature dim {} != {}",
                    f.dim(),
                    dim
                )));
            }
            for (m, &v) in mean.iter_mut().zip(f.values()) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= n as f64;
        }
        let mut var = vec![0.0; dim];
        for f in features {
            for ((s, &v), &m) in var.iter_mut().zip(f.values()).zip(&mean) {
                let d = v - m;
                *s += d * d;
            }
        }
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / n as f64).sqrt();
                if sd < 1e-12 {
                    1.0
                } else {
                    sd
                }
            })
            .collect();
        Ok(Standardizer { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, values: &[f64]) -> Vec<f64> {
        values
            .iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((&v, &m), &s)| (v - m) / s)
            .collect()
    }
}

/// Settings shared by both head trainers; the learning-rate/epoch pair
/// drives softmax, the C/tolerance/passes triple drives the SVM.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeadTrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub c: f64,
    pub tolerance: f64,
    /// Dual coordinate-descent pass cap; defaults to `10 * n` when `None`.
    pub max_passes: Option<usize>,
}

impl Default for HeadTrainConfig {
    fn default() -> Self {
        HeadTrainConfig {
            learning_rate: 0.1,
            epochs: 200,
            seed: 0,
            c: 10.0,
            tolerance: 1e-3,
            max_passes: None,
        }
    }
}

/// Numerically safe softmax on a plain slice (max-subtracted exponentials).
///
/// Entries are clamped into the representable open unit interval: a score
/// gap beyond ~745 would otherwise underflow the losing class to exactly 0
/// (and the winner to exactly 1). The clamp shifts the sum by at most a few
/// ulps, far inside the 1e-12 normalization contract.
pub fn softmax_probs_slice(logits: &[f64]) -> Vec<f64> {
    const ALMOST_ONE: f64 = 1.0 - f64::EPSILON / 2.0;
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&q| (q - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter()
        .map(|e| (e / sum).clamp(f64::MIN_POSITIVE, ALMOST_ONE))
        .collect()
}

/// Index of the maximum, ties broken toward the lowest index.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn check_features(features: &[FeatureVector]) -> Result<usize> {
    let first = features
        .first()
        .ok_or_else(|| Error::Dataset("no feature vectors supplied".into()))?;
    let dim = first.dim();
    for f in features {
        if f.dim() != dim {
            return Err(Error::ShapeMismatch(format!(
                "feature dims differ: {} vs {}",
                f.dim(),
                dim
            )));
        }
    }
    Ok(dim)
}
