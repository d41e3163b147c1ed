//! Softmax regression head: affine scores, normalized exponential
//! posteriors, and a full-batch gradient-descent trainer on mean
//! cross-entropy.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::{argmax, check_features, softmax_probs_slice, FeatureVector, HeadTrainConfig, Standardizer};

/// Affine multi-class scorer: `q = W z + w0` over standardized features `z`.
#[derive(Clone, Debug, PartialEq)]
pub struct SoftmaxHead {
    weights: Tensor,
    intercept: Tensor,
    standardizer: Standardizer,
}

impl SoftmaxHead {
    /// Head from explicit parameters; inputs are used as-is (identity
    /// standardization).
    pub fn new(weights: Tensor, intercept: Tensor) -> Result<Self> {
        if weights.rank() != 2 || intercept.rank() != 1 {
            return Err(Error::ShapeMismatch(
                "softmax head expects a k x d weight matrix and length-k intercept".into(),
            ));
        }
        let k = weights.shape()[0];
        if intercept.len() != k {
            return Err(Error::ShapeMismatch(format!(
                "intercept length {} != {k} classes",
                intercept.len()
            )));
        }
        if k < 2 {
            return Err(Error::InvalidArgument("need at least 2 classes".into()));
        }
        if !weights.is_finite() || !intercept.is_finite() {
            return Err(Error::InvalidArgument("head parameters must be finite".into()));
        }
        let d = weights.shape()[1];
        Ok(SoftmaxHead {
            weights,
            intercept,
            standardizer: Standardizer::identity(d),
        })
    }

    pub fn with_standardizer(mut self, standardizer: Standardizer) -> Result<Self> {
        if standardizer.dim() != self.feature_dim() {
            return Err(Error::ShapeMismatch(
                "standardizer dim does not match head".into(),
            ));
        }
        self.standardizer = standardizer;
        Ok(self)
    }

    pub fn class_count(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn feature_dim(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn weights(&self) -> &Tensor {
        &self.weights
    }

    pub fn intercept(&self) -> &Tensor {
        &self.intercept
    }

    pub fn standardizer(&self) -> &Standardizer {
        &self.standardizer
    }
}

/// Per-class affine scores `q[c] = <W_c, z> + w0[c]`.
pub fn softmax_logits(head: &SoftmaxHead, x: &FeatureVector) -> Result<Tensor> {
    let d = head.feature_dim();
    if x.dim() != d {
        return Err(Error::ShapeMismatch(format!(
            "head expects dim {d}, feature has {}",
            x.dim()
        )));
    }
    let z = head.standardizer.apply(x.values());
    let k = head.class_count();
    let mut out = vec![0.0; k];
    for (row, slot) in out.iter_mut().enumerate() {
        let mut acc = head.intercept.data()[row];
        let row_weights = &head.weights.data()[row * d..(row + 1) * d];
        for (wv, zv) in row_weights.iter().zip(&z) {
            acc += wv * zv;
        }
        *slot = acc;
    }
    Ok(Tensor::from_vec(out))
}

/// Posterior probabilities from scores. Entries are strictly positive and
/// sum to 1; the max-subtraction makes huge scores safe.
pub fn softmax_probs(logits: &Tensor) -> Result<Tensor> {
    if logits.rank() != 1 {
        return Err(Error::ShapeMismatch("logits must be rank-1".into()));
    }
    if !logits.is_finite() {
        return Err(Error::InvalidArgument("logits must be finite".into()));
    }
    Ok(Tensor::from_vec(softmax_probs_slice(logits.data())))
}

/// Predicted class: argmax of the posterior (equivalently of the scores),
/// ties broken toward the lowest index.
pub fn softmax_predict(head: &SoftmaxHead, x: &FeatureVector) -> Result<usize> {
    let logits = softmax_logits(head, x)?;
    Ok(argmax(logits.data()))
}

/// Full-batch gradient descent on mean cross-entropy from a zero
/// initialization. Features are standardized with statistics from this
/// training set; the fitted transform is stored in the head.
///
/// The loss is non-increasing across epochs when the learning rate stays
/// below `2 / L` with `L = max_i ||z_i||^2 / 2`; the default 0.1 is stable
/// for the standardized feature scales used here.
pub fn train_softmax(
    features: &[FeatureVector],
    labels: &[usize],
    class_count: usize,
    config: &HeadTrainConfig,
) -> Result<SoftmaxHead> {
    let dim = check_features(features)?;
    if features.len() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} features but {} labels",
            features.len(),
            labels.len()
        )));
    }
    if class_count < 2 {
        return Err(Error::InvalidArgument("need at least 2 classes".into()));
    }
    if config.learning_rate < 0.0 || !config.learning_rate.is_finite() {
        return Err(Error::InvalidArgument("learning rate must be finite and >= 0".into()));
    }
    let mut seen = vec![false; class_count];
    for &label in labels {
        if label >= class_count {
            return Err(Error::InvalidArgument(format!(
                "label {label} out of range for {class_count} classes"
            )));
        }
        seen[label] = true;
    }
    if let Some(missing) = seen.iter().position(|&s| !s) {
        return Err(Error::Dataset(format!(
            "class {missing} has no training samples"
        )));
    }

    let standardizer = Standardizer::fit(features)?;
    let z: Vec<Vec<f64>> = features
        .iter()
        .map(|f| standardizer.apply(f.values()))
        .collect();

    let n = features.len();
    let (k, d) = (class_count, dim);
    let mut w = vec![0.0; k * d];
    let mut w0 = vec![0.0; k];
    let inv_n = 1.0 / n as f64;
    for _epoch in 0..config.epochs {
        let mut gw = vec![0.0; k * d];
        let mut gb = vec![0.0; k];
        for (zi, &yi) in z.iter().zip(labels) {
            let mut logits = vec![0.0; k];
            for (row, slot) in logits.iter_mut().enumerate() {
                let mut acc = w0[row];
                for (wv, zv) in w[row * d..(row + 1) * d].iter().zip(zi) {
                    acc += wv * zv;
                }
                *slot = acc;
            }
            let mut err = softmax_probs_slice(&logits);
            err[yi] -= 1.0;
            for row in 0..k {
                gb[row] += err[row];
                for col in 0..d {
                    gw[row * d + col] += err[row] * zi[col];
                }
            }
        }
        if config.learning_rate != 0.0 {
            for (wv, g) in w.iter_mut().zip(&gw) {
                *wv -= config.learning_rate * g * inv_n;
            }
            for (bv, g) in w0.iter_mut().zip(&gb) {
                *bv -= config.learning_rate * g * inv_n;
            }
        }
    }

    SoftmaxHead::new(Tensor::new(vec![k, d], w)?, Tensor::from_vec(w0))?
        .with_standardizer(standardizer)
}

/// Mean cross-entropy of a head on a labeled feature set (used by tests and
/// training diagnostics).
pub fn mean_cross_entropy(
    head: &SoftmaxHead,
    features: &[FeatureVector],
    labels: &[usize],
) -> Result<f64> {
    let mut total = 0.0;
    for (f, &y) in features.iter().zip(labels) {
        let probs = softmax_probs(&softmax_logits(head, f)?)?;
        total += -probs.data()[y].ln();
    }
    Ok(total / features.len() as f64)
}
