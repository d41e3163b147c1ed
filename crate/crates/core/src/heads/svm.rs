//! Linear SVM: margin geometry, a dual coordinate-descent solver for the
//! soft-margin binary machine, and the one-vs-rest multiclass head.
//!
//! The bias is handled by augmenting every sample with a unit component, so
//! single-coordinate dual updates stay exact and the usual KKT conditions
//! apply to the decision function `<w, x> + b` as a whole.

use crate::error::{Error, Result};
use crate::rng;

use super::{argmax, check_features, FeatureVector, HeadTrainConfig, Standardizer};

/// Signed decision value `<w, x> + b`.
pub fn svm_decision(w: &[f64], b: f64, x: &[f64]) -> Result<f64> {
    if w.len() != x.len() {
        return Err(Error::ShapeMismatch(format!(
            "weight dim {} != feature dim {}",
            w.len(),
            x.len()
        )));
    }
    let mut acc = b;
    for i in 0..w.len() {
        acc += w[i] * x[i];
    }
    Ok(acc)
}

fn norm(w: &[f64]) -> f64 {
    w.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Euclidean point-to-hyperplane distance `|<w, x> + b| / ||w||`.
pub fn svm_distance(w: &[f64], b: f64, x: &[f64]) -> Result<f64> {
    let n = norm(w);
    if n == 0.0 {
        return Err(Error::InvalidArgument(
            "distance undefined for a zero weight vector".into(),
        ));
    }
    Ok(svm_decision(w, b, x)?.abs() / n)
}

/// Margin between the two classes: the minimum distance of the positives
/// plus the minimum distance of the negatives.
pub fn svm_margin(w: &[f64], b: f64, samples: &[FeatureVector], labels: &[f64]) -> Result<f64> {
    if samples.len() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} samples but {} labels",
            samples.len(),
            labels.len()
        )));
    }
    let mut min_pos = f64::INFINITY;
    let mut min_neg = f64::INFINITY;
    for (sample, &label) in samples.iter().zip(labels) {
        if label != 1.0 && label != -1.0 {
            return Err(Error::InvalidArgument(format!(
                "labels must be +1 or -1, got {label}"
            )));
        }
        let d = svm_distance(w, b, sample.values())?;
        if label == 1.0 {
            min_pos = min_pos.min(d);
        } else {
            min_neg = min_neg.min(d);
        }
    }
    if !min_pos.is_finite() || !min_neg.is_finite() {
        return Err(Error::Dataset("both classes must be present".into()));
    }
    Ok(min_pos + min_neg)
}

/// Solution of one binary machine. `alpha` holds the dual variables so
/// callers can audit the KKT conditions and the representer identity
/// `w = sum_i alpha_i y_i x_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct BinarySvm {
    pub weight: Vec<f64>,
    pub bias: f64,
    pub alpha: Vec<f64>,
    pub passes: usize,
    pub converged: bool,
}

impl BinarySvm {
    pub fn decision(&self, x: &[f64]) -> Result<f64> {
        svm_decision(&self.weight, self.bias, x)
    }
}

fn validate_binary_inputs(
    features: &[FeatureVector],
    labels: &[f64],
    config: &HeadTrainConfig,
) -> Result<usize> {
    let dim = check_features(features)?;
    if features.len() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} features but {} labels",
            features.len(),
            labels.len()
        )));
    }
    let mut pos = false;
    let mut neg = false;
    for &y in labels {
        match y {
            1.0 => pos = true,
            -1.0 => neg = true,
            other => {
                return Err(Error::InvalidArgument(format!(
                    "labels must be +1 or -1, got {other}"
                )))
            }
        }
    }
    if !pos || !neg {
        return Err(Error::Dataset(
            "binary SVM needs samples from both classes".into(),
        ));
    }
    if config.c <= 0.0 || !config.c.is_finite() {
        return Err(Error::InvalidArgument("C must be positive".into()));
    }
    if config.tolerance <= 0.0 {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }
    Ok(dim)
}

/// Dual objective `sum(alpha) - ||w||^2 / 2` for the augmented weights.
fn dual_objective(alpha: &[f64], w_aug: &[f64]) -> f64 {
    let sum: f64 = alpha.iter().sum();
    sum - 0.5 * w_aug.iter().map(|v| v * v).sum::<f64>()
}

fn solve_dual(
    features: &[FeatureVector],
    labels: &[f64],
    config: &HeadTrainConfig,
    mut objective_trace: Option<&mut Vec<f64>>,
) -> Result<BinarySvm> {
    let dim = validate_binary_inputs(features, labels, config)?;
    let n = features.len();
    let max_passes = config.max_passes.unwrap_or(10 * n).max(1);

    // Augmented samples: x~ = [x, 1]; q_ii = ||x~||^2 >= 1 so the
    // coordinate step is always well defined.
    let q_diag: Vec<f64> = features
        .iter()
        .map(|f| f.values().iter().map(|v| v * v).sum::<f64>() + 1.0)
        .collect();

    let mut alpha = vec![0.0; n];
    let mut w_aug = vec![0.0; dim + 1];
    let mut rng = rng::rng_from_seed(config.seed);
    let mut order: Vec<usize> = (0..n).collect();

    // Exact recomputation from the duals, in index order. Run after every
    // pass so the convergence certificate matches the returned weights.
    let recompute = |alpha: &[f64], w_aug: &mut [f64]| {
        w_aug.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..n {
            let coef = alpha[i] * labels[i];
            if coef != 0.0 {
                for (wv, &xv) in w_aug[..dim].iter_mut().zip(features[i].values()) {
                    *wv += coef * xv;
                }
                w_aug[dim] += coef;
            }
        }
    };

    let gradient = |i: usize, w_aug: &[f64]| -> f64 {
        let mut f = w_aug[dim];
        for (wv, &xv) in w_aug[..dim].iter().zip(features[i].values()) {
            f += wv * xv;
        }
        labels[i] * f - 1.0
    };

    let projected = |g: f64, a: f64, c: f64| -> f64 {
        if a <= 0.0 {
            g.min(0.0)
        } else if a >= c {
            g.max(0.0)
        } else {
            g
        }
    };

    let mut passes = 0;
    let mut converged = false;
    while passes < max_passes {
        rng::shuffle(&mut rng, &mut order);
        for &i in &order {
            let g = gradient(i, &w_aug);
            let pg = projected(g, alpha[i], config.c);
            if pg != 0.0 {
                let old = alpha[i];
                let new = (old - g / q_diag[i]).clamp(0.0, config.c);
                if new != old {
                    let delta = (new - old) * labels[i];
                    for (wv, &xv) in w_aug[..dim].iter_mut().zip(features[i].values()) {
                        *wv += delta * xv;
                    }
                    w_aug[dim] += delta;
                    alpha[i] = new;
                }
            }
            if let Some(trace) = objective_trace.as_deref_mut() {
                trace.push(dual_objective(&alpha, &w_aug));
            }
        }
        passes += 1;

        recompute(&alpha, &mut w_aug);
        let max_violation = (0..n)
            .map(|i| projected(gradient(i, &w_aug), alpha[i], config.c).abs())
            .fold(0.0, f64::max);
        if max_violation <= config.tolerance {
            converged = true;
            break;
        }
    }

    let bias = w_aug[dim];
    let weight = w_aug[..dim].to_vec();
    Ok(BinarySvm {
        weight,
        bias,
        alpha,
        passes,
        converged,
    })
}

/// Soft-margin binary SVM via dual coordinate descent with a seeded random
/// permutation per pass. Terminates when the largest projected-gradient
/// (KKT) violation over the duals drops to `tolerance`, or after
/// `max_passes`.
pub fn train_binary_svm(
    features: &[FeatureVector],
    labels: &[f64],
    config: &HeadTrainConfig,
) -> Result<BinarySvm> {
    solve_dual(features, labels, config, None)
}

/// Same solver, also returning the dual objective after every coordinate
/// update (for monotonicity audits).
pub fn train_binary_svm_traced(
    features: &[FeatureVector],
    labels: &[f64],
    config: &HeadTrainConfig,
) -> Result<(BinarySvm, Vec<f64>)> {
    let mut trace = Vec::new();
    let solution = solve_dual(features, labels, config, Some(&mut trace))?;
    Ok((solution, trace))
}

/// One-vs-rest multiclass SVM head.
#[derive(Clone, Debug, PartialEq)]
pub struct SvmHead {
    machines: Vec<BinarySvm>,
    c: f64,
    standardizer: Standardizer,
}

impl SvmHead {
    pub fn class_count(&self) -> usize {
        self.machines.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.standardizer.dim()
    }

    pub fn machines(&self) -> &[BinarySvm] {
        &self.machines
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn standardizer(&self) -> &Standardizer {
        &self.standardizer
    }

    /// Per-class decision values on a raw (unstandardized) feature vector.
    pub fn decisions(&self, x: &FeatureVector) -> Result<Vec<f64>> {
        if x.dim() != self.feature_dim() {
            return Err(Error::ShapeMismatch(format!(
                "head expects dim {}, feature has {}",
                self.feature_dim(),
                x.dim()
            )));
        }
        let z = self.standardizer.apply(x.values());
        self.machines.iter().map(|m| m.decision(&z)).collect()
    }
}

/// Trains `k` one-vs-rest machines on a shared standardization of the
/// features. Machine `c` gets the seeded stream `derive_seed(seed, c)`, so
/// the problems are independent but the whole head is reproducible.
pub fn train_multiclass_svm(
    features: &[FeatureVector],
    labels: &[usize],
    class_count: usize,
    config: &HeadTrainConfig,
) -> Result<SvmHead> {
    check_features(features)?;
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
    let standardized: Vec<FeatureVector> = features
        .iter()
        .map(|f| FeatureVector::from_values(standardizer.apply(f.values())))
        .collect::<Result<_>>()?;

    let mut machines = Vec::with_capacity(class_count);
    for class in 0..class_count {
        let binary_labels: Vec<f64> = labels
            .iter()
            .map(|&l| if l == class { 1.0 } else { -1.0 })
            .collect();
        let machine_config = HeadTrainConfig {
            seed: rng::derive_seed(config.seed, class as u64),
            ..config.clone()
        };
        machines.push(solve_dual(&standardized, &binary_labels, &machine_config, None)?);
    }
    Ok(SvmHead {
        machines,
        c: config.c,
        standardizer,
    })
}

/// Predicted class: argmax of the per-class decision values, ties broken
/// toward the lowest index.
pub fn svm_predict(head: &SvmHead, x: &FeatureVector) -> Result<usize> {
    Ok(argmax(&head.decisions(x)?))
}
