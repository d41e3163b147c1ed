//! Dataset ingestion: netpbm decoding, bilinear resizing, directory-tree
//! loading, stratified splitting, and a synthetic 6-class generator.

mod load;
mod netpbm;
mod resize;
mod split;
mod synth;

pub use load::load_dataset;
pub use netpbm::{decode_image, encode_ppm};
pub use resize::resize_bilinear;
pub use split::{split_half, SplitPair};
pub use synth::{synthesize_dataset, SynthConfig};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Default class names, in index order.
pub const DEFAULT_CLASS_NAMES: [&str; 6] =
    ["glass", "paper", "cardboard", "plastic", "metal", "trash"];

/// A class index paired with its display name.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassLabel {
    pub index: usize,
    pub name: String,
}

/// Class-labeled image samples sharing one shape, values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    samples: Vec<(Tensor, usize)>,
    class_names: Vec<String>,
    provenance: String,
}

impl LabeledDataset {
    pub fn new(
        samples: Vec<(Tensor, usize)>,
        class_names: Vec<String>,
        provenance: String,
    ) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Dataset("dataset has no samples".into()));
        }
        if class_names.is_empty() {
            return Err(Error::Dataset("dataset has no classes".into()));
        }
        let mut unique = class_names.clone();
        unique.sort();
        unique.dedup();
        if unique.len() != class_names.len() {
            return Err(Error::Dataset("class names must be unique".into()));
        }
        if class_names.iter().any(|n| n.is_empty()) {
            return Err(Error::Dataset("class names must be non-empty".into()));
        }
        let shape = samples[0].0.shape().to_vec();
        for (image, label) in &samples {
            if image.shape() != shape {
                return Err(Error::Dataset(format!(
                    "images must share one shape: {:?} vs {shape:?}",
                    image.shape()
                )));
            }
            if *label >= class_names.len() {
                return Err(Error::Dataset(format!(
                    "label {label} out of range for {} classes",
                    class_names.len()
                )));
            }
        }
        Ok(LabeledDataset {
            samples,
            class_names,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn class_count(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn samples(&self) -> &[(Tensor, usize)] {
        &self.samples
    }

    pub fn images(&self) -> impl Iterator<Item = &Tensor> {
        self.samples.iter().map(|(img, _)| img)
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|(_, l)| *l).collect()
    }

    pub fn image_shape(&self) -> &[usize] {
        self.samples[0].0.shape()
    }

    /// Sample count per class.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.class_count()];
        for (_, label) in &self.samples {
            counts[*label] += 1;
        }
        counts
    }
}
