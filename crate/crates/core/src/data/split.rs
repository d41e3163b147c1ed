//! Seeded stratified half-split.

use crate::error::{Error, Result};
use crate::rng;

use super::LabeledDataset;

/// Disjoint train/test halves of a dataset, with the seed that produced
/// them.
#[derive(Clone, Debug)]
pub struct SplitPair {
    pub train: LabeledDataset,
    pub test: LabeledDataset,
    pub seed: u64,
}

/// Splits per class: each class's samples are shuffled with a stream seeded
/// from `(seed, class)` and the first `ceil(n_c / 2)` go to the train half.
/// Per-class counts between the halves therefore differ by at most 1.
pub fn split_half(dataset: &LabeledDataset, seed: u64) -> Result<SplitPair> {
    let counts = dataset.class_counts();
    for (class, &count) in counts.iter().enumerate() {
        if count < 2 {
            return Err(Error::Dataset(format!(
                "class {class} ('{}') has {count} samples; need >= 2 to split",
                dataset.class_names()[class]
            )));
        }
    }

    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); dataset.class_count()];
    for (idx, (_, label)) in dataset.samples().iter().enumerate() {
        by_class[*label].push(idx);
    }

    let mut train_indices = Vec::new();
    let mut test_indices = Vec::new();
    for (class, indices) in by_class.iter_mut().enumerate() {
        let mut class_rng = rng::rng_from_seed(rng::derive_seed(seed, class as u64));
        rng::shuffle(&mut class_rng, indices);
        let take = indices.len().div_ceil(2);
        train_indices.extend_from_slice(&indices[..take]);
        test_indices.extend_from_slice(&indices[take..]);
    }

    let gather = |indices: &[usize], tag: &str| -> Result<LabeledDataset> {
        LabeledDataset::new(
            indices
                .iter()
                .map(|&i| dataset.samples()[i].clone())
                .collect(),
            dataset.class_names().to_vec(),
            format!("{}:{tag}(seed={seed})", dataset.provenance()),
        )
    };

    Ok(SplitPair {
        train: gather(&train_indices, "train")?,
        test: gather(&test_indices, "test")?,
        seed,
    })
}
