//! Desk-scale transfer-learning classification toolkit.
//!
//! A from-scratch CNN feature-extraction engine with five miniature
//! architectural presets, deterministic SGD training with layer freezing,
//! checksummed weight persistence for pretrained initialization, two
//! swappable classifier heads (softmax regression and one-vs-rest linear
//! SVM), and a pipeline that trains both heads on identical features and
//! reports their accuracies side by side.
//!
//! Everything is `f64`, single-threaded, and bit-for-bit reproducible from
//! the configured seeds.

pub mod data;
pub mod error;
pub mod heads;
pub mod net;
pub mod pipeline;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{Stride, Tensor};
