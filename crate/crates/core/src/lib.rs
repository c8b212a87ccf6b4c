//! Predicting fine-tuning performance of language models from probing
//! accuracies.
//!
//! The pipeline: train a battery of probing classifiers on cached
//! representations ([`probekit`]), collect the accuracies into a
//! [`ProbeMatrix`], regress fine-tuning scores on them ([`linreg`]) and
//! measure the improvement over random Gaussian features of the same width.
//! [`selection`] builds feature sets, [`anova`] ranks layers and
//! [`fingerprint`] checks whether features reveal the originating model family.

pub mod anova;
pub mod datamodel;
pub mod error;
pub mod exec;
pub mod fingerprint;
pub mod linalg;
pub mod linreg;
pub mod probekit;
pub mod rng;
pub mod selection;
pub mod special;
pub mod synth;

pub use datamodel::{EmbeddingDataset, FeatureId, ModelId, ProbeMatrix, ProbeMethod, ScoreTable, StudyConfig};
pub use error::{Error, Result};
pub use exec::Execution;
pub use linalg::Matrix;
