//! Label-free hyperparameter selection for self-supervised graph anomaly
//! detectors.
//!
//! Detectors are trained on an unlabeled [`graph::AttributedGraph`] under
//! every candidate configuration, each resulting score vector is rated by the
//! Contrast Score Margin ([`csm`]), and the best configuration is picked by
//! grid search or GP-driven sequential model-based optimization ([`hpo`]).
//! Ground-truth labels are joined only afterwards, by [`metrics`] and the
//! report phase of [`harness`].

pub mod csm;
pub mod detectors;
pub mod error;
pub mod graph;
pub mod harness;
pub mod hpo;
pub mod inject;
pub mod metrics;
pub mod tensor;

pub use error::{Error, Result};
