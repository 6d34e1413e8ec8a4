//! Data-driven identification of turbocharger turbine dynamics.
//!
//! The crate learns lifted-linear models (`z' = A z + B u`, `y = C z`) with
//! extended dynamic mode decomposition over radial-basis dictionaries, and
//! benchmarks them against a single-hidden-layer NARX network trained with
//! Levenberg-Marquardt. A physics-based turbine surrogate generates the
//! training and validation records.
// Negated comparisons are used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod container;
pub mod dataset;
pub mod dictionary;
pub mod edmd;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod narx;
pub mod rng;
pub mod surrogate;

pub use dataset::{Channel, ChannelRole, TimeSeriesDataset};
pub use dictionary::{DictionaryFamily, DictionarySpec};
pub use edmd::{KoopmanModel, NormalizationStats, SnapshotMatrices};
pub use error::{Error, Result};
pub use linalg::{Matrix, Vector};
pub use metrics::MetricReport;
pub use narx::{NarxConfig, NarxModel};
