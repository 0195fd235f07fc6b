//! Path-dependent neural jump ODEs for learning conditional expectations of
//! stochastic processes from irregular, incomplete, noisy and dependently
//! observed samples.
//!
//! The crate is organised bottom-up:
//!
//! * [`autodiff`]: reverse-mode differentiation and dense networks;
//! * [`signature`]: truncated path signatures;
//! * [`observation`]: observation frameworks and the interpolated process;
//! * [`generators`], [`dataset`]: synthetic data and its storage;
//! * [`oracles`]: closed-form conditional expectations;
//! * [`model`]: the jump ODE itself;
//! * [`objectives`]: losses and evaluation metrics;
//! * [`harness`]: training, experiment presets and outputs.

pub mod autodiff;
pub mod dataset;
pub mod error;
pub mod generators;
pub mod harness;
pub mod model;
pub mod objectives;
pub mod observation;
pub mod oracles;
pub mod signature;

pub use dataset::{Dataset, DatasetHeader, SamplePath};
pub use error::{Error, Result};
pub use generators::{generate, GeneratorConfig, GeneratorKind};
pub use harness::{ExperimentConfig, Profile, RunReport};
pub use model::{ModelConfig, NjodeModel, Trajectory};
pub use objectives::{LossConfig, LossKind};
pub use observation::ObservationFramework;
pub use oracles::OraclePath;
pub use signature::TruncatedSignature;
