//! Call-rate prediction and replica planning for containerized microservices.
//!
//! The pipeline mirrors how an operator sizes a horizontally scaled service:
//!
//! 1. [`trace`] ingests monitoring rows (timestamp, microservice, container,
//!    microservice time, call rate), filters them and splits them.
//! 2. [`features`] turns a trace into `(MT, MCR)` pairs in seconds per call
//!    and calls per second.
//! 3. [`linreg`], [`mlp`] and [`gbr`] fit call-rate predictors, exposed
//!    through the uniform [`model`] API.
//! 4. [`tuning`] runs exhaustive hyperparameter grids and learning curves,
//!    [`eval`] scores models with MAE / MAPE / fit time.
//! 5. [`replica`] multiplies predicted rates with microservice times to get
//!    replica counts and writes plan files for an external orchestrator.
//!
//! The [`cli`] module backs the `callscale` binary.

pub mod cli;
pub mod error;
pub mod eval;
pub mod features;
pub mod gbr;
pub mod linreg;
pub mod mlp;
pub mod model;
pub mod replica;
pub mod svg;
pub mod trace;
pub mod tuning;

mod rng;
mod stats;

pub use error::{Error, Result};
pub use features::{FeatureSet, ScalingParams};
pub use model::{Hyper, ModelKind, TrainedModel, TrainingMeta};
pub use trace::{Dataset, TraceRecord};
