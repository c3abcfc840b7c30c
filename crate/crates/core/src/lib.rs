//! Trainable feature quantization for split inference.
//!
//! Fits per-feature threshold quantizers (minmax, quantile, or learned),
//! trains them jointly with a dense regression network through
//! differentiable soft quantization, and exports a deployable encoder with
//! a bit-exact packed wire format so constrained devices can compress
//! features before transmission.
//!
//! Module map:
//! - [`quant`]: hard step/encode/decode math and threshold fitting
//! - [`soft`]: sigmoid step approximations, gradients, temperature schedules
//! - [`nn`]: dense network, backprop, Adam, training loop
//! - [`harness`]: datasets, standardization, cross-validated experiments
//! - [`deploy`]: encoder tables, packed frames, C source emission, loopback
//! - [`checkpoint`]: the JSON model checkpoint shared by training and deploy

pub mod checkpoint;
pub mod deploy;
pub mod error;
pub mod harness;
pub mod matrix;
pub mod nn;
pub mod quant;
pub mod seed;
pub mod soft;
pub mod stats;

pub use checkpoint::Checkpoint;
pub use error::{Error, Result};
pub use harness::{ExperimentConfig, HyperGrid, HyperPoint, Method, ResultTable};
pub use matrix::Matrix;
pub use nn::{DenseNet, QuantLayer, TrainConfig};
pub use quant::{BitVector, Code, DecoderKind, QuantScheme, ThresholdSet, ThresholdSource};
pub use soft::{ScheduleKind, SoftMode, SoftQuantLayer, TemperatureSchedule};
