//! Spatiotemporal graph neural networks for predicting deep ice-layer
//! thicknesses from shallow ones.
//!
//! The crate is organised bottom-up:
//!
//! - [`autodiff`]: dense `f64` tensors and a reverse-mode tape.
//! - [`graph`]: haversine-weighted adjacency and normalized temporal graphs.
//! - [`nn`]: GCN, dense, GRU, graph-convolutional LSTM and EvolveGCN-H layers.
//! - [`models`]: the adaptive recurrent model and its three ablations.
//! - [`training`]: Adam, the halving schedule, trials and RMSE reports.
//! - [`data`]: mask ingestion, synthetic data and the dataset container.
//! - [`verify`]: self-check suites run by the CLI.

pub mod autodiff;
pub mod data;
pub mod error;
pub mod fixtures;
pub mod graph;
pub mod models;
pub mod nn;
pub mod rng;
pub mod training;
pub mod verify;

pub use error::{Error, Result};
