//! Shared temporal factorization of dynamic attributed networks.
//!
//! A sequence of graph snapshots with node content is factored into one
//! non-negative embedding per snapshot plus link and content factors shared
//! across time, coupled by a temporal smoothness penalty. On top of the
//! fitted embeddings the crate detects communities by clustering stacked
//! embedding rows, forecasts future embeddings (and hence future
//! communities) with per-coordinate autoregressions, and scores partitions
//! against ground truth.
//!
//! Supporting pieces: a synthetic generator with planted drifting
//! communities, a hyperparameter search scored by silhouette, an empirical
//! scaling benchmark, and TSV/JSON disk formats. Everything is deterministic
//! for a fixed seed, independent of thread count.

pub mod bench;
pub mod communities;
pub mod error;
pub mod factorization;
pub mod io;
pub mod mat;
pub mod metrics;
pub mod network;
pub mod prediction;
pub mod synthetic;
pub mod tuner;
mod util;

pub use error::{Error, Result};
pub use factorization::{fit, FactorModel, FitOutcome, GradientMode, Hyperparameters};
pub use network::TemporalNetwork;
