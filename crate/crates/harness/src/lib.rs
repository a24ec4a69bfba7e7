//! Dataset and trajectory I/O, configuration, evaluation metrics and the
//! `mrio` command line around the estimator and simulator crates.

pub mod cli;
pub mod config;
pub mod dataset;
pub mod metrics;
pub mod tum;

pub use config::Config;
pub use dataset::{load_dataset, read_dataset, save_dataset, write_dataset, DatasetError, Record};
pub use metrics::{evaluate, MetricsError, MetricsReport};
pub use tum::{load_tum, read_tum, save_tum, write_tum, TumPose};
