//! Predicting per-site mutations in time-indexed protein sequence corpora
//! with semi-supervised anomaly detection.
//!
//! Sequences are grouped into time cohorts, clustered and chained across
//! consecutive cohorts; each chain yields per-site time series of trigram
//! embeddings. An LSTM encoder with temporal attention maps a series to a
//! point that a hypersphere (or DeepSAD) objective pulls toward the center
//! when the site stays unchanged and pushes away when it mutates.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod diagnostics;
pub mod embedding;
pub mod fsutil;
pub mod loss;
pub mod model;
pub mod numcore;
pub mod rng;
pub mod metrics;
pub mod synth;
pub mod trainer;
