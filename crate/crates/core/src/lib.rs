//! Non-signature network traffic anomaly detection.
//!
//! Every detector consumes the shared data model in [`data`] (flow records,
//! time-binned traffic matrices, feature histograms) and reports through the
//! uniform [`Alarm`] record. The families are:
//!
//! * [`pca`]: subspace method, Q-statistic, identification, entropy features,
//!   lag-augmented PCA; [`distpca`] adds the monitor/coordinator protocol.
//! * [`sketch`]: k-ary sketches, forecasting, change detection and the
//!   sketch-subspace pipeline.
//! * [`hhh`]: hierarchical heavy hitters over 1-D and 2-D prefix tries.
//! * [`gamma`]: Gamma-law multi-resolution detection over hashed sub-traces.
//! * [`wavelet`], [`kalman`], [`statdetect`]: signal-analysis detectors.
//! * [`anomography`]: transforms plus inverse solvers over routing matrices.
//! * [`extraction`]: histogram clones, KL detection and item-set mining.
//!
//! Heavy inner loops (Monte Carlo batches, per-bucket fits, per-column
//! solves) go through [`par`], which uses rayon when the `parallel` feature
//! is on and plain iterators otherwise.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod anomography;
pub mod data;
pub mod distpca;
pub mod error;
pub mod extraction;
pub mod gamma;
pub mod hashing;
pub mod hhh;
pub mod kalman;
pub mod linalg;
pub mod par;
pub mod pca;
pub mod sketch;
pub mod statdetect;
pub mod synth;
pub mod wavelet;

pub use data::{Alarm, Feature, FlowRecord, Histogram, TrafficMatrix};
pub use error::{Error, Result};
