//! Remaining-useful-life (RUL) prediction for fleets of devices whose
//! telemetry levels vary widely from one device to the next.
//!
//! The pipeline: ingest daily SMART snapshots into per-device histories,
//! score features by correlation and Fisher score, normalize per device
//! (min-max for training, quantile-thresholded for live data), slice into
//! 25-day windows, train a stacked LSTM regressor from scratch, then replay
//! online predictions and score them against the 10-day failure threshold.

pub mod error;
pub mod evaluate;
pub mod features;
pub mod ingest;
pub mod lstm;
pub mod normalize;
pub mod report;
pub mod sim;
pub mod synth;
pub mod trainer;
pub mod windows;

pub use error::{Error, Result};

/// Number of SMART features carried through the whole pipeline.
pub const NUM_FEATURES: usize = 5;

/// SMART attribute ids of the carried features, in column order.
pub const SMART_IDS: [u32; NUM_FEATURES] = [7, 9, 240, 241, 242];

/// Days of history in a training/simulation matrix (anchor day inclusive).
pub const MATRIX_DAYS: usize = 151;

/// Default sequence length fed to the LSTM.
pub const DEFAULT_TS: usize = 25;

/// RUL labels are clipped to this many days.
pub const MAX_RUL: f64 = 125.0;
