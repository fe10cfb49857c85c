//! Acoustic pipe-leak detection from power spectral density recordings.
//!
//! The crate implements a five-stage pipeline over PSD spectrograms
//! (frequency bins x one-second frames):
//!
//! 1. [`banding::aggregate`] groups frequency bins into fixed-width sub-bands
//!    and summarizes each band per second with a mean / median / iqr metric.
//! 2. [`banding::rank_bands`] ranks sub-bands by Pearson correlation against
//!    the per-second leak labels and [`banding::select_band_pair`] picks two.
//! 3. [`features::featurize`] slides overlapping windows over the two band
//!    series and computes 26 time-based features per band (52 predictors).
//! 4. [`svm`] trains a soft-margin SVM (linear or RBF kernel) on the feature
//!    frame with an SMO dual solver.
//! 5. [`pipeline`] orchestrates chronological splitting, grid search,
//!    band-combination evaluation on the test range, and transfer evaluation
//!    of the final model on other datasets.
//!
//! [`synth`] generates deterministic synthetic datasets with the same layout
//! as the industrial recordings, so every experiment is reproducible offline.
//!
//! Heavy loops (synthesis, banding, feature extraction, grid search) run on
//! rayon when the default `parallel` feature is enabled; building with
//! `--no-default-features` yields a purely sequential crate. Each parallel
//! entry point keeps a `*_seq` twin so the two backends can be benchmarked
//! against each other.

pub mod banding;
pub mod dataset;
mod error;
pub mod features;
pub mod fsutil;
mod par;
pub mod pipeline;
pub mod svm;
pub mod synth;

pub use error::{Error, Result};
