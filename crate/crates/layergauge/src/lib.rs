//! File formats, image decoding and experiment orchestration on top of
//! `layergauge-core`.
//!
//! The pieces: the `OTSW` tensor container ([`container`]) and what is stored
//! in it ([`weights_io`], [`svm_io`]), manifest and image loading
//! ([`manifest`]), the activation cache ([`cache`]), the trial runner
//! ([`experiment`]), reports and plot data ([`report`]), TOML run files
//! ([`config`]) and synthetic datasets for smoke tests ([`synthetic`]).

pub mod atomic;
pub mod cache;
pub mod config;
pub mod container;
mod error;
pub mod experiment;
pub mod manifest;
pub mod report;
pub mod svm_io;
pub mod synthetic;
pub mod weights_io;

pub use layergauge_core as core;

pub use crate::error::{Error, Result};
pub use crate::experiment::{Experiment, ExperimentConfig};
pub use crate::manifest::Dataset;
pub use crate::report::{KnowledgeGainReport, TrialResult};
