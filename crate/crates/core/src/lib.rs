//! Fault diagnosis for rotating machinery trained on synthetic data.
//!
//! The pipeline takes a baseline vibration signal of a healthy machine,
//! injects the spectral signatures of six common faults ([`synthgen`]),
//! expands every signal with five augmentation operators ([`augment`]),
//! turns the results into cut, z-scored magnitude spectra ([`spectral`]),
//! trains a single-layer 1D CNN ([`net1d`]) and explains each prediction with
//! a Grad-CAM relevance map over frequency bins ([`explain`]). The
//! [`harness`] module wires the stages into repeatable experiments and a CLI.

pub mod augment;
pub mod error;
pub mod explain;
pub mod harness;
pub mod net1d;
pub mod spectral;
pub mod synthgen;
pub mod types;

pub use error::{Error, Result};
pub use types::{
    derive_seed, label_to_onehot, FaultLabel, LabeledDataset, LabeledSample, MachineSpec,
    Provenance, Spectrum, Split, TimeSeries,
};
