//! Core library for a closed-loop seizure-prediction system built on an
//! ultrasonic intra-body sensor network.
//!
//! The pipeline runs in five stages, each with its own module:
//!
//! - [`signal`] — seeded synthetic ECG/iEEG recordings, 4-second windowing
//!   with preictal/interictal labels, optional filtering, stratified splits,
//!   and a binary recording file format.
//! - [`nn`] — a from-scratch 1-D CNN (five conv/pool blocks, four dense
//!   layers) trained with a focal loss, plus checkpoints and training curves.
//! - [`predictor`] — thresholding, time/channel majority voting, and
//!   cross-modality fusion of per-window probabilities into alarm decisions.
//! - [`netsim`] — a deterministic discrete-event simulation of the four-node
//!   network (PPM physical layer with spreading codes and time hopping,
//!   centralized code assignment, lossy ultrasonic links, gateway
//!   decision/alert loop).
//! - [`metrics`] — confusion-matrix bookkeeping, sensitivity/specificity/
//!   accuracy, false positives per hour, and tie-aware AUC.
//!
//! Everything is deterministic given the seeds in the various configs; no
//! global state, no wall-clock dependence.

pub mod metrics;
pub mod netsim;
pub mod nn;
pub mod predictor;
pub mod rng;
pub mod signal;

pub use signal::{Label, Modality, Recording, SampleWindow};

/// Decision period of the whole system: one window, one decision, every 4 s.
pub const WINDOW_SECONDS: f64 = 4.0;
