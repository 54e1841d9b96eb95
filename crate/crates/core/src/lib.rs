//! Group collaboration-quality classification from temporal student role
//! codes.
//!
//! The pipeline ingests per-student, per-minute role annotations, encodes
//! them as padded 24x5 matrices or normalized role histograms, trains a
//! 1-D residual CNN (or an MLP baseline) with plain or ordinal
//! cross-entropy, evaluates with leave-one-group-out cross-validation, and
//! explains temporal predictions with Grad-CAM maps.

pub mod data_model;
pub mod error;
pub mod losses;
pub mod models;
pub mod nn;

pub use error::{Error, Result};
