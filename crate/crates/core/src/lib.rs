//! Dataset pruning engine for identity-labelled training sets.
//!
//! Every stage works on a [`Manifest`]: one [`SampleRecord`] per training
//! sample holding its identity label, the ground-truth-class probability
//! assigned by a pretrained classifier, the predicted class, and optionally a
//! per-epoch probability history.
//!
//! - [`diffprob`] prunes samples whose probabilities sit too close to an
//!   already kept sample of the same identity.
//! - [`cleaner`] drops samples the pretrained model misclassifies.
//! - [`baselines`] provides random and dynamic-uncertainty pruning under the
//!   same per-identity floor.
//! - [`calibrator`] searches the gap threshold that yields a target kept
//!   fraction.
//! - [`synth`] generates manifests with known ground truth for testing.

pub mod baselines;
pub mod calibrator;
pub mod cleaner;
pub mod diffprob;
mod error;
pub mod manifest;
pub mod margin_softmax;
pub mod report;
pub mod rng;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
pub use manifest::{Format, IdentityStats, Manifest, PruneResult, SampleRecord};
