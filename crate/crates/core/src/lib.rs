//! Dueling-bandit toolkit for interactive preference elicitation.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`]: candidates, feature tables, preference and winning matrices, regret.
//! * [`bounds`]: context-free and augmented confidence bounds plus the
//!   calibration diagnostics built on them.
//! * [`depgraph`]: similarity metrics, the thresholded similarity graph, soft
//!   clustering, the dependency store and annotators.
//! * [`engine`]: RUCB / DTS selection and their augmented variants, driven one
//!   round at a time.
//! * [`problems`]: benchmark instances (ranking datasets, DTLZ, contextual pools).
//! * [`harness`]: multi-seed experiments, query statistics and plot data.
//!
//! Candidate indices are 0-based in every API of this crate. Files and the
//! HTTP service use 1-based indices.

// `!(x > 0.0)` is how parameter checks reject NaN along with bad values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod depgraph;
pub mod engine;
mod error;
pub mod harness;
pub mod model;
pub mod problems;

pub use error::{Error, Result};
pub use model::{
    find_condorcet_winner, CandidateSet, Column, ColumnKind, FeatureTable, FeatureValue,
    PreferenceMatrix, RegretLedger, WinningMatrix,
};
