//! Long-tail classifier calibration on frozen proposal features.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod combine;
pub mod config;
pub mod error;
pub mod eval;
pub mod head;
pub mod repro;
pub mod rng;
pub mod sampling;
pub mod sweep;
pub mod synth;
pub mod trainer;
pub mod types;

pub use error::{Error, Result};
pub use types::{
    assign_bin, match_proposal, BinBasis, BinScheme, ClassStats, PredictionVector, ProposalRecord,
};
