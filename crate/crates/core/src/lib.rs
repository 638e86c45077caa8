// SPDX-License-Identifier: MIT OR Apache-2.0

//! Agreement lab: factorial agreement stimuli, a from-scratch two-layer LSTM
//! language model, unit ablation, gate-dynamics probing, the statistical
//! contrast battery and a small service for collecting human responses.

pub mod ablation;
pub mod cli;
pub mod config;
pub mod error;
pub mod evaluation;
pub mod lstm;
pub mod numerics;
pub mod probing;
pub mod report;
pub mod responses;
pub mod service;
pub mod stats;
pub mod stimuli;

pub use error::{Error, Result};
