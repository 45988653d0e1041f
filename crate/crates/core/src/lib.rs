//! Ecological-robustness-oriented transmission network expansion.
//!
//! The pipeline is: parse a case ([`grid`]), solve its power flow
//! ([`powerflow`]), build the ecological flow matrix and its metrics
//! ([`eco`]), then optimize candidate-branch decisions ([`expansion`]) and
//! assess the result ([`assessment`]).

pub mod error;
pub mod grid;
pub mod powerflow;
pub mod eco;
pub mod candidates;
pub mod expansion;
pub mod assessment;

pub use error::{Error, Result};
