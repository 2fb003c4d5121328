//! Survey-informed quota limits for recruiting sites into multi-site impact
//! studies.
//!
//! Survey microdata give weighted estimates of how the target population
//! splits across categories of each impact moderator ([`survey`]). Those
//! shares and the study's total sample size become per-category targets and
//! integer limits ([`plan`]). During recruitment every candidate site is
//! classified and admitted only if no limit would be exceeded ([`ledger`]).
//! [`simulation`] compares purposive, quota-constrained and random
//! recruitment on synthetic populations.

pub mod digest;
pub mod error;
pub mod ledger;
pub mod plan;
pub mod service;
pub mod simulation;
pub mod survey;

pub use error::{Error, ErrorClass};
