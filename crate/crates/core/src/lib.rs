//! Multi-UAV target localization and cooperative exploration simulator.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod comms;
pub mod control;
pub mod error;
pub mod inference;
pub mod ops;
pub mod scenarios;
pub mod sensing;
pub mod sim;

pub use error::{Error, Result};
