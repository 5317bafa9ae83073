//! Multi-beam mmWave analog beamforming simulator.
//!
//! The crate models a uniform linear array on both ends of a sparse
//! multipath link and provides the full maintenance loop around it:
//! beam synthesis, initial training, constructive combining, per-beam
//! amplitude recovery from a band-limited CIR, mobility and blockage
//! tracking, and a slot-stepped link simulator.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod array;
pub mod beamgen;
pub mod channel;
pub mod combiner;
mod error;
pub mod exec;
pub mod ledger;
pub mod linksim;
mod math;
pub mod superres;
pub mod tracker;
pub mod trainer;

pub use error::{Error, Result};
pub use math::{db_to_lin, lin_to_db, sinc, DB_FLOOR};
pub use num_complex::Complex64;
