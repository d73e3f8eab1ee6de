//! Estimation and simulation core for a counter-drone pursuer whose single
//! software radio alternates between GPS jamming and signals-of-opportunity
//! (SOP) relative positioning.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the CLI and
//! batch execution live in the companion `rpsjs` crate.
#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![cfg_attr(test, allow(unused_imports))]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod controller;
pub mod error;
pub mod harness;
pub mod jamming;
pub mod positioning;
pub mod scenario;
pub mod sweep;
pub mod vision;

mod fmath;

pub use error::{Error, Result};
pub use scenario::{BandId, Position2D, ScenarioConfig, Transmitter};
