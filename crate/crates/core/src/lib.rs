//! Deterministic simulator for vehicle teleoperation under network delay.

// Validation uses `!(x > 0.0)` style checks on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod clock;
pub mod config;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod network;
pub mod nmpc;
pub mod plot;
pub mod station;
pub mod track;
pub mod vehicle;

pub use error::{Result, SimError};
pub use geometry::{kmh_to_ms, wrap_angle, Pose2D};
