//! Numerical verification of differential passivity.
//!
//! Systems are given as control-affine vector fields or as gradient systems
//! `Q(x) x' = -dV/dx + B u`. The crate checks the pointwise conditions that
//! make a quadratic storage `1/2 dx' M(x) dx` a differential storage, scans
//! them over sample grids, and integrates the prolonged (state plus
//! variation) dynamics to confirm the dissipation inequality along
//! trajectories.
//!
//! The crate is `no_std` with `alloc`. File formats, threading and the
//! command-line front end live in the `diffpass` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod conditions;
pub mod error;
pub mod examples;
pub mod interconnect;
pub mod linalg;
pub mod model;
pub mod prolong;
pub mod simulate;
pub mod storage;

pub use error::{Error, Result};
pub use linalg::Mat;
