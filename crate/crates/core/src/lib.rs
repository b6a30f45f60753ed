//! Clothed-surface reconstruction from body-model priors.
//!
//! The crate is `no_std` (with `alloc`) and carries every numeric piece of the
//! pipeline: exact mesh distance queries, a linear-blend-skinned body model,
//! multi-view self-calibration, training-point sampling, geometric feature
//! channels, the signed-distance refinement and occupancy networks with their
//! reverse-mode tape, multi-view fusion, marching cubes and mesh metrics.
//! File formats, scene directories and the command line live in the `sesdf`
//! companion crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod body;
pub mod calib;
mod error;
pub mod features;
pub mod fusion;
pub mod geometry;
pub mod math;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod recon;
pub mod sampling;
pub mod synth;

pub use error::Error;
pub use math::{Mat3, Vec3};

pub type Result<T, E = Error> = core::result::Result<T, E>;
