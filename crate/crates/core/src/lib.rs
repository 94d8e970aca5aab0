//! Simulation of MR image modulation by an implanted, current-driven micro-coil.
//!
//! The crate is organised bottom-up:
//!
//! * [`magnetics`]: square-spiral coil geometry, Biot-Savart longitudinal field,
//!   dipole receiver field.
//! * [`spins`]: quantized voxel ensembles and hard-pulse Bloch evolution.
//! * [`sequences`]: GRE-EPI / SE-EPI timelines, bit-synchronized coil currents,
//!   multi-TR execution.
//! * [`contrast`]: normalized contrast, CNR estimates and design-space sweeps.
//! * [`uplink`]: bit encoding, synthetic image series, voxelwise Welch t-tests,
//!   localization and decoding.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod constants;
pub mod contrast;
pub mod error;
pub mod magnetics;
pub mod numeric;
pub mod sequences;
pub mod spins;
pub mod uplink;

pub use error::{Error, ErrorKind, Result};
