//! Contrast and CNR metrics, and the design-space sweeps built on them.

mod sim;
mod sweep;

pub use sim::{simulate_contrast, SimConfig};
pub use sweep::{averaging_cnr, sweep, tr_asymptote, SweepAxis, SweepResult, SweepSpec, DEFAULT_STEADY_STATE_TR};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::magnetics::dipole_field_magnitude;
use crate::spins::{equilibrium_magnetization, PhysicalConstants};
use crate::{Error, Result};

/// Current-on / current-off readouts and the contrast derived from them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContrastResult {
    pub s_on: Complex64,
    pub s_off: Complex64,
    /// Post-excitation signal used for normalization.
    pub s0: Complex64,
    pub c_n: f64,
    pub absolute_contrast: f64,
}

impl ContrastResult {
    pub fn new(s_on: Complex64, s_off: Complex64, s0: Complex64) -> Result<Self> {
        let c_n = normalized_contrast(s_on, s_off, s0)?;
        Ok(ContrastResult { s_on, s_off, s0, c_n, absolute_contrast: s_off.norm() - s_on.norm() })
    }
}

/// (|s_off| − |s_on|) / |s0|.
pub fn normalized_contrast(s_on: Complex64, s_off: Complex64, s0: Complex64) -> Result<f64> {
    let norm = s0.norm();
    if !(norm > 0.0) {
        return Err(Error::Domain("normalizing signal s0 is zero".into()));
    }
    Ok((s_off.norm() - s_on.norm()) / norm)
}

/// Contrast over noise standard deviation.
pub fn cnr(absolute_contrast: f64, noise_std: f64) -> Result<f64> {
    if !(noise_std > 0.0) {
        return Err(Error::Domain(format!("noise std {noise_std} must be positive")));
    }
    Ok(absolute_contrast / noise_std)
}

/// Scanner SNR rescaled to another voxel volume. Signal grows linearly with
/// volume while body-dominated noise does not change.
pub fn scaled_snr(measured_snr: f64, measured_volume: f64, target_volume: f64) -> Result<f64> {
    if !(measured_volume > 0.0 && target_volume > 0.0) {
        return Err(Error::Domain("voxel volumes must be positive".into()));
    }
    if !(measured_snr > 0.0) {
        return Err(Error::Domain("measured SNR must be positive".into()));
    }
    Ok(measured_snr * target_volume / measured_volume)
}

/// CNR expected on a scanner whose SNR was measured at another voxel size.
pub fn estimate_cnr_from_scanner(
    measured_snr: f64,
    measured_volume: f64,
    target_volume: f64,
    c_n_at_te: f64,
) -> Result<f64> {
    Ok(c_n_at_te * scaled_snr(measured_snr, measured_volume, target_volume)?)
}

/// On/off magnetic-moment difference (J/T) of a voxel with normalized
/// contrast `c_n`.
pub fn contrast_moment(c_n: f64, voxel_volume_m3: f64, constants: &PhysicalConstants) -> f64 {
    c_n * equilibrium_magnetization(constants, voxel_volume_m3)
}

/// Receiver-plane field difference (T) produced by a moment difference.
pub fn receiver_field_contrast(moment_difference: f64, distance_m: f64) -> Result<f64> {
    dipole_field_magnitude(moment_difference, distance_m)
}
