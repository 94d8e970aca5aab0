//! Physical constants in SI units.

use std::f64::consts::PI;

/// Vacuum permeability over 4π (T·m/A).
pub const MU0_OVER_4PI: f64 = 1e-7;
pub const MU0: f64 = 4.0 * PI * MU0_OVER_4PI;
/// Reduced Planck constant (J·s).
pub const HBAR: f64 = 1.054_571_817e-34;
/// Boltzmann constant (J/K).
pub const BOLTZMANN: f64 = 1.380_649e-23;
/// Proton gyromagnetic ratio over 2π (MHz/T).
pub const GAMMA_OVER_2PI_MHZ_PER_T: f64 = 42.58;
/// Proton gyromagnetic ratio (rad/(s·T)).
pub const GAMMA_RAD_PER_S_PER_T: f64 = 2.0 * PI * GAMMA_OVER_2PI_MHZ_PER_T * 1e6;
