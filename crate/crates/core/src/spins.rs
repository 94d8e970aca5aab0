//! Quantized voxel of nuclear spins and its hard-pulse Bloch evolution.
//!
//! Times are in milliseconds, off-resonances in rad/s. Transverse
//! magnetization is stored as the phasor `m_xy = m_x + i·m_y` relative to the
//! equilibrium magnetization; excitation about +x sends `m_z = 1` to
//! `m_xy = −i`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::{BOLTZMANN, GAMMA_OVER_2PI_MHZ_PER_T, HBAR};
use crate::magnetics::FieldMap;
use crate::numeric::{norm, pairwise_sum, sub, Vec3};
use crate::{Error, Result};

const MIN_PAR_LEN: usize = 8192;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TissueParams {
    pub t1_ms: f64,
    pub t2_ms: f64,
    pub t2_star_ms: f64,
}

impl TissueParams {
    /// White matter at 3 T.
    pub const WHITE_MATTER: TissueParams = TissueParams { t1_ms: 832.0, t2_ms: 80.0, t2_star_ms: 44.7 };

    pub fn new(t1_ms: f64, t2_ms: f64, t2_star_ms: f64) -> Result<Self> {
        let t = TissueParams { t1_ms, t2_ms, t2_star_ms };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t2_ms > 0.0 && self.t2_ms <= self.t1_ms) {
            return Err(Error::Config(format!(
                "tissue requires 0 < T2 <= T1 (T1 = {}, T2 = {})",
                self.t1_ms, self.t2_ms
            )));
        }
        if !(self.t2_star_ms > 0.0 && self.t2_star_ms <= self.t2_ms) {
            return Err(Error::Config(format!(
                "tissue requires 0 < T2* <= T2 (T2 = {}, T2* = {})",
                self.t2_ms, self.t2_star_ms
            )));
        }
        Ok(())
    }

    /// Decay constant of the natural inhomogeneity alone, from
    /// 1/T2′ = 1/T2* − 1/T2. Infinite when T2* = T2.
    pub fn t2_prime_ms(&self) -> f64 {
        let rate = 1.0 / self.t2_star_ms - 1.0 / self.t2_ms;
        if rate > 0.0 {
            1.0 / rate
        } else {
            f64::INFINITY
        }
    }
}

impl Default for TissueParams {
    fn default() -> Self {
        Self::WHITE_MATTER
    }
}

/// Box-shaped voxel sampled on a cell-centred grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoxelSpec {
    pub width_mm: Vec3,
    pub grid: [usize; 3],
    pub center_mm: Vec3,
}

impl VoxelSpec {
    pub fn cube(width_mm: f64, n: usize) -> Self {
        VoxelSpec { width_mm: [width_mm; 3], grid: [n; 3], center_mm: [0.0; 3] }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.contains(&0) {
            return Err(Error::Config("voxel grid counts must be positive".into()));
        }
        if self.width_mm.iter().any(|&w| !(w > 0.0)) {
            return Err(Error::Config("voxel widths must be positive".into()));
        }
        Ok(())
    }

    pub fn spin_count(&self) -> usize {
        self.grid.iter().product()
    }

    pub fn volume_m3(&self) -> f64 {
        self.width_mm.iter().map(|w| w * 1e-3).product()
    }

    /// Grid positions in µm, x-major order (z varies fastest).
    pub fn positions_um(&self) -> Vec<Vec3> {
        let axis = |d: usize| -> Vec<f64> {
            let n = self.grid[d];
            let w = self.width_mm[d] * 1e3;
            let c = self.center_mm[d] * 1e3;
            (0..n).map(|i| c + ((i as f64 + 0.5) / n as f64 - 0.5) * w).collect()
        };
        let (xs, ys, zs) = (axis(0), axis(1), axis(2));
        let mut out = Vec::with_capacity(self.spin_count());
        for &x in &xs {
            for &y in &ys {
                for &z in &zs {
                    out.push([x, y, z]);
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    pub gamma_over_2pi_mhz_per_t: f64,
    pub b0_t: f64,
    pub temperature_k: f64,
    pub spin_density_per_m3: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        PhysicalConstants {
            gamma_over_2pi_mhz_per_t: GAMMA_OVER_2PI_MHZ_PER_T,
            b0_t: 3.0,
            temperature_k: 310.0,
            spin_density_per_m3: 6.7e28,
        }
    }
}

impl PhysicalConstants {
    pub fn validate(&self) -> Result<()> {
        let c = [self.gamma_over_2pi_mhz_per_t, self.b0_t, self.temperature_k, self.spin_density_per_m3];
        if c.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::Config("physical constants must all be positive".into()));
        }
        Ok(())
    }

    pub fn gamma_rad_per_s_per_t(&self) -> f64 {
        2.0 * PI * self.gamma_over_2pi_mhz_per_t * 1e6
    }
}

/// Equilibrium magnetic moment (J/T) of a voxel of volume `volume_m3`:
/// N·γ²·ħ²·I(I+1)·B0·V / (3kT) with I = 1/2.
pub fn equilibrium_magnetization(c: &PhysicalConstants, volume_m3: f64) -> f64 {
    let gamma = c.gamma_rad_per_s_per_t();
    let iz = 0.5;
    c.spin_density_per_m3 * gamma * gamma * HBAR * HBAR * iz * (iz + 1.0) * c.b0_t * volume_m3
        / (3.0 * BOLTZMANN * c.temperature_k)
}

/// Proton Larmor frequency in MHz.
pub fn larmor_frequency_mhz(b0_t: f64) -> f64 {
    GAMMA_OVER_2PI_MHZ_PER_T * b0_t
}

/// How natural intra-voxel inhomogeneity (T2′) is represented.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InhomogeneityMode {
    /// Per-spin static Lorentzian off-resonance.
    Explicit,
    /// No per-spin spread; e^(−|t_dephase|/T2′) envelope applied at readout.
    #[default]
    Lumped,
}

#[derive(Debug, Clone)]
pub struct SpinEnsemble {
    pub positions_um: Vec<Vec3>,
    pub natural_offres: Vec<f64>,
    pub induced_offres_per_amp: Vec<f64>,
    pub m_xy: Vec<Complex64>,
    pub m_z: Vec<f64>,
    pub tissue: TissueParams,
    pub mode: InhomogeneityMode,
    /// Net free-dephasing time (ms) for the lumped T2′ envelope: reset by
    /// excitation, negated by refocusing, advanced by evolution.
    pub dephase_clock_ms: f64,
}

/// Builds an equilibrium ensemble on the voxel grid.
///
/// In explicit mode the natural off-resonances are the Lorentzian quantiles
/// at (j + ½)/n, assigned to spins in a seeded random order. Their ensemble
/// average of e^(−iωt) reproduces e^(−t/T2′) without sampling noise while the
/// assignment stays spatially uncorrelated with the coil field.
pub fn build_ensemble(
    voxel: &VoxelSpec,
    tissue: &TissueParams,
    field: &FieldMap,
    mode: InhomogeneityMode,
    seed: u64,
    gamma_rad_per_s_per_t: f64,
) -> Result<SpinEnsemble> {
    voxel.validate()?;
    tissue.validate()?;
    let positions = voxel.positions_um();
    if field.len() != positions.len() {
        return Err(Error::Config(format!(
            "field map has {} points but the voxel grid has {}",
            field.len(),
            positions.len()
        )));
    }
    if let Some(i) = positions.iter().zip(&field.points).position(|(a, b)| norm(sub(*a, *b)) > 1e-6) {
        return Err(Error::Config(format!("field map point {i} does not match the voxel grid")));
    }
    let n = positions.len();
    let induced = field.bz_per_amp.iter().map(|b| gamma_rad_per_s_per_t * b).collect();
    let natural = match mode {
        InhomogeneityMode::Lumped => vec![0.0; n],
        InhomogeneityMode::Explicit => lorentzian_offsets(n, tissue.t2_prime_ms(), seed),
    };
    Ok(SpinEnsemble {
        positions_um: positions,
        natural_offres: natural,
        induced_offres_per_amp: induced,
        m_xy: vec![Complex64::new(0.0, 0.0); n],
        m_z: vec![1.0; n],
        tissue: *tissue,
        mode,
        dephase_clock_ms: 0.0,
    })
}

fn lorentzian_offsets(n: usize, t2_prime_ms: f64, seed: u64) -> Vec<f64> {
    if !t2_prime_ms.is_finite() {
        return vec![0.0; n];
    }
    let half_width = 1e3 / t2_prime_ms;
    let mut quantiles: Vec<f64> =
        (0..n).map(|j| half_width * (PI * ((j as f64 + 0.5) / n as f64 - 0.5)).tan()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    quantiles.shuffle(&mut rng);
    quantiles
}

impl SpinEnsemble {
    pub fn len(&self) -> usize {
        self.m_z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m_z.is_empty()
    }

    /// Returns every spin to equilibrium.
    pub fn reset(&mut self) {
        self.m_xy.iter_mut().for_each(|m| *m = Complex64::new(0.0, 0.0));
        self.m_z.iter_mut().for_each(|m| *m = 1.0);
        self.dephase_clock_ms = 0.0;
    }

    /// Instantaneous rotation by `flip_deg` about the transverse axis at
    /// `phase_deg` from +x.
    pub fn apply_rf(&mut self, flip_deg: f64, phase_deg: f64) {
        let (sa, ca) = flip_deg.to_radians().sin_cos();
        let (sp, cp) = phase_deg.to_radians().sin_cos();
        let (ux, uy) = (cp, sp);
        self.m_xy.par_iter_mut().zip(self.m_z.par_iter_mut()).with_min_len(MIN_PAR_LEN).for_each(|(mxy, mz)| {
            let v = [mxy.re, mxy.im, *mz];
            let u_dot_v = ux * v[0] + uy * v[1];
            // Rodrigues with u = (ux, uy, 0)
            let uxv = [uy * v[2], -ux * v[2], ux * v[1] - uy * v[0]];
            let r: Vec3 = [
                v[0] * ca + uxv[0] * sa + ux * u_dot_v * (1.0 - ca),
                v[1] * ca + uxv[1] * sa + uy * u_dot_v * (1.0 - ca),
                v[2] * ca + uxv[2] * sa,
            ];
            *mxy = Complex64::new(r[0], r[1]);
            *mz = r[2];
        });
        self.dephase_clock_ms = 0.0;
    }

    /// Free precession and relaxation for `dt_ms` at constant coil current.
    pub fn evolve(&mut self, dt_ms: f64, coil_current_a: f64) {
        if dt_ms <= 0.0 {
            return;
        }
        let dt_s = dt_ms * 1e-3;
        let e2 = (-dt_ms / self.tissue.t2_ms).exp();
        let e1 = (-dt_ms / self.tissue.t1_ms).exp();
        self.m_xy
            .par_iter_mut()
            .zip(self.m_z.par_iter_mut())
            .zip(self.natural_offres.par_iter().zip(self.induced_offres_per_amp.par_iter()))
            .with_min_len(MIN_PAR_LEN)
            .for_each(|((mxy, mz), (nat, ind))| {
                let phase = -(nat + coil_current_a * ind) * dt_s;
                let (s, c) = phase.sin_cos();
                *mxy *= Complex64::new(e2 * c, e2 * s);
                *mz = 1.0 + (*mz - 1.0) * e1;
            });
        self.dephase_clock_ms += dt_ms;
    }

    /// Ideal 180° pulse about +x: conjugates phases and inverts m_z.
    pub fn refocus(&mut self) {
        self.m_xy.par_iter_mut().zip(self.m_z.par_iter_mut()).with_min_len(MIN_PAR_LEN).for_each(|(mxy, mz)| {
            *mxy = mxy.conj();
            *mz = -*mz;
        });
        self.dephase_clock_ms = -self.dephase_clock_ms;
    }

    /// Destroys all transverse magnetization.
    pub fn spoil(&mut self) {
        self.m_xy.iter_mut().for_each(|m| *m = Complex64::new(0.0, 0.0));
        self.dephase_clock_ms = 0.0;
    }

    /// Envelope applied at readout for the lumped representation.
    pub fn lumped_envelope(&self) -> f64 {
        match self.mode {
            InhomogeneityMode::Explicit => 1.0,
            InhomogeneityMode::Lumped => {
                let t2p = self.tissue.t2_prime_ms();
                if t2p.is_finite() {
                    (-self.dephase_clock_ms.abs() / t2p).exp()
                } else {
                    1.0
                }
            }
        }
    }

    /// Baseband signal `m0 · ⟨m_xy⟩`, with the lumped T2′ envelope if any.
    pub fn readout(&self, m0: f64) -> Complex64 {
        if self.is_empty() {
            return Complex64::new(0.0, 0.0);
        }
        let mean = pairwise_sum(&self.m_xy) / self.len() as f64;
        mean * (m0 * self.lumped_envelope())
    }

    /// Largest per-spin |M|², for invariant checks.
    pub fn max_magnitude_sq(&self) -> f64 {
        self.m_xy.iter().zip(&self.m_z).map(|(a, b)| a.norm_sqr() + b * b).fold(0.0, f64::max)
    }
}
