use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{cnr, contrast_moment, receiver_field_contrast, simulate_contrast, ContrastResult, SimConfig};
use crate::spins::SpinEnsemble;
use crate::{Error, Result};

/// Default TR index treated as steady state (fourth TR).
pub const DEFAULT_STEADY_STATE_TR: usize = 3;

/// Swept parameter. Axis values are in ms (TE, TR), µA (current),
/// µm (coil width), turns, voxel-to-coil width ratio, or degrees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Te,
    Current,
    CoilWidth,
    CoilTurns,
    VoxelRatio,
    Tr,
    RotationAngle,
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::Te => "te_ms",
            SweepAxis::Current => "current_ua",
            SweepAxis::CoilWidth => "coil_width_um",
            SweepAxis::CoilTurns => "coil_turns",
            SweepAxis::VoxelRatio => "voxel_ratio",
            SweepAxis::Tr => "tr_ms",
            SweepAxis::RotationAngle => "rotation_deg",
        }
    }

    fn touches_geometry(&self) -> bool {
        !matches!(self, SweepAxis::Te | SweepAxis::Tr | SweepAxis::Current)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    /// When set (and the axis is not TE), each point reports the largest
    /// contrast over these echo times.
    pub te_search_ms: Option<Vec<f64>>,
    /// Noise std relative to the post-excitation signal; enables the CNR column.
    pub noise_std: Option<f64>,
    /// Receiver-plane distance for the dipole field column.
    pub receiver_distance_m: f64,
    pub steady_state_tr: usize,
}

impl SweepSpec {
    pub fn new(axis: SweepAxis, values: Vec<f64>) -> Self {
        SweepSpec {
            axis,
            values,
            te_search_ms: None,
            noise_std: None,
            receiver_distance_m: 0.03,
            steady_state_tr: DEFAULT_STEADY_STATE_TR,
        }
    }

    pub fn with_te_search(mut self, te_ms: Vec<f64>) -> Self {
        self.te_search_ms = Some(te_ms);
        self
    }

    fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::Config("sweep range is empty".into()));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("sweep values must be finite".into()));
        }
        let inc = self.values.windows(2).all(|w| w[1] > w[0]);
        let dec = self.values.windows(2).all(|w| w[1] < w[0]);
        if !(inc || dec) {
            return Err(Error::Config("sweep values must be strictly monotone".into()));
        }
        if let Some(te) = &self.te_search_ms {
            if te.is_empty() {
                return Err(Error::Config("TE search grid is empty".into()));
            }
        }
        if let Some(n) = self.noise_std {
            if !(n > 0.0) {
                return Err(Error::Config("sweep noise std must be positive".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub axis_name: String,
    pub axis_values: Vec<f64>,
    pub c_n_values: Vec<f64>,
    /// Echo time at which each reported contrast was taken.
    pub te_values_ms: Vec<f64>,
    pub cnr_values: Option<Vec<f64>>,
    /// Receiver-plane field difference (T) for each point.
    pub receiver_field_t: Vec<f64>,
    pub metadata: serde_json::Value,
}

impl SweepResult {
    /// CSV with header `axis_value,c_n,cnr`; `cnr` is empty without a noise level.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "axis_value,c_n,cnr")?;
        for (i, (x, c)) in self.axis_values.iter().zip(&self.c_n_values).enumerate() {
            match &self.cnr_values {
                Some(v) => writeln!(w, "{x},{c},{}", v[i])?,
                None => writeln!(w, "{x},{c},")?,
            }
        }
        Ok(())
    }

    /// CSV with header `axis_value,receiver_field_T`.
    pub fn write_receiver_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "axis_value,receiver_field_T")?;
        for (x, b) in self.axis_values.iter().zip(&self.receiver_field_t) {
            writeln!(w, "{x},{b}")?;
        }
        Ok(())
    }
}

fn point_config(base: &SimConfig, axis: SweepAxis, v: f64) -> Result<SimConfig> {
    let mut cfg = base.clone();
    match axis {
        SweepAxis::Te => cfg.sequence.te_ms = v,
        SweepAxis::Tr => cfg.sequence.tr_ms = v,
        SweepAxis::Current => cfg.current_a = v * 1e-6,
        SweepAxis::CoilWidth => cfg.coil.outer_width_um = v,
        SweepAxis::CoilTurns => {
            if !(v >= 1.0 && v.fract() == 0.0) {
                return Err(Error::Config(format!("turn count {v} is not a positive integer")));
            }
            cfg.coil.turns = v as u32;
        }
        SweepAxis::VoxelRatio => {
            if !(v > 0.0) {
                return Err(Error::Config(format!("voxel ratio {v} must be positive")));
            }
            let w_mm = v * cfg.coil.outer_width_um * 1e-3;
            cfg.voxel.width_mm = [w_mm; 3];
        }
        SweepAxis::RotationAngle => cfg.coil.rotation_deg = v,
    }
    cfg.sequence.validate()?;
    Ok(cfg)
}

/// Best contrast over `te_grid` (or at the configured TE when `None`).
fn best_contrast(
    ensemble: &SpinEnsemble,
    cfg: &SimConfig,
    te_grid: Option<&[f64]>,
    readout_tr: usize,
) -> Result<(f64, ContrastResult)> {
    let Some(grid) = te_grid else {
        let r = simulate_contrast(ensemble, &cfg.sequence, cfg.current_a, readout_tr)?;
        return Ok((cfg.sequence.te_ms, r));
    };
    let results: Vec<(f64, ContrastResult)> = grid
        .par_iter()
        .map(|&te| {
            let params = cfg.sequence.with_te(te);
            simulate_contrast(ensemble, &params, cfg.current_a, readout_tr).map(|r| (te, r))
        })
        .collect::<Result<_>>()?;
    // first maximum wins on ties
    Ok(results.into_iter().reduce(|best, x| if x.1.c_n > best.1.c_n { x } else { best }).expect("non-empty TE grid"))
}

/// Runs on/off simulations for each axis value.
///
/// Geometry-changing axes rebuild field and ensemble per point; TE, TR and
/// current reuse one ensemble. The TR axis reports the steady-state TR, all
/// other axes the first TR. Output order follows `spec.values` whatever the
/// thread count.
pub fn sweep(spec: &SweepSpec, base: &SimConfig) -> Result<SweepResult> {
    spec.validate()?;
    let shared = if spec.axis.touches_geometry() { None } else { Some(base.ensemble()?) };
    let readout_tr = if spec.axis == SweepAxis::Tr { spec.steady_state_tr } else { 0 };
    let te_grid = match spec.axis {
        SweepAxis::Te => None,
        _ => spec.te_search_ms.as_deref(),
    };
    let points: Vec<(f64, ContrastResult, f64)> = spec
        .values
        .par_iter()
        .map(|&v| {
            let attach = |e: Error| Error::SweepPoint { axis: spec.axis.name().into(), value: v, source: Box::new(e) };
            let cfg = point_config(base, spec.axis, v).map_err(attach)?;
            let owned;
            let ensemble = match &shared {
                Some(e) => e,
                None => {
                    owned = cfg.ensemble().map_err(attach)?;
                    &owned
                }
            };
            let (te, r) = best_contrast(ensemble, &cfg, te_grid, readout_tr).map_err(attach)?;
            let moment = contrast_moment(r.c_n, cfg.voxel.volume_m3(), &cfg.constants);
            let field = receiver_field_contrast(moment, spec.receiver_distance_m).map_err(attach)?;
            Ok((te, r, field))
        })
        .collect::<Result<_>>()?;
    let cnr_values = match spec.noise_std {
        Some(noise) => {
            Some(points.iter().map(|(_, r, _)| cnr(r.absolute_contrast, noise)).collect::<Result<Vec<_>>>()?)
        }
        None => None,
    };
    Ok(SweepResult {
        axis_name: spec.axis.name().to_string(),
        axis_values: spec.values.clone(),
        c_n_values: points.iter().map(|p| p.1.c_n).collect(),
        te_values_ms: points.iter().map(|p| p.0).collect(),
        cnr_values,
        receiver_field_t: points.iter().map(|p| p.2).collect(),
        metadata: serde_json::json!({ "base": base, "sweep": spec, "seed": base.seed }),
    })
}

/// First-TR contrast, i.e. the fully recovered TR = ∞ value.
pub fn tr_asymptote(base: &SimConfig) -> Result<f64> {
    Ok(simulate_contrast(&base.ensemble()?, &base.sequence, base.current_a, 0)?.c_n)
}

/// Normalized CNR when each bit at `data_rate_bps` is acquired `n_averages`
/// times at TR = 1/(rate·N) and averaged: steady-state contrast relative to
/// the fully recovered post-excitation signal, times √N.
pub fn averaging_cnr(
    data_rate_bps: f64,
    n_averages: usize,
    base: &SimConfig,
    ensemble: &SpinEnsemble,
    steady_state_tr: usize,
) -> Result<f64> {
    if n_averages < 1 {
        return Err(Error::Config("at least one acquisition per bit is required".into()));
    }
    if !(data_rate_bps > 0.0) {
        return Err(Error::Config("data rate must be positive".into()));
    }
    let tr_ms = 1e3 / (data_rate_bps * n_averages as f64);
    let params = base.sequence.with_tr(tr_ms);
    params.validate()?;
    let r = simulate_contrast(ensemble, &params, base.current_a, steady_state_tr)?;
    Ok(r.c_n * (n_averages as f64).sqrt())
}
