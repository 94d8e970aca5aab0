use std::cmp::Ordering;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::ImageStack;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchResult {
    pub t: f64,
    pub dof: f64,
    /// Upper-tail probability of `t`, in (0, 1].
    pub p: f64,
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    (m, x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0))
}

/// One-sided Welch test of "off brighter than on". `None` when either group
/// has fewer than two samples or both variances vanish.
pub fn welch_one_sided(off: &[f64], on: &[f64]) -> Option<WelchResult> {
    if off.len() < 2 || on.len() < 2 {
        return None;
    }
    let (m_off, v_off) = mean_var(off);
    let (m_on, v_on) = mean_var(on);
    let a = v_off / off.len() as f64;
    let b = v_on / on.len() as f64;
    let se2 = a + b;
    if !(se2 > 0.0) {
        return None;
    }
    let t = (m_off - m_on) / se2.sqrt();
    let dof = se2 * se2 / (a * a / (off.len() as f64 - 1.0) + b * b / (on.len() as f64 - 1.0));
    let dist = StudentsT::new(0.0, 1.0, dof).ok()?;
    let p = dist.sf(t).clamp(f64::MIN_POSITIVE, 1.0);
    Some(WelchResult { t, dof, p })
}

/// Voxelwise Welch statistics; `None` marks undefined voxels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TMap {
    pub nx: usize,
    pub ny: usize,
    pub voxels: Vec<Option<WelchResult>>,
}

impl TMap {
    /// CSV with header `ix,iy,t_score,dof,p_value`; undefined voxels have
    /// empty statistic fields.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "ix,iy,t_score,dof,p_value")?;
        for (idx, v) in self.voxels.iter().enumerate() {
            let (ix, iy) = (idx % self.nx, idx / self.nx);
            match v {
                Some(r) => writeln!(w, "{ix},{iy},{},{},{}", r.t, r.dof, r.p)?,
                None => writeln!(w, "{ix},{iy},,,")?,
            }
        }
        Ok(())
    }
}

pub fn t_score_map(stack: &ImageStack) -> Result<TMap> {
    let n_off = stack.labels.iter().filter(|&&l| l == 0).count();
    let n_on = stack.labels.iter().filter(|&&l| l == 1).count();
    if n_off < 2 || n_on < 2 {
        return Err(Error::Config(format!("t-test needs >= 2 frames per group (off: {n_off}, on: {n_on})")));
    }
    let voxels = (0..stack.nx * stack.ny)
        .into_par_iter()
        .map(|idx| {
            let mut off = Vec::with_capacity(n_off);
            let mut on = Vec::with_capacity(n_on);
            for (f, &l) in stack.frames.iter().zip(&stack.labels) {
                if l == 0 {
                    off.push(f[idx]);
                } else {
                    on.push(f[idx]);
                }
            }
            welch_one_sided(&off, &on)
        })
        .collect();
    Ok(TMap { nx: stack.nx, ny: stack.ny, voxels })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Location {
    pub ix: usize,
    pub iy: usize,
    pub t: f64,
    pub dof: f64,
    pub p: f64,
}

/// Voxel with the lowest p-value. Ties go to the larger t, then to the lower
/// row-major index.
pub fn locate(tmap: &TMap) -> Result<Location> {
    let best = tmap
        .voxels
        .iter()
        .enumerate()
        .filter_map(|(i, v)| v.map(|r| (i, r)))
        .min_by(|(ia, a), (ib, b)| a.p.total_cmp(&b.p).then(b.t.total_cmp(&a.t)).then(ia.cmp(ib)));
    match best {
        Some((idx, r)) => Ok(Location { ix: idx % tmap.nx, iy: idx / tmap.nx, t: r.t, dof: r.dof, p: r.p }),
        None => Err(Error::Detection("no voxel has a defined t statistic".into())),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub location: Location,
    /// Lowest p-value multiplied by the number of tested voxels, capped at 1.
    pub bonferroni_p: f64,
    pub alpha: f64,
    pub detected: bool,
}

/// Locates the strongest voxel and decides significance with a Bonferroni
/// correction over all defined voxels.
pub fn detect(tmap: &TMap, alpha: f64) -> Result<Detection> {
    let location = locate(tmap)?;
    let tested = tmap.voxels.iter().filter(|v| v.is_some()).count();
    let bonferroni_p = (location.p * tested as f64).min(1.0);
    Ok(Detection { location, bonferroni_p, alpha, detected: bonferroni_p.partial_cmp(&alpha) == Some(Ordering::Less) })
}
