//! Bitstream to image series and back: encoding, synthetic acquisition,
//! voxelwise detection, decoding and error rates.

mod stack_io;
mod ttest;

pub use stack_io::{read_bits, read_stack, write_bits, write_stack, MANIFEST_FILE};
pub use ttest::{detect, locate, t_score_map, welch_one_sided, Detection, Location, TMap, WelchResult};

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::sequences::{current_waveform_for_bit, run_schedule, CurrentWaveform, SequenceParams};
use crate::spins::SpinEnsemble;
use crate::{Error, Result};

/// Bits expanded into one coil waveform per TR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BitSchedule {
    pub bits: Vec<u8>,
    pub waveforms: Vec<CurrentWaveform>,
    pub n_averages: usize,
}

impl BitSchedule {
    /// Intended bit of every frame.
    pub fn frame_labels(&self) -> Vec<u8> {
        self.bits.iter().flat_map(|&b| std::iter::repeat_n(b, self.n_averages)).collect()
    }
}

pub fn encode_bits(bits: &[u8], params: &SequenceParams, current_a: f64, n_averages: usize) -> Result<BitSchedule> {
    if bits.is_empty() {
        return Err(Error::Config("bitstream is empty".into()));
    }
    if n_averages < 1 {
        return Err(Error::Config("n_averages must be >= 1".into()));
    }
    if let Some(b) = bits.iter().find(|&&b| b > 1) {
        return Err(Error::Config(format!("bit value {b} is not 0 or 1")));
    }
    let waveforms = bits
        .iter()
        .flat_map(|&b| std::iter::repeat_n(current_waveform_for_bit(b == 1, params, current_a), n_averages))
        .collect();
    Ok(BitSchedule { bits: bits.to_vec(), waveforms, n_averages })
}

/// Synthetic image plane with a single implant voxel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub nx: usize,
    pub ny: usize,
    /// Row-major (`iy * nx + ix`) noiseless intensity of every voxel.
    pub baseline: Vec<f64>,
    pub implant: (usize, usize),
    pub noise_std: f64,
    pub seed: u64,
}

impl Scene {
    pub fn uniform(
        nx: usize,
        ny: usize,
        baseline: f64,
        implant: (usize, usize),
        noise_std: f64,
        seed: u64,
    ) -> Result<Self> {
        let s = Scene { nx, ny, baseline: vec![baseline; nx * ny], implant, noise_std, seed };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx == 0 || self.ny == 0 {
            return Err(Error::Config("scene grid must be non-empty".into()));
        }
        if self.baseline.len() != self.nx * self.ny {
            return Err(Error::Config("baseline must have one value per voxel".into()));
        }
        if self.implant.0 >= self.nx || self.implant.1 >= self.ny {
            return Err(Error::Config(format!("implant voxel {:?} outside the grid", self.implant)));
        }
        if !(self.noise_std >= 0.0) {
            return Err(Error::Config("noise std must be >= 0".into()));
        }
        Ok(())
    }

    pub fn implant_index(&self) -> usize {
        self.implant.1 * self.nx + self.implant.0
    }
}

/// Magnitude frames, one per TR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageStack {
    pub nx: usize,
    pub ny: usize,
    /// Row-major frames.
    pub frames: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
    pub acquisition: serde_json::Value,
    pub seed: u64,
}

impl ImageStack {
    /// Magnitudes of one voxel over all frames.
    pub fn voxel_series(&self, ix: usize, iy: usize) -> VoxelTimeSeries {
        let idx = iy * self.nx + ix;
        VoxelTimeSeries { values: self.frames.iter().map(|f| f[idx]).collect(), labels: self.labels.clone() }
    }

    /// Keeps only the listed frames.
    pub fn select_frames(&self, frames: std::ops::Range<usize>) -> ImageStack {
        ImageStack {
            frames: self.frames[frames.clone()].to_vec(),
            labels: self.labels[frames].to_vec(),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoxelTimeSeries {
    pub values: Vec<f64>,
    pub labels: Vec<u8>,
}

/// Physics behind the implant voxel.
#[derive(Debug, Clone)]
pub struct UplinkPhysics {
    pub ensemble: SpinEnsemble,
    pub sequence: SequenceParams,
    /// Signal units of a fully magnetized voxel.
    pub signal_scale: f64,
}

impl UplinkPhysics {
    /// Noiseless implant magnitude for every TR of `waveforms`, chained
    /// through the longitudinal steady state from full equilibrium.
    pub fn implant_levels(&self, waveforms: &[CurrentWaveform]) -> Result<Vec<f64>> {
        let mut e = self.ensemble.clone();
        e.reset();
        let s = run_schedule(&mut e, &self.sequence, waveforms, self.signal_scale)?;
        Ok(s.iter().map(|z| z.norm()).collect())
    }
}

/// Frames whose implant voxel follows the simulated signal of each TR of
/// the schedule.
pub fn synthesize_series(schedule: &BitSchedule, scene: &Scene, physics: &UplinkPhysics) -> Result<ImageStack> {
    let levels = physics.implant_levels(&schedule.waveforms)?;
    let mut stack = synthesize_from_levels(&levels, &schedule.frame_labels(), scene)?;
    stack.acquisition = serde_json::json!({
        "sequence": physics.sequence,
        "signal_scale": physics.signal_scale,
        "n_averages": schedule.n_averages,
        "bits": schedule.bits.len(),
    });
    Ok(stack)
}

/// Magnitude of `level` plus complex white Gaussian noise.
#[inline]
fn noisy_magnitude<R: rand::Rng>(level: f64, noise_std: f64, rng: &mut R) -> f64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(level + noise_std * re, noise_std * im).norm()
}

/// Frames with the implant voxel at the given noiseless levels. Frame `i`
/// draws its noise from stream `i` of the scene seed, so output does not
/// depend on the worker count.
pub fn synthesize_from_levels(levels: &[f64], labels: &[u8], scene: &Scene) -> Result<ImageStack> {
    scene.validate()?;
    if levels.len() != labels.len() {
        return Err(Error::Config("one label per frame is required".into()));
    }
    let implant = scene.implant_index();
    let frames = levels
        .par_iter()
        .enumerate()
        .map(|(i, &level)| {
            let mut rng = ChaCha8Rng::seed_from_u64(scene.seed);
            rng.set_stream(i as u64);
            scene
                .baseline
                .iter()
                .enumerate()
                .map(|(idx, &b)| {
                    let v = if idx == implant { level } else { b };
                    noisy_magnitude(v, scene.noise_std, &mut rng)
                })
                .collect()
        })
        .collect();
    Ok(ImageStack {
        nx: scene.nx,
        ny: scene.ny,
        frames,
        labels: labels.to_vec(),
        acquisition: serde_json::Value::Null,
        seed: scene.seed,
    })
}

const SERIES_CHUNK: usize = 4096;

/// Single-voxel magnitude series, for long runs where whole frames would be
/// wasteful.
pub fn synthesize_voxel_series(levels: &[f64], noise_std: f64, seed: u64) -> Vec<f64> {
    levels
        .par_chunks(SERIES_CHUNK)
        .enumerate()
        .flat_map_iter(|(c, chunk)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            chunk.iter().map(|&l| noisy_magnitude(l, noise_std, &mut rng)).collect::<Vec<_>>()
        })
        .collect()
}

/// Receiver reference levels for the two symbols.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub mean_on: f64,
    pub mean_off: f64,
}

impl Calibration {
    pub fn validate(&self) -> Result<()> {
        if !(self.mean_off > self.mean_on) {
            return Err(Error::Config(format!(
                "calibration inverted: off mean {} is not above on mean {}",
                self.mean_off, self.mean_on
            )));
        }
        Ok(())
    }

    /// Group means of labelled frames (e.g. a known preamble).
    pub fn from_frames(values: &[f64], labels: &[u8]) -> Result<Self> {
        let mean = |bit: u8| {
            let v: Vec<f64> = values.iter().zip(labels).filter(|(_, &l)| l == bit).map(|(&x, _)| x).collect();
            (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
        };
        match (mean(1), mean(0)) {
            (Some(mean_on), Some(mean_off)) => Ok(Calibration { mean_on, mean_off }),
            _ => Err(Error::Config("calibration needs frames of both symbols".into())),
        }
    }

    pub fn threshold(&self) -> f64 {
        0.5 * (self.mean_on + self.mean_off)
    }
}

/// Midpoint-threshold decoder over groups of `n_averages` frames.
pub fn decode(values: &[f64], calibration: &Calibration, n_averages: usize) -> Result<Vec<u8>> {
    calibration.validate()?;
    if n_averages < 1 || !values.len().is_multiple_of(n_averages) {
        return Err(Error::Config(format!("{} frames do not split into groups of {n_averages}", values.len())));
    }
    let threshold = calibration.threshold();
    Ok(values
        .chunks(n_averages)
        .map(|g| {
            let mean = g.iter().sum::<f64>() / n_averages as f64;
            u8::from(mean < threshold)
        })
        .collect())
}

/// Fraction of differing bits.
pub fn ber(decoded: &[u8], truth: &[u8]) -> Result<f64> {
    if decoded.len() != truth.len() {
        return Err(Error::Config(format!(
            "decoded length {} differs from reference length {}",
            decoded.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Ok(0.0);
    }
    let errors = decoded.iter().zip(truth).filter(|(a, b)| a != b).count();
    Ok(errors as f64 / truth.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub current_ua: f64,
    pub mean: f64,
    pub std: f64,
    /// Zero-current mean minus this level's mean.
    pub contrast: f64,
    /// Contrast over the zero-current std.
    pub cnr: f64,
}

fn mean_std(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, var.sqrt())
}

/// Per-current-level statistics of one voxel's intensity.
pub fn contrast_vs_current_report(levels: &[(f64, Vec<f64>)]) -> Result<Vec<ReportRow>> {
    if let Some((c, _)) = levels.iter().find(|(_, v)| v.len() < 2) {
        return Err(Error::Config(format!("current level {c} uA has fewer than 2 frames")));
    }
    let (_, zero) = levels
        .iter()
        .find(|(c, _)| *c == 0.0)
        .ok_or_else(|| Error::Config("no zero-current reference level".into()))?;
    let (m0, s0) = mean_std(zero);
    levels
        .iter()
        .map(|(c, v)| {
            let (mean, std) = mean_std(v);
            let contrast = m0 - mean;
            let cnr = if contrast == 0.0 { 0.0 } else { crate::contrast::cnr(contrast, s0)? };
            Ok(ReportRow { current_ua: *c, mean, std, contrast, cnr })
        })
        .collect()
}
