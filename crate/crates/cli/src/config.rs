//! Run configuration.
//!
//! TOML with unit-suffixed keys and strict unknown-key rejection. A
//! `metadata.json` sidecar written by a previous run is accepted too; its
//! `config` object is the fully resolved configuration of that run.

use std::fs;
use std::path::{Path, PathBuf};

use mrmod_core::contrast::{SimConfig, SweepAxis, SweepSpec, DEFAULT_STEADY_STATE_TR};
use mrmod_core::magnetics::{default_layer_offsets, CoilSpec, ExclusionPolicy, FieldOptions};
use mrmod_core::sequences::{ernst_angle, SequenceKind, SequenceParams};
use mrmod_core::spins::{InhomogeneityMode, PhysicalConstants, TissueParams, VoxelSpec};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coil: Option<CoilSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub voxel: Option<VoxelSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tissue: Option<TissueSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sequence: Option<SequenceSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub physics: Option<PhysicsSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constants: Option<ConstantsSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run: Option<RunSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uplink: Option<UplinkSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoilSection {
    pub outer_width_um: f64,
    pub turns: u32,
    pub trace_spacing_um: f64,
    pub trace_width_um: Option<f64>,
    pub layers: Option<u32>,
    pub layer_z_offsets_um: Option<Vec<f64>>,
    pub rotation_deg: Option<f64>,
    pub center_um: Option<[f64; 3]>,
    pub exclusion_radius_um: Option<f64>,
    pub exclusion_policy: Option<ExclusionPolicy>,
}

/// Cubic voxel sampled on `grid`³ spins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VoxelSection {
    pub width_mm: f64,
    pub grid: usize,
    pub center_mm: Option<[f64; 3]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TissueSection {
    pub t1_ms: f64,
    pub t2_ms: f64,
    pub t2_star_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceSection {
    pub kind: SequenceKind,
    pub te_ms: f64,
    pub tr_ms: f64,
    pub acq_ms: Option<f64>,
    /// GRE only; defaults to the Ernst angle at TR. SE always excites at 90°.
    pub flip_deg: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicsSection {
    pub current_ua: f64,
    pub mode: Option<InhomogeneityMode>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsSection {
    pub gamma_over_2pi_mhz_per_t: Option<f64>,
    pub b0_t: Option<f64>,
    pub temperature_k: Option<f64>,
    pub spin_density_per_m3: Option<f64>,
}

/// Sweep axis; the name carries the unit of `values`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisName {
    TeMs,
    TrMs,
    CurrentUa,
    CoilWidthUm,
    CoilTurns,
    VoxelRatio,
    RotationDeg,
}

impl From<AxisName> for SweepAxis {
    fn from(a: AxisName) -> Self {
        match a {
            AxisName::TeMs => SweepAxis::Te,
            AxisName::TrMs => SweepAxis::Tr,
            AxisName::CurrentUa => SweepAxis::Current,
            AxisName::CoilWidthUm => SweepAxis::CoilWidth,
            AxisName::CoilTurns => SweepAxis::CoilTurns,
            AxisName::VoxelRatio => SweepAxis::VoxelRatio,
            AxisName::RotationDeg => SweepAxis::RotationAngle,
        }
    }
}

/// Explicit list, or an inclusive `{ start, stop, step }` range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Values {
    List(Vec<f64>),
    Range(Range),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Range {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Values {
    pub fn expand(&self) -> std::result::Result<Vec<f64>, String> {
        match self {
            Values::List(v) => Ok(v.clone()),
            Values::Range(r) => {
                if !(r.step != 0.0 && r.step.is_finite() && r.start.is_finite() && r.stop.is_finite()) {
                    return Err("range needs finite start/stop and a non-zero step".into());
                }
                let span = (r.stop - r.start) / r.step;
                if span < -1e-9 {
                    return Ok(Vec::new());
                }
                let n = (span + 1e-9).floor() as usize + 1;
                Ok((0..n).map(|k| r.start + k as f64 * r.step).collect())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub axis: AxisName,
    pub values: Values,
    /// Echo times searched for the best contrast on non-TE axes.
    pub te_search_ms: Option<Values>,
    /// Noise std relative to the post-excitation signal.
    pub noise_std: Option<f64>,
    pub receiver_distance_mm: Option<f64>,
    pub steady_state_tr: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunWaveform {
    /// Bit-1 waveform (polarity reversed at the refocusing pulse for SE).
    Reversed,
    /// Same current, no reversal.
    Constant,
    Off,
}

/// Per-TR signal run for the `sequence` subcommand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub n_tr: usize,
    pub waveform: Option<RunWaveform>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UplinkSection {
    pub grid: [usize; 2],
    pub implant_voxel: [usize; 2],
    /// Per-frame noise std per complex channel, in image units.
    pub noise_std: Option<f64>,
    /// Alternative to `noise_std`: steady-state off/on difference over noise.
    pub cnr: Option<f64>,
    /// Image units per unit normalized signal.
    pub signal_scale: Option<f64>,
    /// Background voxel intensity; defaults to the implant's steady off level.
    pub baseline: Option<f64>,
    pub n_averages: Option<usize>,
    pub preamble_zeros: Option<usize>,
    pub preamble_ones: Option<usize>,
    /// Leading preamble frames ignored by the receiver.
    pub skip_frames: Option<usize>,
    pub alpha: Option<f64>,
}

pub const DEFAULT_ACQ_MS: f64 = 40.0;
pub const DEFAULT_RECEIVER_DISTANCE_MM: f64 = 30.0;
pub const DEFAULT_SIGNAL_SCALE: f64 = 1000.0;
pub const DEFAULT_PREAMBLE: usize = 8;
pub const DEFAULT_ALPHA: f64 = 0.05;

/// Parsed config plus the text it came from, for error locations.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub path: PathBuf,
    pub text: String,
    pub config: Config,
}

pub fn load(path: &Path) -> Result<Loaded> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let parse_err = |msg: String| CliError::Parse { path: path.to_path_buf(), msg };
    let config = if path.extension().is_some_and(|e| e == "json") {
        #[derive(Deserialize)]
        struct Sidecar {
            config: Config,
        }
        serde_json::from_str::<Sidecar>(&text).map_err(|e| parse_err(e.to_string()))?.config
    } else {
        parse_toml(&text).map_err(parse_err)?
    };
    Ok(Loaded { path: path.to_path_buf(), text, config })
}

pub fn parse_toml(text: &str) -> std::result::Result<Config, String> {
    toml::from_str(text).map_err(|e| e.to_string().trim_end().to_string())
}

impl Loaded {
    /// 1-based line of the `[section]` header, if the source was TOML.
    pub fn section_line(&self, section: &str) -> Option<usize> {
        let header = format!("[{section}]");
        self.text.lines().position(|l| l.trim() == header).map(|i| i + 1)
    }

    pub fn in_section(&self, section: &str, e: mrmod_core::Error) -> CliError {
        CliError::Section { path: self.path.clone(), line: self.section_line(section), source: e }
    }

    pub fn require<'a, T>(&self, section: &'a Option<T>, name: &'static str, command: &'static str) -> Result<&'a T> {
        section.as_ref().ok_or(CliError::MissingSection { path: self.path.clone(), command, section: name })
    }
}

impl Config {
    /// Fills every default in place so that the config, once written, fully
    /// determines the run. Applying it twice changes nothing.
    pub fn resolve(&mut self) {
        self.seed.get_or_insert(0);
        if let Some(c) = &mut self.coil {
            c.trace_width_um.get_or_insert(mrmod_core::magnetics::DEFAULT_TRACE_WIDTH_UM);
            let layers = *c.layers.get_or_insert(1);
            c.layer_z_offsets_um.get_or_insert_with(|| default_layer_offsets(layers));
            c.rotation_deg.get_or_insert(0.0);
            c.center_um.get_or_insert([0.0; 3]);
            let fo = FieldOptions::default();
            c.exclusion_radius_um.get_or_insert(fo.exclusion_radius_um);
            c.exclusion_policy.get_or_insert(fo.policy);
        }
        if let Some(v) = &mut self.voxel {
            v.center_mm.get_or_insert([0.0; 3]);
        }
        if self.tissue.is_none() {
            let t = TissueParams::WHITE_MATTER;
            self.tissue = Some(TissueSection { t1_ms: t.t1_ms, t2_ms: t.t2_ms, t2_star_ms: t.t2_star_ms });
        }
        let t1 = self.tissue.map(|t| t.t1_ms).unwrap_or(TissueParams::WHITE_MATTER.t1_ms);
        if let Some(s) = &mut self.sequence {
            s.acq_ms.get_or_insert(DEFAULT_ACQ_MS);
            let default_flip = match s.kind {
                SequenceKind::SeEpi => 90.0,
                SequenceKind::GreEpi => ernst_angle(t1, s.tr_ms),
            };
            s.flip_deg.get_or_insert(default_flip);
        }
        if let Some(p) = &mut self.physics {
            p.mode.get_or_insert(InhomogeneityMode::default());
        }
        let c = self.constants.get_or_insert_with(ConstantsSection::default);
        let d = PhysicalConstants::default();
        c.gamma_over_2pi_mhz_per_t.get_or_insert(d.gamma_over_2pi_mhz_per_t);
        c.b0_t.get_or_insert(d.b0_t);
        c.temperature_k.get_or_insert(d.temperature_k);
        c.spin_density_per_m3.get_or_insert(d.spin_density_per_m3);
        if let Some(s) = &mut self.sweep {
            s.receiver_distance_mm.get_or_insert(DEFAULT_RECEIVER_DISTANCE_MM);
            s.steady_state_tr.get_or_insert(DEFAULT_STEADY_STATE_TR);
        }
        if let Some(r) = &mut self.run {
            r.waveform.get_or_insert(RunWaveform::Reversed);
        }
        if let Some(u) = &mut self.uplink {
            u.signal_scale.get_or_insert(DEFAULT_SIGNAL_SCALE);
            u.n_averages.get_or_insert(1);
            u.preamble_zeros.get_or_insert(DEFAULT_PREAMBLE);
            u.preamble_ones.get_or_insert(DEFAULT_PREAMBLE);
            u.skip_frames.get_or_insert(1);
            u.alpha.get_or_insert(DEFAULT_ALPHA);
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }
}

impl CoilSection {
    pub fn spec(&self) -> CoilSpec {
        let mut spec =
            CoilSpec::new(self.outer_width_um, self.turns, self.trace_spacing_um).with_layers(self.layers.unwrap_or(1));
        if let Some(w) = self.trace_width_um {
            spec.trace_width_um = w;
        }
        if let Some(z) = &self.layer_z_offsets_um {
            spec.layer_z_offsets_um = z.clone();
        }
        spec.rotation_deg = self.rotation_deg.unwrap_or(0.0);
        spec.center_um = self.center_um.unwrap_or([0.0; 3]);
        spec
    }

    pub fn field_options(&self) -> FieldOptions {
        let d = FieldOptions::default();
        FieldOptions {
            exclusion_radius_um: self.exclusion_radius_um.unwrap_or(d.exclusion_radius_um),
            policy: self.exclusion_policy.unwrap_or(d.policy),
        }
    }
}

impl VoxelSection {
    pub fn spec(&self) -> VoxelSpec {
        VoxelSpec { center_mm: self.center_mm.unwrap_or([0.0; 3]), ..VoxelSpec::cube(self.width_mm, self.grid) }
    }
}

impl SequenceSection {
    pub fn params(&self) -> SequenceParams {
        let acq = self.acq_ms.unwrap_or(DEFAULT_ACQ_MS);
        let flip = self.flip_deg.unwrap_or(90.0);
        SequenceParams { kind: self.kind, te_ms: self.te_ms, tr_ms: self.tr_ms, flip_deg: flip, acq_ms: acq }
    }
}

impl ConstantsSection {
    pub fn constants(&self) -> PhysicalConstants {
        let d = PhysicalConstants::default();
        PhysicalConstants {
            gamma_over_2pi_mhz_per_t: self.gamma_over_2pi_mhz_per_t.unwrap_or(d.gamma_over_2pi_mhz_per_t),
            b0_t: self.b0_t.unwrap_or(d.b0_t),
            temperature_k: self.temperature_k.unwrap_or(d.temperature_k),
            spin_density_per_m3: self.spin_density_per_m3.unwrap_or(d.spin_density_per_m3),
        }
    }
}

impl Loaded {
    /// Validated simulation operating point; needs coil, voxel, sequence
    /// and physics sections.
    pub fn sim_config(&self, command: &'static str) -> Result<SimConfig> {
        let c = &self.config;
        let coil = self.require(&c.coil, "coil", command)?;
        let voxel = self.require(&c.voxel, "voxel", command)?;
        let seq = self.require(&c.sequence, "sequence", command)?;
        let physics = self.require(&c.physics, "physics", command)?;
        let coil_spec = coil.spec();
        coil_spec.validate().map_err(|e| self.in_section("coil", e))?;
        let voxel_spec = voxel.spec();
        voxel_spec.validate().map_err(|e| self.in_section("voxel", e))?;
        let tissue = match c.tissue {
            Some(t) => TissueParams::new(t.t1_ms, t.t2_ms, t.t2_star_ms).map_err(|e| self.in_section("tissue", e))?,
            None => TissueParams::WHITE_MATTER,
        };
        let params = seq.params();
        params.validate().map_err(|e| self.in_section("sequence", e))?;
        let constants = c.constants.unwrap_or_default().constants();
        constants.validate().map_err(|e| self.in_section("constants", e))?;
        if !physics.current_ua.is_finite() {
            let e = mrmod_core::Error::Config("current_ua must be finite".into());
            return Err(self.in_section("physics", e));
        }
        Ok(SimConfig {
            coil: coil_spec,
            field: coil.field_options(),
            voxel: voxel_spec,
            tissue,
            sequence: params,
            current_a: physics.current_ua * 1e-6,
            mode: physics.mode.unwrap_or_default(),
            constants,
            seed: c.seed(),
        })
    }

    pub fn sweep_spec(&self) -> Result<SweepSpec> {
        let s = self.require(&self.config.sweep, "sweep", "sweep")?;
        let bad = |msg: String| self.in_section("sweep", mrmod_core::Error::Config(msg));
        let values = s.values.expand().map_err(bad)?;
        let mut spec = SweepSpec::new(s.axis.into(), values);
        if let Some(te) = &s.te_search_ms {
            spec.te_search_ms = Some(te.expand().map_err(bad)?);
        }
        spec.noise_std = s.noise_std;
        spec.receiver_distance_m = s.receiver_distance_mm.unwrap_or(DEFAULT_RECEIVER_DISTANCE_MM) * 1e-3;
        spec.steady_state_tr = s.steady_state_tr.unwrap_or(DEFAULT_STEADY_STATE_TR);
        Ok(spec)
    }
}
