//! Subcommand implementations. Each writes its outputs plus `metadata.json`
//! into the output directory.
//!
//! | command    | files                                                        |
//! |------------|--------------------------------------------------------------|
//! | `field`    | `field.csv` (`x_um,y_um,z_um,bz_per_amp_T`), `field_scaled.csv` (`x_um,y_um,z_um,bz_T`) |
//! | `sweep`    | `sweep.csv` (`axis_value,c_n,cnr`), `receiver_field.csv` (`axis_value,receiver_field_T`) |
//! | `sequence` | `signals.csv` (`tr_index,re,im,mag`)                         |
//! | `uplink`   | `stack/`, `decoded_bits.txt`, `tmap.csv`, `report.json`      |
//! | `detect`   | `tmap.csv` (`ix,iy,t_score,dof,p_value`), `detection.json`   |

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use mrmod_core::contrast::sweep;
use mrmod_core::magnetics::{biot_savart_bz, build_square_spiral};
use mrmod_core::sequences::{current_waveform_for_bit, run_sequence, write_signals_csv, CurrentWaveform};
use mrmod_core::uplink::{
    ber, decode, detect, encode_bits, read_bits, read_stack, synthesize_series, t_score_map, write_bits, write_stack,
    Calibration, Scene, UplinkPhysics,
};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Loaded, RunWaveform};
use crate::error::{CliError, Result};

pub const METADATA_FILE: &str = "metadata.json";

#[derive(Serialize)]
struct Metadata<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    seed: u64,
    config: &'a crate::config::Config,
    details: Value,
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_with<F>(path: &Path, f: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<fs::File>) -> std::io::Result<()>,
{
    let file = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    f(&mut w).and_then(|_| w.flush()).map_err(|e| CliError::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("plain data serializes");
    fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}

fn write_metadata(out: &Path, command: &'static str, loaded: &Loaded, details: Value) -> Result<()> {
    let meta = Metadata {
        tool: "mrmod",
        version: env!("CARGO_PKG_VERSION"),
        command,
        seed: loaded.config.seed(),
        config: &loaded.config,
        details,
    };
    write_json(&out.join(METADATA_FILE), &meta)
}

pub fn field(loaded: &Loaded, out: &Path) -> Result<()> {
    let c = &loaded.config;
    let coil = loaded.require(&c.coil, "coil", "field")?;
    let voxel = loaded.require(&c.voxel, "voxel", "field")?;
    let spec = coil.spec();
    let segments = build_square_spiral(&spec).map_err(|e| loaded.in_section("coil", e))?;
    let vspec = voxel.spec();
    vspec.validate().map_err(|e| loaded.in_section("voxel", e))?;
    let map = biot_savart_bz(&segments, &vspec.positions_um(), coil.field_options())
        .map_err(|e| loaded.in_section("coil", e))?;
    create_dir(out)?;
    write_with(&out.join("field.csv"), |w| map.write_csv(w))?;
    let current_a = c.physics.map(|p| p.current_ua * 1e-6);
    if let Some(i) = current_a {
        write_with(&out.join("field_scaled.csv"), |w| map.write_scaled_csv(w, i))?;
    }
    let details = json!({
        "points": map.len(),
        "segments": segments.len(),
        "exclusion_radius_um": map.options.exclusion_radius_um,
        "exclusion_policy": map.options.policy,
        "excluded_points": map.excluded.len(),
        "current_a": current_a,
    });
    write_metadata(out, "field", loaded, details)
}

pub fn sweep_cmd(loaded: &Loaded, out: &Path) -> Result<()> {
    let base = loaded.sim_config("sweep")?;
    let spec = loaded.sweep_spec()?;
    let result = sweep(&spec, &base).map_err(|e| loaded.in_section("sweep", e))?;
    create_dir(out)?;
    write_with(&out.join("sweep.csv"), |w| result.write_csv(w))?;
    write_with(&out.join("receiver_field.csv"), |w| result.write_receiver_csv(w))?;
    let details = json!({
        "axis_name": result.axis_name,
        "te_at_point_ms": result.te_values_ms,
        "steady_state_tr": spec.steady_state_tr,
        "normalization": "post-excitation signal at full equilibrium",
    });
    write_metadata(out, "sweep", loaded, details)
}

pub fn sequence(loaded: &Loaded, out: &Path) -> Result<()> {
    let cfg = loaded.sim_config("sequence")?;
    let run = loaded.require(&loaded.config.run, "run", "sequence")?;
    if run.n_tr < 1 {
        return Err(loaded.in_section("run", mrmod_core::Error::Config("n_tr must be >= 1".into())));
    }
    let p = cfg.sequence;
    let waveform = match run.waveform.unwrap_or(RunWaveform::Reversed) {
        RunWaveform::Reversed => current_waveform_for_bit(true, &p, cfg.current_a),
        RunWaveform::Constant => CurrentWaveform::constant(0.0, p.acq_end_ms(), cfg.current_a),
        RunWaveform::Off => CurrentWaveform::off(),
    };
    let mut ensemble = cfg.ensemble()?;
    let signals = run_sequence(&mut ensemble, &p, &waveform, run.n_tr, 1.0)?;
    create_dir(out)?;
    write_with(&out.join("signals.csv"), |w| write_signals_csv(w, &signals))?;
    let details = json!({ "spins": ensemble.len(), "m0": 1.0, "waveform": waveform });
    write_metadata(out, "sequence", loaded, details)
}

#[derive(Debug, Clone, Serialize)]
pub struct UplinkReport {
    pub payload_bits: usize,
    pub bit_errors: usize,
    pub ber: f64,
    pub noise_std: f64,
    pub baseline: f64,
    pub steady_off_level: f64,
    pub steady_on_level: f64,
    pub implant_voxel: [usize; 2],
    /// `None` for noiseless runs, where the t statistic is undefined and the
    /// receiver reads the configured implant voxel.
    pub located_voxel: Option<[usize; 2]>,
    pub located_p: Option<f64>,
    pub bonferroni_p: Option<f64>,
    pub detected: Option<bool>,
    pub calibration: Calibration,
}

pub fn uplink(loaded: &Loaded, bits_path: &Path, out: &Path) -> Result<UplinkReport> {
    let cfg = loaded.sim_config("uplink")?;
    let u = loaded.require(&loaded.config.uplink, "uplink", "uplink")?;
    let bad = |msg: String| loaded.in_section("uplink", mrmod_core::Error::Config(msg));
    let payload = read_bits(bits_path)?;
    let n_avg = u.n_averages.unwrap_or(1);
    let zeros = u.preamble_zeros.unwrap_or(crate::config::DEFAULT_PREAMBLE);
    let ones = u.preamble_ones.unwrap_or(crate::config::DEFAULT_PREAMBLE);
    let skip = u.skip_frames.unwrap_or(1);
    if n_avg < 1 {
        return Err(bad("n_averages must be >= 1".into()));
    }
    if skip + 2 > zeros * n_avg || ones * n_avg < 2 {
        return Err(bad("preamble needs >= 2 usable frames of each symbol after skip_frames".into()));
    }
    let mut bits = vec![0u8; zeros];
    bits.extend(std::iter::repeat_n(1u8, ones));
    bits.extend_from_slice(&payload);
    let schedule = encode_bits(&bits, &cfg.sequence, cfg.current_a, n_avg)?;

    let physics = UplinkPhysics {
        ensemble: cfg.ensemble()?,
        sequence: cfg.sequence,
        signal_scale: u.signal_scale.unwrap_or(crate::config::DEFAULT_SIGNAL_SCALE),
    };
    let off = current_waveform_for_bit(false, &cfg.sequence, cfg.current_a);
    let on = current_waveform_for_bit(true, &cfg.sequence, cfg.current_a);
    let reference = physics.implant_levels(&[off.clone(), off.clone(), off.clone(), off, on])?;
    let (steady_off, steady_on) = (reference[3], reference[4]);
    let noise_std = match (u.noise_std, u.cnr) {
        (Some(n), None) if n >= 0.0 => n,
        (None, Some(cnr)) if cnr > 0.0 => {
            let contrast = steady_off - steady_on;
            if !(contrast > 0.0) {
                return Err(mrmod_core::Error::Domain(format!(
                    "no modulation contrast at {} uA; cannot set noise from cnr",
                    cfg.current_a * 1e6
                ))
                .into());
            }
            contrast / cnr
        }
        _ => return Err(bad("set exactly one of noise_std (>= 0) or cnr (> 0)".into())),
    };
    let baseline = u.baseline.unwrap_or(steady_off);
    let [ix, iy] = u.implant_voxel;
    let scene = Scene::uniform(u.grid[0], u.grid[1], baseline, (ix, iy), noise_std, cfg.seed)
        .map_err(|e| loaded.in_section("uplink", e))?;
    let stack = synthesize_series(&schedule, &scene, &physics)?;

    let pre = (zeros + ones) * n_avg;
    let preamble = stack.select_frames(skip..pre);
    let tmap = t_score_map(&preamble)?;
    let (located, detection) = if noise_std > 0.0 {
        let d = detect(&tmap, u.alpha.unwrap_or(crate::config::DEFAULT_ALPHA))?;
        ((d.location.ix, d.location.iy), Some(d))
    } else {
        ((ix, iy), None)
    };
    let series = stack.voxel_series(located.0, located.1);
    let calibration = Calibration::from_frames(&series.values[skip..pre], &series.labels[skip..pre])?;
    let decoded = decode(&series.values[pre..], &calibration, n_avg)?;
    let rate = ber(&decoded, &payload)?;

    create_dir(out)?;
    write_stack(&out.join("stack"), &stack)?;
    write_bits(&out.join("decoded_bits.txt"), &decoded)?;
    write_with(&out.join("tmap.csv"), |w| tmap.write_csv(w))?;
    let report = UplinkReport {
        payload_bits: payload.len(),
        bit_errors: decoded.iter().zip(&payload).filter(|(a, b)| a != b).count(),
        ber: rate,
        noise_std,
        baseline,
        steady_off_level: steady_off,
        steady_on_level: steady_on,
        implant_voxel: u.implant_voxel,
        located_voxel: detection.map(|d| [d.location.ix, d.location.iy]),
        located_p: detection.map(|d| d.location.p),
        bonferroni_p: detection.map(|d| d.bonferroni_p),
        detected: detection.map(|d| d.detected),
        calibration,
    };
    write_json(&out.join("report.json"), &report)?;
    let details = json!({
        "preamble_bits": [zeros, ones],
        "skip_frames": skip,
        "frames": stack.frames.len(),
    });
    write_metadata(out, "uplink", loaded, details)?;
    Ok(report)
}

pub fn detect_cmd(loaded: &Loaded, stack_dir: &Path, out: &Path) -> Result<()> {
    let alpha = loaded.config.uplink.as_ref().and_then(|u| u.alpha).unwrap_or(crate::config::DEFAULT_ALPHA);
    let stack = read_stack(stack_dir)?;
    let tmap = t_score_map(&stack)?;
    let d = detect(&tmap, alpha)?;
    create_dir(out)?;
    write_with(&out.join("tmap.csv"), |w| tmap.write_csv(w))?;
    write_json(&out.join("detection.json"), &d)?;
    let details = json!({ "frames": stack.frames.len(), "stack_seed": stack.seed });
    write_metadata(out, "detect", loaded, details)?;
    if !d.detected {
        return Err(CliError::NotDetected {
            ix: d.location.ix,
            iy: d.location.iy,
            bonferroni_p: d.bonferroni_p,
            alpha,
        });
    }
    Ok(())
}
