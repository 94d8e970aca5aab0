//! On-disk layout of image stacks and bitstreams.
//!
//! A stack directory holds `manifest.json` plus one `frame_NNNNN.csv` per
//! frame with header `ix,iy,magnitude` in row-major order.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ImageStack;
use crate::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
const FORMAT: &str = "mrmod-image-stack";
const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    format: String,
    version: u32,
    nx: usize,
    ny: usize,
    seed: u64,
    frames: Vec<FrameEntry>,
    acquisition: serde_json::Value,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameEntry {
    file: String,
    label: u8,
}

pub fn write_stack(dir: &Path, stack: &ImageStack) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(stack.frames.len());
    for (i, (frame, &label)) in stack.frames.iter().zip(&stack.labels).enumerate() {
        let name = format!("frame_{i:05}.csv");
        let path = dir.join(&name);
        let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = BufWriter::new(file);
        let write = |w: &mut BufWriter<fs::File>| -> std::io::Result<()> {
            writeln!(w, "ix,iy,magnitude")?;
            for (idx, v) in frame.iter().enumerate() {
                writeln!(w, "{},{},{}", idx % stack.nx, idx / stack.nx, v)?;
            }
            w.flush()
        };
        write(&mut w).map_err(|e| Error::io(&path, e))?;
        entries.push(FrameEntry { file: name, label });
    }
    let manifest = Manifest {
        format: FORMAT.into(),
        version: VERSION,
        nx: stack.nx,
        ny: stack.ny,
        seed: stack.seed,
        frames: entries,
        acquisition: stack.acquisition.clone(),
    };
    let path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
}

pub fn read_stack(dir: &Path) -> Result<ImageStack> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let bad = |msg: String| Error::Format { path: path.clone(), msg };
    let m: Manifest = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
    if m.format != FORMAT || m.version != VERSION {
        return Err(bad(format!("unsupported stack format {} v{}", m.format, m.version)));
    }
    if let Some(f) = m.frames.iter().find(|f| f.label > 1) {
        return Err(bad(format!("frame {} has label {}", f.file, f.label)));
    }
    let n = m.nx * m.ny;
    let mut frames = Vec::with_capacity(m.frames.len());
    for entry in &m.frames {
        let fpath = dir.join(&entry.file);
        let text = fs::read_to_string(&fpath).map_err(|e| Error::io(&fpath, e))?;
        let bad = |line: usize, msg: &str| Error::Format { path: fpath.clone(), msg: format!("line {line}: {msg}") };
        let mut lines = text.lines();
        if lines.next() != Some("ix,iy,magnitude") {
            return Err(bad(1, "expected header ix,iy,magnitude"));
        }
        let mut frame = vec![f64::NAN; n];
        let mut seen = 0;
        for (k, line) in lines.enumerate() {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 3 {
                return Err(bad(k + 2, "expected 3 columns"));
            }
            let ix: usize = cols[0].parse().map_err(|_| bad(k + 2, "bad ix"))?;
            let iy: usize = cols[1].parse().map_err(|_| bad(k + 2, "bad iy"))?;
            let v: f64 = cols[2].parse().map_err(|_| bad(k + 2, "bad magnitude"))?;
            if ix >= m.nx || iy >= m.ny {
                return Err(bad(k + 2, "voxel index outside the grid"));
            }
            if !(v >= 0.0) {
                return Err(bad(k + 2, "magnitude must be >= 0"));
            }
            frame[iy * m.nx + ix] = v;
            seen += 1;
        }
        if seen != n || frame.iter().any(|v| v.is_nan()) {
            return Err(bad(0, "frame does not cover every voxel exactly once"));
        }
        frames.push(frame);
    }
    Ok(ImageStack {
        nx: m.nx,
        ny: m.ny,
        frames,
        labels: m.frames.iter().map(|f| f.label).collect(),
        acquisition: m.acquisition,
        seed: m.seed,
    })
}

/// Reads ASCII '0'/'1' lines; blank lines are ignored and a line may carry
/// several bits.
pub fn read_bits(path: &Path) -> Result<Vec<u8>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut bits = Vec::new();
    for (n, line) in text.lines().enumerate() {
        for c in line.trim().chars() {
            match c {
                '0' => bits.push(0),
                '1' => bits.push(1),
                other => {
                    return Err(Error::Config(format!("{}:{}: invalid bit character {other:?}", path.display(), n + 1)))
                }
            }
        }
    }
    if bits.is_empty() {
        return Err(Error::Config(format!("{}: no bits", path.display())));
    }
    Ok(bits)
}

/// One bit per line.
pub fn write_bits(path: &Path, bits: &[u8]) -> Result<()> {
    let text: String = bits.iter().map(|b| if *b == 0 { "0\n" } else { "1\n" }).collect();
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
