//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs with `harness = false` so the lines are printed even when every
//! check passes. Exit status is non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use mrmod_cli::{Cli, Command};
use mrmod_core::constants::MU0;
use mrmod_core::contrast::{
    averaging_cnr, estimate_cnr_from_scanner, scaled_snr, simulate_contrast, sweep, tr_asymptote, SimConfig, SweepAxis,
    SweepSpec,
};
use mrmod_core::magnetics::{biot_savart_bz, build_square_spiral, CoilSpec, FieldOptions};
use mrmod_core::numeric::q_function;
use mrmod_core::sequences::{current_waveform_for_bit, run_sequence, CurrentWaveform, SequenceParams};
use mrmod_core::spins::{InhomogeneityMode, TissueParams};
use mrmod_core::uplink::{
    decode, locate, synthesize_from_levels, synthesize_voxel_series, t_score_map, welch_one_sided, Calibration, Scene,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;
type Criterion = (u32, &'static str, fn() -> Check);

const WM: TissueParams = TissueParams::WHITE_MATTER;
const GRID: usize = 64;

fn rel(a: f64, b: f64) -> f64 {
    (a / b - 1.0).abs()
}

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn range(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
    (0..n).map(|k| start + k as f64 * step).collect()
}

fn argmax(x: &[f64], y: &[f64]) -> f64 {
    let i = (0..y.len()).fold(0, |b, i| if y[i] > y[b] { i } else { b });
    x[i]
}

fn gre(cfg: &SimConfig, te_ms: f64) -> SimConfig {
    let mut c = cfg.clone();
    c.sequence = SequenceParams::gradient_echo(te_ms, 1250.0, 90.0, 40.0);
    c
}

fn field_oracle() -> Check {
    let start = Instant::now();
    let a = 600.0;
    let square = build_square_spiral(&CoilSpec::new(a, 1, 10.0)).map_err(|e| e.to_string())?;
    let centre = biot_savart_bz(&square, &[[0.0; 3]], FieldOptions::default()).map_err(|e| e.to_string())?;
    let expected = 2.0 * 2f64.sqrt() * MU0 / (PI * a * 1e-6);
    let centre_err = rel(centre.bz_per_amp[0], expected);

    // full dipole pattern Bz = μ0 m (3cos²θ − 1) / (4π r³), m = I a²
    let m = (a * 1e-6).powi(2);
    let mut far_err: f64 = 0.0;
    for r in [10.0 * a, 20.0 * a] {
        for theta in [0.0f64, 30f64.to_radians(), 90f64.to_radians()] {
            let p = [r * theta.sin(), 0.0, r * theta.cos()];
            let b = biot_savart_bz(&square, &[p], FieldOptions::default()).map_err(|e| e.to_string())?;
            let dip = MU0 * m * (3.0 * theta.cos().powi(2) - 1.0) / (4.0 * PI * (r * 1e-6).powi(3));
            far_err = far_err.max(rel(b.bz_per_amp[0], dip));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(
        centre_err < 1e-3 && far_err < 0.02 && secs < 1.0,
        format!("centre err {centre_err:.2e}, far-field max err {far_err:.2e}, {secs:.3} s"),
    )
}

fn relaxation() -> Check {
    let mut worst = Vec::new();
    for (grid, tol) in [(100usize, 5e-3), (GRID, 1.5e-2)] {
        let cfg = SimConfig { mode: InhomogeneityMode::Explicit, ..SimConfig::reference(grid) };
        let e = cfg.ensemble().map_err(|e| e.to_string())?;
        let mut err: f64 = 0.0;
        for te in [20.0, 40.0, 65.0] {
            let g = gre(&cfg, te);
            let s = run_sequence(&mut e.clone(), &g.sequence, &CurrentWaveform::off(), 1, 1.0).unwrap()[0].norm();
            err = err.max(rel(s, (-te / WM.t2_star_ms).exp()));
            let p = cfg.sequence.with_te(te);
            let s = run_sequence(&mut e.clone(), &p, &CurrentWaveform::off(), 1, 1.0).unwrap()[0].norm();
            err = err.max(rel(s, (-te / WM.t2_ms).exp()));
        }
        worst.push((grid, err, err < tol));
    }
    let detail = worst.iter().map(|(g, e, _)| format!("{g}^3 max err {e:.2e}")).collect::<Vec<_>>().join(", ");
    ensure(worst.iter().all(|w| w.2), detail)
}

fn refocusing() -> Check {
    let cfg = SimConfig { mode: InhomogeneityMode::Explicit, ..SimConfig::reference(GRID) };
    let e = cfg.ensemble().map_err(|e| e.to_string())?;
    let p = cfg.sequence;
    let run = |w: &CurrentWaveform| run_sequence(&mut e.clone(), &p, w, 1, 1.0).unwrap()[0].norm();
    let off = run(&CurrentWaveform::off());
    let mut max_dev: f64 = 0.0;
    let mut all_reduced = true;
    for ua in [50.0, 100.0, 200.0, 400.0, 750.0] {
        let i = ua * 1e-6;
        max_dev = max_dev.max(rel(run(&CurrentWaveform::constant(0.0, p.acq_end_ms(), i)), off));
        all_reduced &= run(&current_waveform_for_bit(true, &p, i)) < off;
    }
    ensure(
        max_dev < 5e-3 && all_reduced,
        format!("constant-current deviation {max_dev:.2e}, reversal reduces echo at 50-750 uA: {all_reduced}"),
    )
}

fn te_curves() -> Check {
    let tes = range(10.0, 150.0, 5.0);
    let base = SimConfig::reference(GRID);
    let se = sweep(&SweepSpec::new(SweepAxis::Te, tes.clone()), &base).map_err(|e| e.to_string())?;
    let g = gre(&base, 40.0);
    let gr = sweep(&SweepSpec::new(SweepAxis::Te, tes.clone()), &g).map_err(|e| e.to_string())?;
    let (a_se, a_gre) = (argmax(&tes, &se.c_n_values), argmax(&tes, &gr.c_n_values));
    let above = se.c_n_values.iter().zip(&gr.c_n_values).all(|(s, g)| s > g);
    ensure(
        (a_se - 65.0).abs() <= 7.0 && (a_gre - 40.0).abs() <= 7.0 && above,
        format!("argmax TE: SE {a_se} ms, GRE {a_gre} ms; SE above GRE at every TE: {above}"),
    )
}

fn current_curve() -> Check {
    let ua = range(50.0, 750.0, 50.0);
    let r = sweep(&SweepSpec::new(SweepAxis::Current, ua.clone()), &SimConfig::reference(GRID))
        .map_err(|e| e.to_string())?;
    let c = &r.c_n_values;
    let increasing = c.windows(2).all(|w| w[1] > w[0]);
    let at = |x: f64| c[ua.iter().position(|&u| u == x).unwrap()];
    let ratio = at(400.0) / at(100.0);
    ensure(increasing && ratio < 4.0, format!("strictly increasing: {increasing}, C_n(400)/C_n(100) = {ratio:.3}"))
}

fn width_vs_turns() -> Check {
    let base = SimConfig::reference(GRID);
    let tes = range(10.0, 150.0, 5.0);
    let w = sweep(&SweepSpec::new(SweepAxis::CoilWidth, vec![400.0, 800.0]).with_te_search(tes.clone()), &base)
        .map_err(|e| e.to_string())?;
    let t = sweep(&SweepSpec::new(SweepAxis::CoilTurns, vec![5.0, 15.0]).with_te_search(tes), &base)
        .map_err(|e| e.to_string())?;
    let dw = w.c_n_values[1] - w.c_n_values[0];
    let dt = t.c_n_values[1] - t.c_n_values[0];
    ensure(dw > dt, format!("dC_n width 400->800 um = {dw:.4}, turns 5->15 = {dt:.4}"))
}

fn voxel_ratio() -> Check {
    let ratios = range(1.0, 8.0, 0.25);
    let r = sweep(&SweepSpec::new(SweepAxis::VoxelRatio, ratios.clone()), &SimConfig::reference(GRID))
        .map_err(|e| e.to_string())?;
    let from2 = ratios.iter().position(|&x| x == 2.0).unwrap();
    let decreasing = r.c_n_values[from2..].windows(2).all(|w| w[1] < w[0]);
    let b = &r.receiver_field_t;
    let slope = |x0: f64, x1: f64| {
        let i0 = ratios.iter().position(|&x| x == x0).unwrap();
        let i1 = ratios.iter().position(|&x| x == x1).unwrap();
        (b[i1] - b[i0]) / (x1 - x0)
    };
    let (first, last) = (slope(1.0, 2.75), slope(6.25, 8.0));
    let rises = first > 0.0;
    ensure(
        decreasing && rises && last.abs() < 0.1 * first,
        format!(
            "C_n decreasing beyond ratio 2: {decreasing}; receiver-field slope first quarter {first:.3e} T, last quarter {last:.3e} T ({:.1}%)",
            100.0 * last / first
        ),
    )
}

fn tr_curve() -> Check {
    let mut trs = range(200.0, 5000.0, 200.0);
    trs.push(1250.0);
    trs.sort_by(f64::total_cmp);
    let base = SimConfig::reference(GRID);
    let r = sweep(&SweepSpec::new(SweepAxis::Tr, trs.clone()), &base).map_err(|e| e.to_string())?;
    let asym = tr_asymptote(&base).map_err(|e| e.to_string())?;
    let c = &r.c_n_values;
    let increasing = c.windows(2).all(|w| w[1] > w[0]);
    let bounded = c.iter().all(|&v| v <= asym);
    let ratio = c[trs.iter().position(|&t| t == 1250.0).unwrap()] / asym;
    let target = 1.0 - (-1250.0f64 / WM.t1_ms).exp();
    ensure(
        increasing && bounded && rel(ratio, target) <= 0.03,
        format!(
            "increasing: {increasing}, bounded by TR=inf: {bounded}, ratio at 1250 ms {ratio:.4} vs {target:.4} ({:+.2}%)",
            100.0 * (ratio / target - 1.0)
        ),
    )
}

fn averaging() -> Check {
    let base = SimConfig::reference(48);
    let e = base.ensemble().map_err(|e| e.to_string())?;
    let best_other =
        |rate: f64| (2..=4).filter_map(|n| averaging_cnr(rate, n, &base, &e, 3).ok()).fold(f64::NEG_INFINITY, f64::max);
    let n1 = |rate: f64| averaging_cnr(rate, 1, &base, &e, 3).unwrap();
    let rates = range(0.1, 2.0, 0.01);
    let n1_wins: Vec<bool> = rates.iter().map(|&r| n1(r) >= best_other(r)).collect();
    let last_loss = n1_wins.iter().rposition(|w| !w);
    let crossover = match last_loss {
        Some(i) if i + 1 < rates.len() => rates[i + 1],
        Some(_) => return Err("N = 1 never overtakes averaging below 2 bps".into()),
        None => rates[0],
    };
    let low = n1(0.33) < averaging_cnr(0.33, 2, &base, &e, 3).unwrap();
    let high = n1(10.0) >= best_other(10.0);
    ensure(
        (0.4..=0.8).contains(&crossover) && low && high,
        format!("crossover {crossover:.2} bps; N=2 beats N=1 at 0.33 bps: {low}; N=1 best at 10 bps: {high}"),
    )
}

fn rotation() -> Check {
    let angles = range(-90.0, 90.0, 22.5);
    let r = sweep(&SweepSpec::new(SweepAxis::RotationAngle, angles.clone()), &SimConfig::reference(GRID))
        .map_err(|e| e.to_string())?;
    let c = &r.c_n_values;
    let zero = c[angles.iter().position(|&a| a == 0.0).unwrap()];
    let ends = [c[0] / zero, c[c.len() - 1] / zero];
    let peak = argmax(&angles, c);
    let sym = (0..c.len()).map(|i| rel(c[i], c[c.len() - 1 - i])).fold(0.0, f64::max);
    ensure(
        ends.iter().all(|x| (x - 0.83).abs() <= 0.05) && peak == 0.0 && sym < 0.01,
        format!(
            "C_n(-90)/C_n(0) = {:.3}, C_n(+90)/C_n(0) = {:.3}, max at {peak} deg, asymmetry {sym:.1e}",
            ends[0], ends[1]
        ),
    )
}

fn cnr_estimate() -> Check {
    let snr = scaled_snr(72.94, 2.0 * 2.0 * 3.6, 2.0 * 2.0 * 2.0).map_err(|e| e.to_string())?;
    let cfg = SimConfig { current_a: 200e-6, ..SimConfig::reference(GRID) };
    let e = cfg.ensemble().map_err(|e| e.to_string())?;
    let c_n = simulate_contrast(&e, &cfg.sequence, cfg.current_a, 0).map_err(|e| e.to_string())?.c_n;
    let est = estimate_cnr_from_scanner(72.94, 14.4, 8.0, c_n).map_err(|e| e.to_string())?;
    ensure(
        (snr - 40.52).abs() <= 0.01 && rel(est, 8.04) <= 0.25,
        format!(
            "scaled SNR {snr:.4}, simulated C_n {c_n:.4}, CNR {est:.2} vs 8.04 ({:+.1}%)",
            100.0 * (est / 8.04 - 1.0)
        ),
    )
}

fn design_target() -> Check {
    let mut cfg = SimConfig::reference(GRID);
    cfg.coil = CoilSpec::new(630.0, 10, 10.0).with_layers(2);
    cfg.sequence = cfg.sequence.with_te(35.0);
    let e = cfg.ensemble().map_err(|e| e.to_string())?;
    let c_n = simulate_contrast(&e, &cfg.sequence, cfg.current_a, 0).map_err(|e| e.to_string())?.c_n;
    ensure((c_n - 0.10).abs() <= 0.03, format!("C_n = {:.2}% (SE, TE 35 ms, 100 uA)", 100.0 * c_n))
}

fn uplink_end_to_end() -> Check {
    // per-frame CNR 8: off level 1, on level 0.8, noise 0.025 per channel
    let (off, on, sigma) = (1.0, 0.8, 0.025);
    let cal = Calibration { mean_on: on, mean_off: off };
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let n_bits = 1_000_000;
    let bits: Vec<u8> = (0..n_bits).map(|_| rng.random_range(0..=1u8)).collect();
    let levels: Vec<f64> = bits.iter().map(|&b| if b == 1 { on } else { off }).collect();
    let series = synthesize_voxel_series(&levels, sigma, 7);
    let decoded = decode(&series, &cal, 1).map_err(|e| e.to_string())?;
    let errors = decoded.iter().zip(&bits).filter(|(a, b)| a != b).count();
    let ber = errors as f64 / n_bits as f64;
    let q4 = q_function(4.0);
    let ber_ok = ber >= q4 / 3.0 && ber <= 3.0 * q4;

    // N = 4 averaging on 1e5 bits should be error-free
    let n4_bits = &bits[..100_000];
    let n4_levels: Vec<f64> = n4_bits.iter().flat_map(|&b| [if b == 1 { on } else { off }; 4]).collect();
    let n4 = decode(&synthesize_voxel_series(&n4_levels, sigma, 8), &cal, 4).map_err(|e| e.to_string())?;
    let n4_errors = n4.iter().zip(n4_bits).filter(|(a, b)| a != b).count();

    let (nx, ny) = (16, 16);
    let labels: Vec<u8> = (0..100).map(|i| u8::from(i >= 50)).collect();
    let frame_levels: Vec<f64> = labels.iter().map(|&l| if l == 1 { on } else { off }).collect();
    let mut hits = 0;
    for trial in 0..100u64 {
        let implant = (rng.random_range(0..nx), rng.random_range(0..ny));
        let scene = Scene::uniform(nx, ny, off, implant, sigma, 1000 + trial).map_err(|e| e.to_string())?;
        let stack = synthesize_from_levels(&frame_levels, &labels, &scene).map_err(|e| e.to_string())?;
        let loc = locate(&t_score_map(&stack).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        hits += usize::from((loc.ix, loc.iy) == implant);
    }
    ensure(
        ber_ok && n4_errors == 0 && hits >= 99,
        format!(
            "BER {ber:.2e} over {n_bits} bits vs Q(4) = {q4:.2e} ({:.2}x); N=4 errors {n4_errors}; localization {hits}/100",
            ber / q4
        ),
    )
}

fn welch_oracle() -> Check {
    let r = welch_one_sided(&[10.0, 12.0, 11.0], &[8.0, 9.0, 7.0]).ok_or("undefined statistic")?;
    ensure(
        (r.t - 3.674).abs() <= 1e-3 && (r.dof - 4.0).abs() <= 1e-6,
        format!("t = {:.6}, dof = {:.6}, p = {:.4}", r.t, r.dof, r.p),
    )
}

fn longer_te_more_contrast() -> Check {
    let cfg = SimConfig::reference(GRID);
    let e = cfg.ensemble().map_err(|e| e.to_string())?;
    let c = |te: f64| simulate_contrast(&e, &cfg.sequence.with_te(te), cfg.current_a, 3).map(|r| r.absolute_contrast);
    let (c35, c65) = (c(35.0).map_err(|e| e.to_string())?, c(65.0).map_err(|e| e.to_string())?);
    ensure(
        c65 > c35,
        format!(
            "steady-state contrast TE 65 = {c65:.4}, TE 35 = {c35:.4} (SE, 100 uA); hardware CNR 25.58 not simulated"
        ),
    )
}

const DET_BASE: &str = r#"
seed = 5

[coil]
outer_width_um = 600
turns = 10
trace_spacing_um = 10

[voxel]
width_mm = 2
grid = 24

[sequence]
kind = "se_epi"
te_ms = 65
tr_ms = 1250

[physics]
current_ua = 150
mode = "explicit"
"#;

fn read_tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn determinism() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = tmp.path();
    let write = |name: &str, extra: &str| {
        let p = root.join(name);
        fs::write(&p, format!("{DET_BASE}{extra}")).unwrap();
        p
    };
    let sweep_cfg = write(
        "sweep.toml",
        "\n[sweep]\naxis = \"te_ms\"\nvalues = { start = 20, stop = 120, step = 10 }\nnoise_std = 0.025\n",
    );
    let seq_cfg = write("seq.toml", "\n[run]\nn_tr = 4\n");
    let up_cfg = write("uplink.toml", "\n[uplink]\ngrid = [12, 10]\nimplant_voxel = [3, 7]\ncnr = 6\n");
    let bits = root.join("bits.txt");
    fs::write(&bits, "0110100111010001\n").unwrap();
    let cases: Vec<(&str, Command)> = vec![
        ("field", Command::Field { config: sweep_cfg.clone() }),
        ("sweep", Command::Sweep { config: sweep_cfg }),
        ("sequence", Command::Sequence { config: seq_cfg }),
        ("uplink", Command::Uplink { config: up_cfg, bits }),
    ];
    let mut summary = Vec::new();
    for (name, command) in cases {
        let mut trees = Vec::new();
        for threads in [1, 4] {
            let out = root.join(format!("{name}-{threads}"));
            let cli = Cli { threads: Some(threads), seed: None, out: out.clone(), command: command.clone() };
            mrmod_cli::run(&cli).map_err(|e| format!("{name}: {e}"))?;
            trees.push(read_tree(&out));
        }
        if trees[0] != trees[1] {
            return Err(format!("{name}: outputs differ between 1 and 4 threads"));
        }
        summary.push(format!("{name} ({} files)", trees[0].len()));
    }
    let mut trees = Vec::new();
    for threads in [1, 4] {
        let out = root.join(format!("detect-{threads}"));
        let command = Command::Detect { stack: root.join("uplink-1/stack"), config: None };
        let cli = Cli { threads: Some(threads), seed: None, out: out.clone(), command };
        mrmod_cli::run(&cli).map_err(|e| format!("detect: {e}"))?;
        trees.push(read_tree(&out));
    }
    if trees[0] != trees[1] {
        return Err("detect: outputs differ between 1 and 4 threads".into());
    }
    summary.push(format!("detect ({} files)", trees[0].len()));
    // rerun from the sidecar
    let out = root.join("sweep-rerun");
    let cli = Cli {
        threads: Some(2),
        seed: None,
        out: out.clone(),
        command: Command::Sweep { config: root.join("sweep-1/metadata.json") },
    };
    mrmod_cli::run(&cli).map_err(|e| format!("sidecar rerun: {e}"))?;
    let rerun_same = read_tree(&out) == read_tree(&root.join("sweep-1"));
    ensure(
        rerun_same,
        format!("identical at 1 and 4 threads: {}; sidecar rerun identical: {rerun_same}", summary.join(", ")),
    )
}

fn main() {
    let criteria: Vec<Criterion> = vec![
        (1, "field oracle", field_oracle),
        (2, "relaxation closed forms", relaxation),
        (3, "refocusing control", refocusing),
        (4, "TE curves", te_curves),
        (5, "current curve", current_curve),
        (6, "width vs turns", width_vs_turns),
        (7, "voxel ratio", voxel_ratio),
        (8, "TR steady state", tr_curve),
        (9, "averaging crossover", averaging),
        (10, "rotation", rotation),
        (11, "CNR estimate", cnr_estimate),
        (12, "design target", design_target),
        (13, "uplink end to end", uplink_end_to_end),
        (14, "Welch oracle", welch_oracle),
        (15, "longer TE, more contrast", longer_te_more_contrast),
        (16, "determinism", determinism),
    ];
    let filter: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (id, name, f) in criteria {
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let t = Instant::now();
        let (status, detail) = match f() {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {id:>2} {status} {name}: {detail} [{:.1} s]", t.elapsed().as_secs_f64());
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
