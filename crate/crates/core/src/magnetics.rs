//! Micro-coil geometry and its longitudinal magnetic field.
//!
//! Lengths inside this module are in micrometres unless a name says
//! otherwise; fields are in tesla per ampere of coil current. The laboratory
//! longitudinal (B0) axis is +z.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::MU0_OVER_4PI;
use crate::numeric::{add, cross, dot, norm, pairwise_sum, scale, sub, Vec3};
use crate::{Error, Result};

/// Tolerance used for chain connectivity and rotation round trips (µm).
pub const CHAIN_TOLERANCE_UM: f64 = 1e-9;

pub const DEFAULT_TRACE_WIDTH_UM: f64 = 5.0;
pub const DEFAULT_EXCLUSION_RADIUS_UM: f64 = 2.0;

/// Parametric square-spiral coil.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoilSpec {
    pub outer_width_um: f64,
    /// Total turns over all layers.
    pub turns: u32,
    pub trace_spacing_um: f64,
    pub trace_width_um: f64,
    pub layers: u32,
    pub layer_z_offsets_um: Vec<f64>,
    /// Tilt about the in-plane x axis through `center_um`, in degrees.
    pub rotation_deg: f64,
    pub center_um: Vec3,
}

impl CoilSpec {
    /// Single-layer, untilted coil centred at the origin.
    pub fn new(outer_width_um: f64, turns: u32, trace_spacing_um: f64) -> Self {
        CoilSpec {
            outer_width_um,
            turns,
            trace_spacing_um,
            trace_width_um: DEFAULT_TRACE_WIDTH_UM,
            layers: 1,
            layer_z_offsets_um: vec![0.0],
            rotation_deg: 0.0,
            center_um: [0.0; 3],
        }
    }

    /// Sets the layer count with the default stacking offsets
    /// (0 µm for one layer, {0, −3} µm for two, then −3 µm per extra layer).
    pub fn with_layers(mut self, layers: u32) -> Self {
        self.layers = layers;
        self.layer_z_offsets_um = default_layer_offsets(layers);
        self
    }

    pub fn with_rotation(mut self, rotation_deg: f64) -> Self {
        self.rotation_deg = rotation_deg;
        self
    }

    /// Centre-to-centre distance between adjacent turns.
    pub fn pitch_um(&self) -> f64 {
        self.trace_spacing_um + self.trace_width_um
    }

    pub fn turns_per_layer(&self) -> u32 {
        self.turns / self.layers.max(1)
    }

    /// Centerline width of turn `k` (0 = outermost) within a layer.
    pub fn turn_width_um(&self, k: u32) -> f64 {
        self.outer_width_um - 2.0 * k as f64 * self.pitch_um()
    }

    pub fn validate(&self) -> Result<()> {
        if self.turns < 1 {
            return Err(Error::Geometry("turns must be >= 1".into()));
        }
        if self.layers < 1 {
            return Err(Error::Geometry("layers must be >= 1".into()));
        }
        if !self.turns.is_multiple_of(self.layers) {
            return Err(Error::Geometry(format!(
                "{} turns cannot be split evenly over {} layers",
                self.turns, self.layers
            )));
        }
        if self.layer_z_offsets_um.len() != self.layers as usize {
            return Err(Error::Geometry(format!(
                "expected {} layer z offsets, got {}",
                self.layers,
                self.layer_z_offsets_um.len()
            )));
        }
        if !(self.outer_width_um > 0.0) {
            return Err(Error::Geometry("outer width must be positive".into()));
        }
        if !(self.trace_spacing_um >= 0.0 && self.trace_width_um >= 0.0) {
            return Err(Error::Geometry("trace spacing and width must be non-negative".into()));
        }
        if !(-90.0..=90.0).contains(&self.rotation_deg) {
            return Err(Error::Geometry(format!("rotation {} deg outside [-90, 90]", self.rotation_deg)));
        }
        for k in 0..self.turns_per_layer() {
            let w = self.turn_width_um(k);
            if w <= 0.0 {
                return Err(Error::TurnWidth { turn: k as usize, width_um: w });
            }
        }
        Ok(())
    }
}

pub fn default_layer_offsets(layers: u32) -> Vec<f64> {
    (0..layers).map(|i| if i == 0 { 0.0 } else { -3.0 * i as f64 }).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: Vec3,
    pub end: Vec3,
}

impl Segment {
    pub fn length(&self) -> f64 {
        norm(sub(self.end, self.start))
    }

    /// Distance from `p` to the segment and the closest point on it.
    fn closest(&self, p: Vec3) -> (f64, Vec3) {
        let d = sub(self.end, self.start);
        let len2 = dot(d, d);
        let t = if len2 > 0.0 { (dot(sub(p, self.start), d) / len2).clamp(0.0, 1.0) } else { 0.0 };
        let c = add(self.start, scale(d, t));
        (norm(sub(p, c)), c)
    }
}

/// Straight-segment discretization of a coil, one connected chain per layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentSet {
    pub segments: Vec<Segment>,
    /// +1 or −1 per segment, multiplying the coil current.
    pub current_sign: Vec<f64>,
    /// Index of the first segment of each layer chain.
    pub chain_starts: Vec<usize>,
}

impl SegmentSet {
    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn total_length(&self) -> f64 {
        self.segments.iter().map(Segment::length).sum()
    }

    fn chain_ranges(&self) -> Vec<std::ops::Range<usize>> {
        let mut ends: Vec<usize> = self.chain_starts.iter().skip(1).copied().collect();
        ends.push(self.segments.len());
        self.chain_starts.iter().zip(ends).map(|(&s, e)| s..e).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.segments.is_empty() {
            return Err(Error::Geometry("segment set is empty".into()));
        }
        if self.current_sign.len() != self.segments.len() {
            return Err(Error::Geometry("one current sign per segment required".into()));
        }
        if self.current_sign.iter().any(|s| s.abs() != 1.0) {
            return Err(Error::Geometry("current signs must be +1 or -1".into()));
        }
        for range in self.chain_ranges() {
            for i in range.start + 1..range.end {
                let gap = norm(sub(self.segments[i].start, self.segments[i - 1].end));
                if gap > CHAIN_TOLERANCE_UM {
                    return Err(Error::Geometry(format!("segment {i} starts {gap} um away from the previous end")));
                }
            }
        }
        if !(self.total_length() > 0.0) {
            return Err(Error::Geometry("segment set has zero total length".into()));
        }
        Ok(())
    }

    /// Same path traversed backwards; negates the field.
    pub fn reversed(&self) -> SegmentSet {
        let mut segments = Vec::with_capacity(self.len());
        let mut current_sign = Vec::with_capacity(self.len());
        let mut chain_starts = Vec::new();
        for range in self.chain_ranges().into_iter().rev() {
            chain_starts.push(segments.len());
            for i in range.rev() {
                let s = self.segments[i];
                segments.push(Segment { start: s.end, end: s.start });
                current_sign.push(self.current_sign[i]);
            }
        }
        SegmentSet { segments, current_sign, chain_starts }
    }

    /// Same path with every current sign flipped; negates the field.
    pub fn with_flipped_signs(&self) -> SegmentSet {
        let mut out = self.clone();
        out.current_sign.iter_mut().for_each(|s| *s = -*s);
        out
    }

    /// Splits each segment into `k` equal collinear pieces.
    pub fn subdivided(&self, k: usize) -> SegmentSet {
        let k = k.max(1);
        let mut segments = Vec::with_capacity(self.len() * k);
        let mut current_sign = Vec::with_capacity(self.len() * k);
        let mut chain_starts = Vec::new();
        let mut next_start = self.chain_starts.iter().peekable();
        for (i, (s, &sign)) in self.segments.iter().zip(&self.current_sign).enumerate() {
            if next_start.peek() == Some(&&i) {
                next_start.next();
                chain_starts.push(segments.len());
            }
            let d = sub(s.end, s.start);
            for j in 0..k {
                let a = if j == 0 { s.start } else { add(s.start, scale(d, j as f64 / k as f64)) };
                let b = if j + 1 == k { s.end } else { add(s.start, scale(d, (j + 1) as f64 / k as f64)) };
                segments.push(Segment { start: a, end: b });
                current_sign.push(sign);
            }
        }
        SegmentSet { segments, current_sign, chain_starts }
    }

    /// Rigid rotation about the x-directed axis through `center`.
    pub fn rotated_about_x(&self, angle_deg: f64, center: Vec3) -> SegmentSet {
        let (s, c) = angle_deg.to_radians().sin_cos();
        let rot = |p: Vec3| {
            let q = sub(p, center);
            add(center, [q[0], c * q[1] - s * q[2], s * q[1] + c * q[2]])
        };
        let mut out = self.clone();
        for seg in &mut out.segments {
            seg.start = rot(seg.start);
            seg.end = rot(seg.end);
        }
        out
    }
}

/// Traces the spiral centerline of every layer.
///
/// Turn `k` of a layer has centerline width `outer_width − 2k·pitch`. Each
/// turn contributes four segments that step inward by one pitch on the last
/// side; the innermost turn closes onto its own corner and a straight lead
/// returns to the outer start, so every layer is a closed loop with the same
/// (counter-clockwise seen from +z) winding sense.
pub fn build_square_spiral(spec: &CoilSpec) -> Result<SegmentSet> {
    spec.validate()?;
    let n = spec.turns_per_layer() as usize;
    let half: Vec<f64> = (0..n).map(|k| spec.turn_width_um(k as u32) / 2.0).collect();
    let mut segments = Vec::with_capacity(spec.layers as usize * (4 * n + 1));
    let mut chain_starts = Vec::with_capacity(spec.layers as usize);
    for &z in &spec.layer_z_offsets_um {
        chain_starts.push(segments.len());
        let mut path: Vec<[f64; 2]> = vec![[-half[0], -half[0]]];
        for k in 0..n {
            let h = half[k];
            let next = if k + 1 < n { half[k + 1] } else { h };
            path.push([h, -h]);
            path.push([h, h]);
            path.push([-h, h]);
            path.push([-h, -next]);
        }
        // return lead from the innermost corner to the outer start
        path.push([-half[0], -half[0]]);
        let pts: Vec<Vec3> = path.iter().map(|p| add(spec.center_um, [p[0], p[1], z])).collect();
        for w in pts.windows(2) {
            if norm(sub(w[1], w[0])) > 0.0 {
                segments.push(Segment { start: w[0], end: w[1] });
            }
        }
    }
    let current_sign = vec![1.0; segments.len()];
    let set = SegmentSet { segments, current_sign, chain_starts };
    let set = if spec.rotation_deg != 0.0 { set.rotated_about_x(spec.rotation_deg, spec.center_um) } else { set };
    set.validate()?;
    Ok(set)
}

/// What to do with evaluation points closer than the exclusion radius to a
/// conductor centerline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExclusionPolicy {
    /// Evaluate at the nearest point on the exclusion boundary instead.
    Clamp,
    /// Report zero field for the point and list it as excluded.
    Skip,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldOptions {
    pub exclusion_radius_um: f64,
    pub policy: ExclusionPolicy,
}

impl Default for FieldOptions {
    fn default() -> Self {
        FieldOptions { exclusion_radius_um: DEFAULT_EXCLUSION_RADIUS_UM, policy: ExclusionPolicy::Clamp }
    }
}

/// Longitudinal field per ampere of coil current at a set of points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldMap {
    pub points: Vec<Vec3>,
    pub bz_per_amp: Vec<f64>,
    pub options: FieldOptions,
    /// Indices of points that fell inside the exclusion radius.
    pub excluded: Vec<usize>,
}

impl FieldMap {
    /// A map with zero field everywhere.
    pub fn zeros(points: Vec<Vec3>) -> FieldMap {
        let n = points.len();
        FieldMap { points, bz_per_amp: vec![0.0; n], options: FieldOptions::default(), excluded: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Field in tesla at the given coil current.
    pub fn at_current(&self, current_a: f64) -> Vec<f64> {
        self.bz_per_amp.iter().map(|b| b * current_a).collect()
    }

    /// CSV with header `x_um,y_um,z_um,bz_per_amp_T`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "x_um,y_um,z_um,bz_per_amp_T")?;
        for (p, b) in self.points.iter().zip(&self.bz_per_amp) {
            writeln!(w, "{},{},{},{}", p[0], p[1], p[2], b)?;
        }
        Ok(())
    }

    /// CSV with header `x_um,y_um,z_um,bz_T` at a given current.
    pub fn write_scaled_csv<W: Write>(&self, mut w: W, current_a: f64) -> std::io::Result<()> {
        writeln!(w, "x_um,y_um,z_um,bz_T")?;
        for (p, b) in self.points.iter().zip(&self.bz_per_amp) {
            writeln!(w, "{},{},{},{}", p[0], p[1], p[2], b * current_a)?;
        }
        Ok(())
    }
}

/// z component of the field of one finite straight segment, per ampere, with
/// positions in µm. Returns T/A.
#[inline]
fn segment_bz(seg: &Segment, p: Vec3) -> f64 {
    let r1 = sub(p, seg.start);
    let r2 = sub(p, seg.end);
    let n1 = norm(r1);
    let n2 = norm(r2);
    let denom = n1 * n2 * (n1 * n2 + dot(r1, r2));
    if denom <= 0.0 {
        return 0.0;
    }
    let c = cross(r1, r2);
    // µm⁻¹ → m⁻¹
    MU0_OVER_4PI * 1e6 * (n1 + n2) / denom * c[2]
}

fn point_bz(segments: &SegmentSet, p: Vec3) -> f64 {
    let terms: Vec<f64> =
        segments.segments.iter().zip(&segments.current_sign).map(|(s, &sign)| sign * segment_bz(s, p)).collect();
    pairwise_sum(&terms)
}

/// Closed-form Biot-Savart field of every segment, summed per point, keeping
/// only the longitudinal component.
pub fn biot_savart_bz(segments: &SegmentSet, points: &[Vec3], options: FieldOptions) -> Result<FieldMap> {
    if segments.is_empty() {
        return Err(Error::Geometry("no segments to integrate".into()));
    }
    if !(options.exclusion_radius_um >= 0.0) {
        return Err(Error::Config("exclusion radius must be non-negative".into()));
    }
    let r_ex = options.exclusion_radius_um;
    let evaluated: Vec<(f64, bool)> = points
        .par_iter()
        .with_min_len(256)
        .map(|&p| {
            let (dist, nearest) = segments
                .segments
                .iter()
                .map(|s| s.closest(p))
                .fold((f64::INFINITY, [0.0; 3]), |a, b| if b.0 < a.0 { b } else { a });
            if dist >= r_ex {
                return (point_bz(segments, p), false);
            }
            match options.policy {
                ExclusionPolicy::Skip => (0.0, true),
                ExclusionPolicy::Clamp => {
                    let offset = sub(p, nearest);
                    let dir = if dist > 0.0 { scale(offset, 1.0 / dist) } else { [0.0, 0.0, 1.0] };
                    (point_bz(segments, add(nearest, scale(dir, r_ex))), true)
                }
            }
        })
        .collect();
    let excluded = evaluated.iter().enumerate().filter_map(|(i, e)| e.1.then_some(i)).collect();
    Ok(FieldMap {
        points: points.to_vec(),
        bz_per_amp: evaluated.into_iter().map(|e| e.0).collect(),
        options,
        excluded,
    })
}

/// Field magnitude (T) of a magnetic dipole of moment `moment` (J/T) at
/// `distance_m`, on the dipole axis: (μ0/4π)·2m/r³.
pub fn dipole_field_magnitude(moment: f64, distance_m: f64) -> Result<f64> {
    if !(distance_m > 0.0) {
        return Err(Error::Domain(format!("dipole distance {distance_m} m must be positive")));
    }
    Ok(MU0_OVER_4PI * 2.0 * moment / distance_m.powi(3))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::MU0;
    use proptest::prelude::*;

    fn square_loop(a: f64) -> SegmentSet {
        build_square_spiral(&CoilSpec::new(a, 1, 10.0)).unwrap()
    }

    #[test]
    fn single_turn_is_a_square() {
        let s = square_loop(600.0);
        assert_eq!(s.len(), 4);
        assert!((s.total_length() - 2400.0).abs() < 1e-9);
        let corners: Vec<Vec3> = s.segments.iter().map(|g| g.start).collect();
        assert_eq!(
            corners,
            vec![[-300.0, -300.0, 0.0], [300.0, -300.0, 0.0], [300.0, 300.0, 0.0], [-300.0, 300.0, 0.0]]
        );
    }

    /// Independent construction: walk every turn corner by corner.
    fn unrolled_turn_widths(outer: f64, turns: usize, pitch: f64) -> Vec<f64> {
        let mut widths = Vec::new();
        let mut w = outer;
        for _ in 0..turns {
            widths.push(w);
            w -= 2.0 * pitch;
        }
        widths
    }

    #[test]
    fn ten_turn_spiral_recurrence() {
        let spec = CoilSpec::new(600.0, 10, 10.0);
        let s = build_square_spiral(&spec).unwrap();
        assert!(s.len() >= 40);
        let widths = unrolled_turn_widths(600.0, 10, 15.0);
        assert!((widths[9] - (600.0 - 2.0 * 9.0 * 15.0)).abs() < 1e-12);
        // the right-hand side of turn k sits at x = w_k / 2
        for (k, w) in widths.iter().enumerate() {
            let right = s.segments[4 * k + 1];
            assert!((right.start[0] - w / 2.0).abs() < 1e-9, "turn {k}");
            assert!((right.end[0] - w / 2.0).abs() < 1e-9);
        }
        s.validate().unwrap();
    }

    #[test]
    fn two_layer_split() {
        let spec = CoilSpec::new(630.0, 10, 10.0).with_layers(2);
        assert_eq!(spec.layer_z_offsets_um, vec![0.0, -3.0]);
        let s = build_square_spiral(&spec).unwrap();
        assert_eq!(s.chain_starts.len(), 2);
        let second = s.chain_starts[1];
        assert!(second >= 20 && s.len() - second >= 20);
        assert!(s.segments[..second].iter().all(|g| g.start[2] == 0.0));
        assert!(s.segments[second..].iter().all(|g| g.start[2] == -3.0));
    }

    #[test]
    fn collapsed_inner_turn_is_rejected() {
        let spec = CoilSpec::new(100.0, 5, 10.0);
        match build_square_spiral(&spec) {
            Err(Error::TurnWidth { turn, .. }) => assert_eq!(turn, 4),
            other => panic!("expected turn width error, got {other:?}"),
        }
    }

    #[test]
    fn layer_offset_count_checked() {
        let mut spec = CoilSpec::new(600.0, 10, 10.0).with_layers(2);
        spec.layer_z_offsets_um.pop();
        assert!(build_square_spiral(&spec).is_err());
        let spec = CoilSpec::new(600.0, 10, 10.0).with_rotation(95.0);
        assert!(build_square_spiral(&spec).is_err());
    }

    #[test]
    fn square_loop_center_field() {
        let a = 600.0;
        let f = biot_savart_bz(&square_loop(a), &[[0.0; 3]], FieldOptions::default()).unwrap();
        let expected = 2.0 * 2f64.sqrt() * MU0 / (std::f64::consts::PI * a * 1e-6);
        assert!((f.bz_per_amp[0] - expected).abs() / expected < 1e-3);
        // 188.6 nT at 100 µA
        assert!((f.bz_per_amp[0] * 100e-6 - 188.56e-9).abs() < 0.05e-9);
    }

    #[test]
    fn far_field_matches_dipole() {
        let a = 600.0;
        let s = square_loop(a);
        for r in [10.0 * a, 20.0 * a] {
            let f = biot_savart_bz(&s, &[[0.0, 0.0, r]], FieldOptions::default()).unwrap();
            let dip = MU0 * (a * 1e-6).powi(2) / (2.0 * std::f64::consts::PI * (r * 1e-6).powi(3));
            assert!((f.bz_per_amp[0] - dip).abs() / dip < 0.02, "r = {r}");
        }
    }

    #[test]
    fn reversed_traversal_with_flipped_sign_is_identical() {
        let s = build_square_spiral(&CoilSpec::new(600.0, 10, 10.0)).unwrap();
        let pts = [[13.0, -40.0, 25.0], [400.0, 10.0, -30.0]];
        let f0 = biot_savart_bz(&s, &pts, FieldOptions::default()).unwrap();
        let rev = s.reversed();
        rev.validate().unwrap();
        let f1 = biot_savart_bz(&rev.with_flipped_signs(), &pts, FieldOptions::default()).unwrap();
        let f2 = biot_savart_bz(&rev, &pts, FieldOptions::default()).unwrap();
        for i in 0..pts.len() {
            assert!((f0.bz_per_amp[i] - f1.bz_per_amp[i]).abs() <= 1e-12 * f0.bz_per_amp[i].abs());
            assert!((f0.bz_per_amp[i] + f2.bz_per_amp[i]).abs() <= 1e-12 * f0.bz_per_amp[i].abs());
        }
    }

    #[test]
    fn exclusion_policies() {
        let s = square_loop(600.0);
        let on_wire = [0.0, -300.0, 0.5];
        let clamp = biot_savart_bz(&s, &[on_wire], FieldOptions::default()).unwrap();
        assert_eq!(clamp.excluded, vec![0]);
        assert!(clamp.bz_per_amp[0].is_finite());
        let at_boundary = biot_savart_bz(&s, &[[0.0, -300.0, 2.0]], FieldOptions::default()).unwrap();
        assert!((clamp.bz_per_amp[0] - at_boundary.bz_per_amp[0]).abs() < 1e-12 * at_boundary.bz_per_amp[0].abs());
        let skip = biot_savart_bz(
            &s,
            &[on_wire, [0.0; 3]],
            FieldOptions { exclusion_radius_um: 2.0, policy: ExclusionPolicy::Skip },
        )
        .unwrap();
        assert_eq!(skip.bz_per_amp[0], 0.0);
        assert_eq!(skip.excluded, vec![0]);
    }

    #[test]
    fn dipole_formula() {
        let b = dipole_field_magnitude(1e-12, 0.03).unwrap();
        assert!((b - 7.407_407e-15).abs() < 1e-20);
        assert_eq!(dipole_field_magnitude(0.0, 0.03).unwrap(), 0.0);
        let near = dipole_field_magnitude(3e-11, 0.01).unwrap();
        let far = dipole_field_magnitude(3e-11, 0.02).unwrap();
        assert!((near / far - 8.0).abs() < 1e-12);
        assert!(dipole_field_magnitude(1.0, 0.0).is_err());
        assert!(dipole_field_magnitude(1.0, -1.0).is_err());
    }

    #[test]
    fn csv_header() {
        let f = FieldMap::zeros(vec![[1.0, 2.0, 3.0]]);
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "x_um,y_um,z_um,bz_per_amp_T\n1,2,3,0\n");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn subdivision_is_a_no_op(k in 2usize..6, x in -800.0..800.0f64, y in -800.0..800.0f64, z in 5.0..900.0f64) {
            let s = build_square_spiral(&CoilSpec::new(600.0, 4, 10.0)).unwrap();
            let p = [[x, y, z]];
            let a = biot_savart_bz(&s, &p, FieldOptions::default()).unwrap().bz_per_amp[0];
            let b = biot_savart_bz(&s.subdivided(k), &p, FieldOptions::default()).unwrap().bz_per_amp[0];
            prop_assert!((a - b).abs() <= 1e-10 * a.abs().max(1e-30));
        }

        #[test]
        fn rotation_round_trip(theta in -90.0..90.0f64) {
            let s = build_square_spiral(&CoilSpec::new(600.0, 10, 10.0).with_layers(2)).unwrap();
            let c = [5.0, -7.0, 1.0];
            let back = s.rotated_about_x(theta, c).rotated_about_x(-theta, c);
            for (a, b) in s.segments.iter().zip(&back.segments) {
                prop_assert!(norm(sub(a.start, b.start)) < CHAIN_TOLERANCE_UM);
                prop_assert!(norm(sub(a.end, b.end)) < CHAIN_TOLERANCE_UM);
            }
        }

        #[test]
        fn field_is_linear_in_current(i in -1e-3..1e-3f64, x in -500.0..500.0f64) {
            let s = square_loop(600.0);
            let f = biot_savart_bz(&s, &[[x, 17.0, 40.0]], FieldOptions::default()).unwrap();
            let at = f.at_current(i)[0];
            prop_assert_eq!(at, i * f.bz_per_amp[0]);
            let two = f.at_current(2.0 * i)[0];
            prop_assert!((two - 2.0 * at).abs() <= 1e-15 * at.abs().max(1e-30));
        }
    }
}
