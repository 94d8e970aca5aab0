//! GRE-EPI and SE-EPI timing, bit-synchronized coil currents and multi-TR
//! execution. All times in ms, currents in A.

use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::spins::SpinEnsemble;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SequenceKind {
    GreEpi,
    SeEpi,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SequenceParams {
    pub kind: SequenceKind,
    pub te_ms: f64,
    pub tr_ms: f64,
    pub flip_deg: f64,
    /// Readout window centred on TE.
    pub acq_ms: f64,
}

impl SequenceParams {
    pub fn spin_echo(te_ms: f64, tr_ms: f64, acq_ms: f64) -> Self {
        SequenceParams { kind: SequenceKind::SeEpi, te_ms, tr_ms, flip_deg: 90.0, acq_ms }
    }

    pub fn gradient_echo(te_ms: f64, tr_ms: f64, flip_deg: f64, acq_ms: f64) -> Self {
        SequenceParams { kind: SequenceKind::GreEpi, te_ms, tr_ms, flip_deg, acq_ms }
    }

    pub fn with_te(self, te_ms: f64) -> Self {
        SequenceParams { te_ms, ..self }
    }

    pub fn with_tr(self, tr_ms: f64) -> Self {
        SequenceParams { tr_ms, ..self }
    }

    /// End of the acquisition window.
    pub fn acq_end_ms(&self) -> f64 {
        self.te_ms + self.acq_ms / 2.0
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.te_ms > 0.0) {
            return Err(Error::Config(format!("TE = {} ms must be > 0", self.te_ms)));
        }
        if !(self.te_ms < self.tr_ms) {
            return Err(Error::Config(format!("TE = {} ms must be < TR = {} ms", self.te_ms, self.tr_ms)));
        }
        if !(self.acq_ms >= 0.0) {
            return Err(Error::Config(format!("acquisition duration {} ms must be >= 0", self.acq_ms)));
        }
        if self.acq_end_ms() > self.tr_ms {
            return Err(Error::Config(format!("TE + acq/2 = {} ms exceeds TR = {} ms", self.acq_end_ms(), self.tr_ms)));
        }
        if !(self.flip_deg > 0.0 && self.flip_deg <= 180.0) {
            return Err(Error::Config(format!("flip angle {} deg outside (0, 180]", self.flip_deg)));
        }
        if self.kind == SequenceKind::SeEpi && self.flip_deg != 90.0 {
            return Err(Error::Config(format!("SE-EPI excitation must be 90 deg, got {}", self.flip_deg)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    Rf { flip_deg: f64, phase_deg: f64 },
    Refocus,
    CurrentSet { current_a: f64 },
    Readout,
}

impl Event {
    /// Execution order for events sharing an instant.
    fn precedence(&self) -> u8 {
        match self {
            Event::Rf { .. } => 0,
            Event::Refocus => 1,
            Event::CurrentSet { .. } => 2,
            Event::Readout => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimedEvent {
    pub time_ms: f64,
    pub event: Event,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventTimeline {
    pub tr_ms: f64,
    pub events: Vec<TimedEvent>,
}

/// RF / refocus / readout events of one TR.
pub fn build_timeline(params: &SequenceParams) -> Result<EventTimeline> {
    params.validate()?;
    let mut events = vec![TimedEvent { time_ms: 0.0, event: Event::Rf { flip_deg: params.flip_deg, phase_deg: 0.0 } }];
    if params.kind == SequenceKind::SeEpi {
        events.push(TimedEvent { time_ms: params.te_ms / 2.0, event: Event::Refocus });
    }
    events.push(TimedEvent { time_ms: params.te_ms, event: Event::Readout });
    Ok(EventTimeline { tr_ms: params.tr_ms, events })
}

impl EventTimeline {
    /// Merges the current switching instants of `waveform` into the
    /// timeline. Events sharing an instant run RF, refocus, current switch,
    /// readout in that order.
    pub fn with_waveform(&self, waveform: &CurrentWaveform) -> EventTimeline {
        let mut events = self.events.clone();
        let segs = &waveform.segments;
        for (i, s) in segs.iter().enumerate() {
            events.push(TimedEvent { time_ms: s.t_start_ms, event: Event::CurrentSet { current_a: s.current_a } });
            let contiguous = segs.get(i + 1).is_some_and(|n| n.t_start_ms == s.t_end_ms);
            if !contiguous {
                events.push(TimedEvent { time_ms: s.t_end_ms, event: Event::CurrentSet { current_a: 0.0 } });
            }
        }
        events.sort_by(|a, b| a.time_ms.total_cmp(&b.time_ms).then(a.event.precedence().cmp(&b.event.precedence())));
        EventTimeline { tr_ms: self.tr_ms, events }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurrentSegment {
    pub t_start_ms: f64,
    pub t_end_ms: f64,
    pub current_a: f64,
}

/// Piecewise-constant coil current over one TR; zero outside the segments.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CurrentWaveform {
    pub segments: Vec<CurrentSegment>,
}

impl CurrentWaveform {
    pub fn off() -> Self {
        CurrentWaveform::default()
    }

    /// One segment of constant current.
    pub fn constant(t_start_ms: f64, t_end_ms: f64, current_a: f64) -> Self {
        CurrentWaveform { segments: vec![CurrentSegment { t_start_ms, t_end_ms, current_a }] }
    }

    pub fn is_off(&self) -> bool {
        self.segments.iter().all(|s| s.current_a == 0.0)
    }

    pub fn validate(&self, tr_ms: f64) -> Result<()> {
        let mut prev_end = 0.0;
        let mut magnitude: Option<f64> = None;
        for s in &self.segments {
            if !(s.t_start_ms >= prev_end && s.t_end_ms > s.t_start_ms && s.t_end_ms <= tr_ms) {
                return Err(Error::Config(format!(
                    "current segment [{}, {}] ms overlaps, is empty or leaves [0, {tr_ms}]",
                    s.t_start_ms, s.t_end_ms
                )));
            }
            if s.current_a != 0.0 {
                match magnitude {
                    Some(m) if m != s.current_a.abs() => {
                        return Err(Error::Config("binary waveform needs one current magnitude".into()))
                    }
                    _ => magnitude = Some(s.current_a.abs()),
                }
            }
            prev_end = s.t_end_ms;
        }
        Ok(())
    }
}

/// Coil current for one TR carrying `bit`.
///
/// A 0 leaves the coil off. A 1 switches `current_a` on right after
/// excitation and off at the end of the acquisition window; under SE-EPI the
/// polarity is reversed at the refocusing pulse so the induced dephasing keeps
/// accumulating through the echo.
pub fn current_waveform_for_bit(bit: bool, params: &SequenceParams, current_a: f64) -> CurrentWaveform {
    if !bit {
        return CurrentWaveform::off();
    }
    let end = params.acq_end_ms();
    match params.kind {
        SequenceKind::GreEpi => CurrentWaveform::constant(0.0, end, current_a),
        SequenceKind::SeEpi => {
            let half = params.te_ms / 2.0;
            CurrentWaveform {
                segments: vec![
                    CurrentSegment { t_start_ms: 0.0, t_end_ms: half, current_a },
                    CurrentSegment { t_start_ms: half, t_end_ms: end, current_a: -current_a },
                ],
            }
        }
    }
}

/// Runs one TR per waveform, starting from the ensemble's current state,
/// and returns the baseband readout of each TR. Transverse magnetization is
/// spoiled at the end of every TR; longitudinal magnetization carries over.
pub fn run_schedule(
    ensemble: &mut SpinEnsemble,
    params: &SequenceParams,
    waveforms: &[CurrentWaveform],
    m0: f64,
) -> Result<Vec<Complex64>> {
    let base = build_timeline(params)?;
    for w in waveforms {
        w.validate(params.tr_ms)?;
    }
    let mut signals = Vec::with_capacity(waveforms.len());
    for w in waveforms {
        let timeline = base.with_waveform(w);
        let mut t = 0.0;
        let mut current = 0.0;
        let mut readout = None;
        for ev in &timeline.events {
            ensemble.evolve(ev.time_ms - t, current);
            t = ev.time_ms;
            match ev.event {
                Event::Rf { flip_deg, phase_deg } => ensemble.apply_rf(flip_deg, phase_deg),
                Event::Refocus => ensemble.refocus(),
                Event::CurrentSet { current_a } => current = current_a,
                Event::Readout => readout = Some(ensemble.readout(m0)),
            }
        }
        ensemble.evolve(timeline.tr_ms - t, current);
        ensemble.spoil();
        signals.push(readout.expect("timeline always contains a readout"));
    }
    Ok(signals)
}

/// Repeats one waveform for `n_tr` TRs from full equilibrium.
pub fn run_sequence(
    ensemble: &mut SpinEnsemble,
    params: &SequenceParams,
    waveform: &CurrentWaveform,
    n_tr: usize,
    m0: f64,
) -> Result<Vec<Complex64>> {
    ensemble.reset();
    run_schedule(ensemble, params, &vec![waveform.clone(); n_tr], m0)
}

/// CSV with header `tr_index,re,im,mag`.
pub fn write_signals_csv<W: Write>(mut w: W, signals: &[Complex64]) -> std::io::Result<()> {
    writeln!(w, "tr_index,re,im,mag")?;
    for (i, s) in signals.iter().enumerate() {
        writeln!(w, "{},{},{},{}", i, s.re, s.im, s.norm())?;
    }
    Ok(())
}

/// Spoiled steady-state longitudinal factor,
/// (1 − E1)/(1 − cos α·E1) with E1 = e^(−TR/T1).
pub fn steady_state_scale(t1_ms: f64, tr_ms: f64, flip_deg: f64) -> f64 {
    let e1 = (-tr_ms / t1_ms).exp();
    (1.0 - e1) / (1.0 - flip_deg.to_radians().cos() * e1)
}

/// Flip angle maximizing the spoiled GRE steady-state signal, in degrees.
pub fn ernst_angle(t1_ms: f64, tr_ms: f64) -> f64 {
    (-tr_ms / t1_ms).exp().acos().to_degrees()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn se_timeline() {
        let tl = build_timeline(&SequenceParams::spin_echo(65.0, 800.0, 40.0)).unwrap();
        let times: Vec<f64> = tl.events.iter().map(|e| e.time_ms).collect();
        assert_eq!(times, vec![0.0, 32.5, 65.0]);
        assert_eq!(tl.events[0].event, Event::Rf { flip_deg: 90.0, phase_deg: 0.0 });
        assert_eq!(tl.events[1].event, Event::Refocus);
        assert_eq!(tl.events[2].event, Event::Readout);
    }

    #[test]
    fn gre_timeline() {
        let tl = build_timeline(&SequenceParams::gradient_echo(40.0, 800.0, 30.0, 40.0)).unwrap();
        assert_eq!(tl.events.len(), 2);
        assert_eq!(tl.events[1].time_ms, 40.0);
        assert_eq!(tl.events[0].event, Event::Rf { flip_deg: 30.0, phase_deg: 0.0 });
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(build_timeline(&SequenceParams::spin_echo(800.0, 800.0, 0.0)).is_err());
        assert!(build_timeline(&SequenceParams::spin_echo(65.0, 80.0, 40.0)).is_err());
        let mut p = SequenceParams::spin_echo(65.0, 800.0, 40.0);
        p.flip_deg = 60.0;
        assert!(build_timeline(&p).is_err());
    }

    #[test]
    fn bit_waveforms() {
        let se = SequenceParams::spin_echo(65.0, 800.0, 40.0);
        assert!(current_waveform_for_bit(false, &se, 1e-4).segments.is_empty());
        let w = current_waveform_for_bit(true, &se, 1e-4);
        assert_eq!(
            w.segments,
            vec![
                CurrentSegment { t_start_ms: 0.0, t_end_ms: 32.5, current_a: 1e-4 },
                CurrentSegment { t_start_ms: 32.5, t_end_ms: 85.0, current_a: -1e-4 },
            ]
        );
        let gre = SequenceParams::gradient_echo(40.0, 800.0, 30.0, 40.0);
        assert_eq!(current_waveform_for_bit(true, &gre, 1e-4), CurrentWaveform::constant(0.0, 60.0, 1e-4));
        w.validate(800.0).unwrap();
    }

    #[test]
    fn merged_timeline_orders_ties() {
        let se = SequenceParams::spin_echo(65.0, 800.0, 40.0);
        let tl = build_timeline(&se).unwrap().with_waveform(&current_waveform_for_bit(true, &se, 1e-4));
        let kinds: Vec<u8> = tl.events.iter().map(|e| e.event.precedence()).collect();
        assert_eq!(kinds, vec![0, 2, 1, 2, 3, 2]);
        assert_eq!(tl.events.last().unwrap().event, Event::CurrentSet { current_a: 0.0 });
    }

    #[test]
    fn waveform_validation() {
        let bad = CurrentWaveform {
            segments: vec![
                CurrentSegment { t_start_ms: 0.0, t_end_ms: 10.0, current_a: 1.0 },
                CurrentSegment { t_start_ms: 5.0, t_end_ms: 20.0, current_a: 1.0 },
            ],
        };
        assert!(bad.validate(100.0).is_err());
        assert!(CurrentWaveform::constant(0.0, 120.0, 1.0).validate(100.0).is_err());
        let mixed = CurrentWaveform {
            segments: vec![
                CurrentSegment { t_start_ms: 0.0, t_end_ms: 10.0, current_a: 1.0 },
                CurrentSegment { t_start_ms: 10.0, t_end_ms: 20.0, current_a: -2.0 },
            ],
        };
        assert!(mixed.validate(100.0).is_err());
    }

    #[test]
    fn steady_state_and_ernst() {
        let f = steady_state_scale(832.0, 1250.0, 90.0);
        assert!((f - 0.777_405_566_268_93).abs() < 1e-12);
        assert!((steady_state_scale(832.0, 1e9, 90.0) - 1.0).abs() < 1e-12);
        assert!((steady_state_scale(832.0, 1250.0, 1e-6) - 1.0).abs() < 1e-9);
        assert!((ernst_angle(832.0, 832.0) - 68.415_103_761_762_94).abs() < 1e-10);
        assert!((ernst_angle(832.0, 1e9) - 90.0).abs() < 1e-9);
        assert!(ernst_angle(832.0, 1e-9) < 1e-2);
    }
}
