//! Digital control lines crossing the controller/driver boundary, timed edge
//! streams over them, and the pulse primitives the Trojan engine is built
//! from.
//!
//! Time is an integer tick count. One tick is 10 ns, the granularity of a
//! 100 MHz sampling clock. Every line idles low at tick 0, so a well-formed
//! timeline starts each line with a rising edge and alternates from there.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::axis::Axis;

pub type Tick = u64;

pub const TICK_NS: u64 = 10;
pub const TICKS_PER_US: Tick = 1_000 / TICK_NS;
pub const TICKS_PER_MS: Tick = 1_000 * TICKS_PER_US;
pub const TICKS_PER_SECOND: Tick = 1_000 * TICKS_PER_MS;

/// Measured driver envelope: at most 20 kHz, at least 1 µs high.
pub const MIN_STEP_PERIOD: Tick = TICKS_PER_SECOND / 20_000;
pub const STEP_PULSE_WIDTH: Tick = TICKS_PER_US;

pub fn seconds_to_ticks(s: f64) -> Tick {
    (s * TICKS_PER_SECOND as f64).round().max(0.0) as Tick
}

pub fn ticks_to_seconds(t: Tick) -> f64 {
    t as f64 / TICKS_PER_SECOND as f64
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SignalError {
    #[error("pulse high width {high_width} must be positive and shorter than period {period}")]
    BadPulseShape { period: Tick, high_width: Tick },
    #[error("microstep factor {0} is not one of 1, 2, 4, 8, 16")]
    BadMicrostep(u32),
    #[error("events out of order at index {index} (t={t})")]
    Unsorted { index: usize, t: Tick },
    #[error("line {line} repeats level {high} at t={t}")]
    NotAlternating { line: Line, t: Tick, high: bool },
    #[error("injected pulse at t={t} overlaps an existing pulse on {line}")]
    Overlap { line: Line, t: Tick },
    #[error("injected pulses do not fit in window [{t0}, {t1})")]
    OutsideWindow { t0: Tick, t1: Tick },
    #[error("bad timeline dump line {line}: {reason}")]
    Dump { line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum Line {
    XStep,
    XDir,
    XEn,
    YStep,
    YDir,
    YEn,
    ZStep,
    ZDir,
    ZEn,
    EStep,
    EDir,
    EEn,
    /// D10 on the RAMPS shield.
    HeatHotend,
    /// D8
    HeatBed,
    /// D9
    Fan,
    EndstopX,
    EndstopY,
    EndstopZ,
}

impl Line {
    pub const COUNT: usize = 18;

    pub const ALL: [Line; Line::COUNT] = [
        Line::XStep,
        Line::XDir,
        Line::XEn,
        Line::YStep,
        Line::YDir,
        Line::YEn,
        Line::ZStep,
        Line::ZDir,
        Line::ZEn,
        Line::EStep,
        Line::EDir,
        Line::EEn,
        Line::HeatHotend,
        Line::HeatBed,
        Line::Fan,
        Line::EndstopX,
        Line::EndstopY,
        Line::EndstopZ,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Line::XStep => "X_STEP",
            Line::XDir => "X_DIR",
            Line::XEn => "X_EN",
            Line::YStep => "Y_STEP",
            Line::YDir => "Y_DIR",
            Line::YEn => "Y_EN",
            Line::ZStep => "Z_STEP",
            Line::ZDir => "Z_DIR",
            Line::ZEn => "Z_EN",
            Line::EStep => "E_STEP",
            Line::EDir => "E_DIR",
            Line::EEn => "E_EN",
            Line::HeatHotend => "HEAT_HOTEND",
            Line::HeatBed => "HEAT_BED",
            Line::Fan => "FAN",
            Line::EndstopX => "ENDSTOP_X",
            Line::EndstopY => "ENDSTOP_Y",
            Line::EndstopZ => "ENDSTOP_Z",
        }
    }

    pub fn step(axis: Axis) -> Line {
        match axis {
            Axis::X => Line::XStep,
            Axis::Y => Line::YStep,
            Axis::Z => Line::ZStep,
            Axis::E => Line::EStep,
        }
    }

    pub fn dir(axis: Axis) -> Line {
        match axis {
            Axis::X => Line::XDir,
            Axis::Y => Line::YDir,
            Axis::Z => Line::ZDir,
            Axis::E => Line::EDir,
        }
    }

    pub fn enable(axis: Axis) -> Line {
        match axis {
            Axis::X => Line::XEn,
            Axis::Y => Line::YEn,
            Axis::Z => Line::ZEn,
            Axis::E => Line::EEn,
        }
    }

    /// `None` for the extruder, which has no limit switch.
    pub fn endstop(axis: Axis) -> Option<Line> {
        match axis {
            Axis::X => Some(Line::EndstopX),
            Axis::Y => Some(Line::EndstopY),
            Axis::Z => Some(Line::EndstopZ),
            Axis::E => None,
        }
    }

    pub fn is_step(self) -> bool {
        self.step_axis().is_some()
    }

    pub fn step_axis(self) -> Option<Axis> {
        match self {
            Line::XStep => Some(Axis::X),
            Line::YStep => Some(Axis::Y),
            Line::ZStep => Some(Axis::Z),
            Line::EStep => Some(Axis::E),
            _ => None,
        }
    }

    pub fn endstop_axis(self) -> Option<Axis> {
        match self {
            Line::EndstopX => Some(Axis::X),
            Line::EndstopY => Some(Axis::Y),
            Line::EndstopZ => Some(Axis::Z),
            _ => None,
        }
    }
}

impl fmt::Display for Line {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl Serialize for Line {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Line {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Line, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl FromStr for Line {
    type Err = String;

    fn from_str(s: &str) -> Result<Line, String> {
        let s = s.trim();
        // RAMPS pin aliases.
        match s.to_ascii_uppercase().as_str() {
            "D10" => return Ok(Line::HeatHotend),
            "D8" => return Ok(Line::HeatBed),
            "D9" => return Ok(Line::Fan),
            _ => {}
        }
        Line::ALL
            .into_iter()
            .find(|l| l.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown line {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Event {
    pub t: Tick,
    pub line: Line,
    pub high: bool,
}

impl Event {
    pub fn new(t: Tick, line: Line, high: bool) -> Event {
        Event { t, line, high }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarity {
    Rising,
    Falling,
}

/// Time-ordered edges. Ties keep insertion order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignalTimeline {
    pub events: Vec<Event>,
    pub tick_ns: u64,
}

impl Default for SignalTimeline {
    fn default() -> Self {
        SignalTimeline::new()
    }
}

impl SignalTimeline {
    pub fn new() -> SignalTimeline {
        SignalTimeline {
            events: Vec::new(),
            tick_ns: TICK_NS,
        }
    }

    /// Wraps `events`, checking order and per-line alternation.
    pub fn from_events(events: Vec<Event>) -> Result<SignalTimeline, SignalError> {
        let tl = SignalTimeline {
            events,
            tick_ns: TICK_NS,
        };
        tl.validate()?;
        Ok(tl)
    }

    /// Sorts by time (stably) without further checks.
    pub fn from_unsorted(mut events: Vec<Event>) -> SignalTimeline {
        events.sort_by_key(|e| e.t);
        SignalTimeline {
            events,
            tick_ns: TICK_NS,
        }
    }

    pub fn validate(&self) -> Result<(), SignalError> {
        let mut level = [false; Line::COUNT];
        let mut prev = 0;
        for (index, e) in self.events.iter().enumerate() {
            if e.t < prev {
                return Err(SignalError::Unsorted { index, t: e.t });
            }
            prev = e.t;
            let l = &mut level[e.line.index()];
            if *l == e.high {
                return Err(SignalError::NotAlternating {
                    line: e.line,
                    t: e.t,
                    high: e.high,
                });
            }
            *l = e.high;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Event> {
        self.events.iter()
    }

    pub fn end_time(&self) -> Tick {
        self.events.last().map_or(0, |e| e.t)
    }

    /// Level of `line` just after every event at or before `t` has applied.
    pub fn level_at(&self, line: Line, t: Tick) -> bool {
        let end = self.events.partition_point(|e| e.t <= t);
        self.events[..end]
            .iter()
            .rev()
            .find(|e| e.line == line)
            .is_some_and(|e| e.high)
    }

    pub fn levels_at_end(&self) -> [bool; Line::COUNT] {
        let mut level = [false; Line::COUNT];
        for e in &self.events {
            level[e.line.index()] = e.high;
        }
        level
    }

    /// Complete high pulses on `line` as `(rise, fall)`; a trailing pulse with
    /// no falling edge reports `fall = None`.
    pub fn pulses(&self, line: Line) -> Vec<(Tick, Option<Tick>)> {
        let mut out: Vec<(Tick, Option<Tick>)> = Vec::new();
        for e in self.events.iter().filter(|e| e.line == line) {
            if e.high {
                out.push((e.t, None));
            } else if let Some(last) = out.last_mut() {
                last.1 = Some(e.t);
            }
        }
        out
    }

    /// Stable merge: at equal ticks, `self`'s events come first.
    pub fn merge(&self, other: &SignalTimeline) -> SignalTimeline {
        let mut events = Vec::with_capacity(self.len() + other.len());
        let (mut a, mut b) = (
            self.events.iter().peekable(),
            other.events.iter().peekable(),
        );
        loop {
            match (a.peek(), b.peek()) {
                (Some(x), Some(y)) => {
                    if y.t < x.t {
                        events.push(*b.next().unwrap());
                    } else {
                        events.push(*a.next().unwrap());
                    }
                }
                (Some(_), None) => events.push(*a.next().unwrap()),
                (None, Some(_)) => events.push(*b.next().unwrap()),
                (None, None) => break,
            }
        }
        SignalTimeline {
            events,
            tick_ns: self.tick_ns,
        }
    }

    /// Text dump, one `tick line level` triple per line.
    pub fn dump(&self) -> String {
        let mut s = String::with_capacity(self.events.len() * 16);
        for e in &self.events {
            s.push_str(&format!("{} {} {}\n", e.t, e.line, u8::from(e.high)));
        }
        s
    }

    pub fn parse_dump(text: &str) -> Result<SignalTimeline, SignalError> {
        let mut events = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let raw = raw.trim();
            if raw.is_empty() || raw.starts_with('#') {
                continue;
            }
            let bad = |reason: &str| SignalError::Dump {
                line: i + 1,
                reason: reason.to_string(),
            };
            let mut it = raw.split_whitespace();
            let t = it
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| bad("tick"))?;
            let line = it
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| bad("line"))?;
            let high = match it.next() {
                Some("0") => false,
                Some("1") => true,
                _ => return Err(bad("level")),
            };
            events.push(Event { t, line, high });
        }
        SignalTimeline::from_events(events)
    }
}

/// A pulse train: `count` pulses, rising every `period` ticks, each high for
/// `high_width` ticks. With microstepping the train is `count *
/// microstep_factor` pulses at `period / microstep_factor`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PulseSpec {
    pub count: u64,
    pub period: Tick,
    pub high_width: Tick,
    pub microstep_factor: u32,
}

impl PulseSpec {
    pub fn new(count: u64, period: Tick, high_width: Tick) -> PulseSpec {
        PulseSpec {
            count,
            period,
            high_width,
            microstep_factor: 1,
        }
    }

    pub fn validate(&self) -> Result<(), SignalError> {
        if !matches!(self.microstep_factor, 1 | 2 | 4 | 8 | 16) {
            return Err(SignalError::BadMicrostep(self.microstep_factor));
        }
        let period = self.effective_period();
        if self.high_width == 0 || self.high_width >= period {
            return Err(SignalError::BadPulseShape {
                period,
                high_width: self.high_width,
            });
        }
        Ok(())
    }

    pub fn pulse_count(&self) -> u64 {
        self.count * u64::from(self.microstep_factor)
    }

    pub fn effective_period(&self) -> Tick {
        self.period / Tick::from(self.microstep_factor.max(1))
    }
}

pub fn generate_pulses(
    spec: PulseSpec,
    start: Tick,
    line: Line,
) -> Result<SignalTimeline, SignalError> {
    spec.validate()?;
    let period = spec.effective_period();
    let n = spec.pulse_count();
    let mut events = Vec::with_capacity(2 * n as usize);
    for k in 0..n {
        let rise = start + k * period;
        events.push(Event::new(rise, line, true));
        events.push(Event::new(rise + spec.high_width, line, false));
    }
    Ok(SignalTimeline {
        events,
        tick_ns: TICK_NS,
    })
}

pub fn detect_edges(timeline: &SignalTimeline, line: Line, polarity: Polarity) -> Vec<Tick> {
    let want = polarity == Polarity::Rising;
    timeline
        .events
        .iter()
        .filter(|e| e.line == line && e.high == want)
        .map(|e| e.t)
        .collect()
}

/// Drops every second pulse on `line`: the 1st, 3rd, 5th, ... pass.
pub fn mask_every_other(timeline: &SignalTimeline, line: Line) -> SignalTimeline {
    mask_every_other_from(timeline, line, 0)
}

/// As [`mask_every_other`], counting only pulses that rise at or after `from`.
pub fn mask_every_other_from(timeline: &SignalTimeline, line: Line, from: Tick) -> SignalTimeline {
    let mut index = 0u64;
    let mut dropping = false;
    let events = timeline
        .events
        .iter()
        .filter(|e| {
            if e.line != line {
                return true;
            }
            if e.high {
                if e.t < from {
                    dropping = false;
                    return true;
                }
                index += 1;
                dropping = index.is_multiple_of(2);
            }
            !dropping
        })
        .copied()
        .collect();
    SignalTimeline {
        events,
        tick_ns: timeline.tick_ns,
    }
}

/// Removes whole pulses on `line` whose rising edge satisfies `drop`.
pub fn remove_pulses(
    timeline: &SignalTimeline,
    line: Line,
    mut drop: impl FnMut(Tick) -> bool,
) -> SignalTimeline {
    let mut dropping = false;
    let events = timeline
        .events
        .iter()
        .filter(|e| {
            if e.line != line {
                return true;
            }
            if e.high {
                dropping = drop(e.t);
            }
            !dropping
        })
        .copied()
        .collect();
    SignalTimeline {
        events,
        tick_ns: timeline.tick_ns,
    }
}

/// Adds `extra` starting at `between.0`. Every injected pulse must end before
/// `between.1` and must not touch an existing high interval on `line`.
pub fn inject_pulses(
    timeline: &SignalTimeline,
    line: Line,
    extra: PulseSpec,
    between: (Tick, Tick),
) -> Result<SignalTimeline, SignalError> {
    if extra.count == 0 {
        return Ok(timeline.clone());
    }
    let (t0, t1) = between;
    let added = generate_pulses(extra, t0, line)?;
    if added.end_time() >= t1 {
        return Err(SignalError::OutsideWindow { t0, t1 });
    }
    let existing = timeline.pulses(line);
    for pair in added.events.chunks(2) {
        let (rise, fall) = (pair[0].t, pair[1].t);
        // First existing pulse that ends at or after our rise.
        let i = existing.partition_point(|&(_, f)| f.is_some_and(|f| f < rise));
        if let Some(&(r, f)) = existing.get(i) {
            if r <= fall && f.is_none_or(|f| f >= rise) {
                return Err(SignalError::Overlap { line, t: rise });
            }
        }
    }
    Ok(timeline.merge(&added))
}
