//! The machine-in-the-middle Trojan engine: a homing detector arms it, then
//! each enabled Trojan rewrites the control lines on their way to the
//! drivers. With nothing enabled the engine is a wire.

mod config;
mod fsm;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

pub use config::{
    HeaterTargets, MaskMode, ShiftAt, T1Params, T2Params, T3Mode, T3Params, T4Params, T5Params,
    T8Params, T9Params, TrojanConfig, TrojanId,
};
pub use fsm::{fsm_step, HomingFsm, HomingState};

use crate::axis::Axis;
use crate::firmware::{HeaterTap, PrinterProfile};
use crate::signals::{
    mask_every_other_from, remove_pulses, seconds_to_ticks, Event, Line, SignalTimeline, Tick,
    MIN_STEP_PERIOD, STEP_PULSE_WIDTH, TICKS_PER_MS,
};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TrojanError {
    #[error("Trojan config: {0}")]
    Config(String),
}

/// Edges closer than this belong to the same burst of motor activity.
pub const BURST_GAP: Tick = 5 * TICKS_PER_MS;

/// One thing a Trojan did to the timeline.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Injection {
    pub trojan: TrojanId,
    pub line: Line,
    pub start: Tick,
    pub end: Tick,
    /// Pulses asked for (or, for removals and motor cut-outs, at stake).
    pub requested: u64,
    /// Pulses actually added or removed.
    pub placed: u64,
    /// Net effect on the axis position, in steps.
    pub signed: i64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Applied {
    pub timeline: SignalTimeline,
    pub log: Vec<Injection>,
    pub homed_at: Option<Tick>,
}

fn rng_for(seed: u64, id: TrojanId) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ 0x9E37_79B9_7F4A_7C15u64.wrapping_mul(u64::from(id.number())))
}

fn rises(tl: &SignalTimeline, line: Line) -> Vec<Tick> {
    tl.iter()
        .filter(|e| e.line == line && e.high)
        .map(|e| e.t)
        .collect()
}

/// DIR level changes on `line`, in order.
fn dir_changes(tl: &SignalTimeline, line: Line) -> Vec<(Tick, bool)> {
    tl.iter()
        .filter(|e| e.line == line)
        .map(|e| (e.t, e.high))
        .collect()
}

fn dir_at(changes: &[(Tick, bool)], t: Tick) -> bool {
    let i = changes.partition_point(|c| c.0 <= t);
    i > 0 && changes[i - 1].1
}

/// Contiguous runs of rising edges after `after`, split at gaps of
/// [`BURST_GAP`] or more.
pub fn bursts(rising: &[Tick], after: Tick) -> Vec<(Tick, Tick)> {
    let mut out: Vec<(Tick, Tick)> = Vec::new();
    for &t in rising.iter().filter(|&&t| t > after) {
        match out.last_mut() {
            Some(b) if t - b.1 < BURST_GAP => b.1 = t,
            _ => out.push((t, t)),
        }
    }
    out
}

/// Up to `n` rising-edge times at or after `from`, ending by `until`, each at
/// least one envelope period away from every edge in `existing` (sorted)
/// and from each other.
fn place(existing: &[Tick], from: Tick, until: Tick, n: u64) -> Vec<Tick> {
    let mut out = Vec::new();
    let mut c = from;
    let mut i = existing.partition_point(|&r| r + MIN_STEP_PERIOD <= c);
    while (out.len() as u64) < n && c + STEP_PULSE_WIDTH <= until {
        while i < existing.len() && existing[i] + MIN_STEP_PERIOD <= c {
            i += 1;
        }
        match existing.get(i) {
            Some(&r) if r < c + MIN_STEP_PERIOD => c = r + MIN_STEP_PERIOD,
            _ => {
                out.push(c);
                c += MIN_STEP_PERIOD;
            }
        }
    }
    out.retain(|&t| t + STEP_PULSE_WIDTH <= until);
    out
}

fn pulses_at(line: Line, at: &[Tick]) -> SignalTimeline {
    let mut events = Vec::with_capacity(at.len() * 2);
    for &t in at {
        events.push(Event::new(t, line, true));
        events.push(Event::new(t + STEP_PULSE_WIDTH, line, false));
    }
    SignalTimeline::from_unsorted(events)
}

/// Adds `n` gap-filling STEP pulses on `axis` starting at `from`.
fn inject(
    tl: &SignalTimeline,
    trojan: TrojanId,
    axis: Axis,
    from: Tick,
    n: u64,
) -> (SignalTimeline, Injection) {
    let line = Line::step(axis);
    let until = tl.end_time();
    let at = place(&rises(tl, line), from, until, n);
    let dirs = dir_changes(tl, Line::dir(axis));
    let signed = at
        .iter()
        .map(|&t| if dir_at(&dirs, t) { 1 } else { -1 })
        .sum();
    let log = Injection {
        trojan,
        line,
        start: at.first().copied().unwrap_or(from),
        end: at.last().map_or(from, |&t| t + STEP_PULSE_WIDTH),
        requested: n,
        placed: at.len() as u64,
        signed,
    };
    (tl.merge(&pulses_at(line, &at)), log)
}

struct Ctx<'a> {
    config: &'a TrojanConfig,
    profile: &'a PrinterProfile,
    homed: Tick,
    seed: u64,
    log: Vec<Injection>,
}

impl Ctx<'_> {
    fn t1(&mut self, mut tl: SignalTimeline) -> SignalTimeline {
        let p = self.config.t1.as_ref().unwrap();
        let mut rng = rng_for(self.seed, TrojanId::T1);
        let period = seconds_to_ticks(p.period_s).max(1);
        let end = tl.end_time();
        let mut at = self.homed + period;
        while at < end {
            let axis = if rng.random_bool(0.5) {
                Axis::X
            } else {
                Axis::Y
            };
            let n = rng.random_range(1..=u64::from(p.max_shift_steps));
            let (next, log) = inject(&tl, TrojanId::T1, axis, at, n);
            tl = next;
            self.log.push(log);
            at += period;
        }
        tl
    }

    fn t2(&mut self, tl: SignalTimeline) -> SignalTimeline {
        let dirs = dir_changes(&tl, Line::EDir);
        let before: Vec<Tick> = rises(&tl, Line::EStep)
            .into_iter()
            .filter(|&t| t >= self.homed)
            .collect();
        let out = mask_every_other_from(&tl, Line::EStep, self.homed);
        let removed: Vec<Tick> = before.iter().skip(1).step_by(2).copied().collect();
        let signed = -removed
            .iter()
            .map(|&t| if dir_at(&dirs, t) { 1i64 } else { -1 })
            .sum::<i64>();
        self.log.push(Injection {
            trojan: TrojanId::T2,
            line: Line::EStep,
            start: self.homed,
            end: tl.end_time(),
            requested: before.len() as u64,
            placed: removed.len() as u64,
            signed,
        });
        out
    }

    fn t3(&mut self, tl: SignalTimeline) -> SignalTimeline {
        let p = self.config.t3.as_ref().unwrap();
        let k = u64::from(p.extra_e_steps_per_y_burst);
        let y = bursts(&rises(&tl, Line::YStep), self.homed);
        let e = rises(&tl, Line::EStep);
        let dirs = dir_changes(&tl, Line::EDir);
        let sign = |t: Tick| if dir_at(&dirs, t) { 1i64 } else { -1 };
        let (start, end) = (
            y.first().map_or(self.homed, |b| b.0),
            y.last().map_or(self.homed, |b| b.1),
        );
        let (out, placed, signed) = match p.mode {
            T3Mode::Over => {
                let mut at = Vec::new();
                for &(b0, b1) in &y {
                    at.extend(place(&e, b0, b1 + STEP_PULSE_WIDTH, k));
                }
                let signed = at.iter().map(|&t| sign(t)).sum();
                (tl.merge(&pulses_at(Line::EStep, &at)), at.len(), signed)
            }
            T3Mode::Under => {
                let mut drop = Vec::new();
                for &(b0, b1) in &y {
                    let i = e.partition_point(|&t| t < b0);
                    drop.extend(e[i..].iter().take_while(|&&t| t <= b1).take(k as usize));
                }
                let signed = -drop.iter().map(|&t| sign(t)).sum::<i64>();
                let out = remove_pulses(&tl, Line::EStep, |t| drop.binary_search(&t).is_ok());
                (out, drop.len(), signed)
            }
        };
        self.log.push(Injection {
            trojan: TrojanId::T3,
            line: Line::EStep,
            start,
            end,
            requested: k * y.len() as u64,
            placed: placed as u64,
            signed,
        });
        out
    }

    fn t4(&mut self, mut tl: SignalTimeline) -> SignalTimeline {
        let p = self.config.t4.as_ref().unwrap();
        let mut rng = rng_for(self.seed, TrojanId::T4);
        let [lo, hi] = p.layer_increment_rng;
        let layers = bursts(&rises(&tl, Line::ZStep), self.homed);
        let mut next = rng.random_range(lo..=hi) as usize;
        while next <= layers.len() {
            let axis = p.axes[rng.random_range(0..p.axes.len())];
            let at = layers[next - 1].1 + MIN_STEP_PERIOD;
            let (out, log) = inject(&tl, TrojanId::T4, axis, at, u64::from(p.shift_steps));
            tl = out;
            self.log.push(log);
            next += rng.random_range(lo..=hi) as usize;
        }
        tl
    }

    fn t5(&mut self, tl: SignalTimeline) -> SignalTimeline {
        let p = self.config.t5.as_ref().unwrap();
        let at = match p.at {
            ShiftAt::Start => Some(self.homed + MIN_STEP_PERIOD),
            ShiftAt::Layer(n) => bursts(&rises(&tl, Line::ZStep), self.homed)
                .get(n as usize - 1)
                .map(|b| b.1 + MIN_STEP_PERIOD),
        };
        let Some(at) = at else { return tl };
        let (out, log) = inject(&tl, TrojanId::T5, Axis::Z, at, u64::from(p.z_shift_steps));
        self.log.push(log);
        out
    }

    /// Heater lines held low from homing on.
    fn t6(&mut self, tl: SignalTimeline) -> SignalTimeline {
        let mut tl = tl;
        for &line in self.config.targets(TrojanId::T6) {
            let h = self.homed;
            let high = tl.level_at(line, h);
            let mut events: Vec<Event> = tl
                .events
                .into_iter()
                .filter(|e| e.line != line || e.t <= h)
                .collect();
            if high {
                events.push(Event::new(h, line, false));
            }
            tl = SignalTimeline::from_unsorted(events);
            self.log.push(Injection {
                trojan: TrojanId::T6,
                line,
                start: h,
                end: tl.end_time(),
                requested: 0,
                placed: 0,
                signed: 0,
            });
        }
        tl
    }

    /// Heater lines latched high from their first post-homing turn-on.
    fn t7(&mut self, tl: SignalTimeline) -> SignalTimeline {
        let mut tl = tl;
        for &line in self.config.targets(TrojanId::T7) {
            let h = self.homed;
            let latch = if tl.level_at(line, h) {
                Some(h)
            } else {
                tl.iter()
                    .find(|e| e.line == line && e.high && e.t > h)
                    .map(|e| e.t)
            };
            let Some(latch) = latch else { continue };
            // First time the firmware tries to switch it off.
            let activation = tl
                .iter()
                .find(|e| e.line == line && !e.high && e.t > latch)
                .map(|e| e.t);
            let end = tl.end_time();
            let mut seen_latch = false;
            let events: Vec<Event> = tl
                .events
                .into_iter()
                .filter(|e| {
                    if e.line != line {
                        return true;
                    }
                    if e.t < latch || (e.t == latch && !seen_latch && !e.high) {
                        return true;
                    }
                    if e.t == latch && e.high && !seen_latch {
                        seen_latch = true;
                        return true;
                    }
                    false
                })
                .collect();
            tl = SignalTimeline::from_unsorted(events);
            self.log.push(Injection {
                trojan: TrojanId::T7,
                line,
                start: activation.unwrap_or(end),
                end,
                requested: 0,
                placed: 0,
                signed: 0,
            });
        }
        tl
    }

    fn t8(&mut self, tl: SignalTimeline) -> SignalTimeline {
        let p = self.config.t8.as_ref().unwrap();
        let en = Line::enable(p.axis);
        let step = Line::step(p.axis);
        let mut tl = tl;
        for &(on, off) in &p.toggle_schedule {
            let a = self.homed + seconds_to_ticks(on);
            let b = self.homed + seconds_to_ticks(off);
            let before = a.checked_sub(1).is_some_and(|t| tl.level_at(en, t));
            let restore = tl.level_at(en, b - 1);
            let dirs = dir_changes(&tl, Line::dir(p.axis));
            let lost: Vec<Tick> = rises(&tl, step)
                .into_iter()
                .filter(|&t| t >= a && t < b)
                .collect();
            let mut events: Vec<Event> = tl
                .events
                .into_iter()
                .filter(|e| e.line != en || e.t < a || e.t >= b)
                .collect();
            if before {
                events.push(Event::new(a, en, false));
            }
            let mut tail: Vec<Event> = Vec::new();
            if restore {
                tail.push(Event::new(b, en, true));
            }
            // The restoring edge must precede any original edge at `b`.
            let split = events.partition_point(|e| e.t < b);
            let mut merged: Vec<Event> = events.drain(..split).collect();
            merged.sort_by_key(|e| e.t);
            merged.extend(tail);
            merged.extend(events);
            tl = SignalTimeline::from_unsorted(merged);
            self.log.push(Injection {
                trojan: TrojanId::T8,
                line: en,
                start: a,
                end: b,
                requested: lost.len() as u64,
                placed: lost.len() as u64,
                signed: lost
                    .iter()
                    .map(|&t| if dir_at(&dirs, t) { 1i64 } else { -1 })
                    .sum(),
            });
        }
        tl
    }

    /// Re-synthesizes the fan PWM on its own grid with scaled on-time.
    fn t9(&mut self, tl: SignalTimeline) -> SignalTimeline {
        let scale = self.config.t9.as_ref().unwrap().duty_scale;
        let period = self.profile.fan_period();
        let p0 = self.homed.div_ceil(period) * period;
        let last = tl
            .iter()
            .filter(|e| e.line == Line::Fan)
            .map(|e| e.t)
            .max()
            .unwrap_or(0);
        if last <= p0 {
            return tl;
        }
        let original = tl.pulses(Line::Fan);
        let end = tl.end_time();
        let on_in = |s: Tick, e: Tick| -> Tick {
            original
                .iter()
                .map(|&(r, f)| {
                    let f = f.unwrap_or(end);
                    f.min(e).saturating_sub(r.max(s))
                })
                .sum()
        };
        let mut high = tl.level_at(Line::Fan, p0.saturating_sub(1)) && p0 > 0;
        let mut fresh = Vec::new();
        let mut p = p0;
        while p < last {
            let on = (on_in(p, p + period) as f64 * scale).round() as Tick;
            if on == 0 {
                if high {
                    fresh.push(Event::new(p, Line::Fan, false));
                    high = false;
                }
            } else {
                if !high {
                    fresh.push(Event::new(p, Line::Fan, true));
                    high = true;
                }
                if on < period {
                    fresh.push(Event::new(p + on, Line::Fan, false));
                    high = false;
                }
            }
            p += period;
        }
        if high && !tl.level_at(Line::Fan, end) {
            fresh.push(Event::new(p.max(last), Line::Fan, false));
        }
        let fan_time: Tick = on_in(p0, last);
        let kept: Vec<Event> = tl
            .events
            .into_iter()
            .filter(|e| e.line != Line::Fan || e.t < p0)
            .collect();
        let out = SignalTimeline::from_unsorted(kept).merge(&SignalTimeline::from_unsorted(fresh));
        self.log.push(Injection {
            trojan: TrojanId::T9,
            line: Line::Fan,
            start: p0,
            end: last,
            // Fan on-time in ms, before and after.
            requested: fan_time / TICKS_PER_MS,
            placed: (fan_time as f64 * scale / TICKS_PER_MS as f64).round() as u64,
            signed: 0,
        });
        out
    }
}

/// Runs every enabled Trojan, T1 through T9, over `timeline`.
///
/// Nothing before the homing detector fires is touched; an unhomed timeline
/// passes through unchanged.
pub fn apply(
    timeline: &SignalTimeline,
    config: &TrojanConfig,
    profile: &PrinterProfile,
) -> Result<Applied, TrojanError> {
    config.validate(profile)?;
    let homed_at = HomingFsm::scan(&profile.homing_order, timeline).map(|h| h.1);
    let (Some(homed), false) = (homed_at, config.enabled.is_empty()) else {
        return Ok(Applied {
            timeline: timeline.clone(),
            log: Vec::new(),
            homed_at,
        });
    };
    let mut ctx = Ctx {
        config,
        profile,
        homed,
        seed: config.seed.unwrap_or(0),
        log: Vec::new(),
    };
    let mut tl = timeline.clone();
    for id in TrojanId::ALL {
        if !config.is_enabled(id) {
            continue;
        }
        tl = match id {
            TrojanId::T1 => ctx.t1(tl),
            TrojanId::T2 => ctx.t2(tl),
            TrojanId::T3 => ctx.t3(tl),
            TrojanId::T4 => ctx.t4(tl),
            TrojanId::T5 => ctx.t5(tl),
            TrojanId::T6 => ctx.t6(tl),
            TrojanId::T7 => ctx.t7(tl),
            TrojanId::T8 => ctx.t8(tl),
            TrojanId::T9 => ctx.t9(tl),
        };
    }
    Ok(Applied {
        timeline: tl,
        log: ctx.log,
        homed_at,
    })
}

/// The heater half of the engine as the firmware experiences it live, so a
/// simulated controller reacts to T6/T7 the way real firmware would.
#[derive(Debug, Clone)]
pub struct HeaterForcing {
    fsm: HomingFsm,
    low: Vec<Line>,
    latch: Vec<Line>,
    latched: Vec<Line>,
}

impl HeaterForcing {
    pub fn new(config: &TrojanConfig, profile: &PrinterProfile) -> HeaterForcing {
        HeaterForcing {
            fsm: HomingFsm::new(&profile.homing_order),
            low: config.targets(TrojanId::T6).to_vec(),
            latch: config.targets(TrojanId::T7).to_vec(),
            latched: Vec::new(),
        }
    }

    pub fn is_active(&self) -> bool {
        !self.low.is_empty() || !self.latch.is_empty()
    }
}

impl HeaterTap for HeaterForcing {
    fn observe(&mut self, e: &Event) {
        self.fsm.observe(e);
    }

    fn route(&mut self, line: Line, _t: Tick, commanded: bool) -> bool {
        if !self.fsm.is_homed() {
            return commanded;
        }
        if self.low.contains(&line) {
            return false;
        }
        if self.latch.contains(&line) {
            if self.latched.contains(&line) {
                return true;
            }
            if commanded {
                self.latched.push(line);
            }
        }
        commanded
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::firmware::simulate_print;
    use crate::gcode::parse_program;
    use crate::signals::{detect_edges, Polarity};

    fn golden() -> (PrinterProfile, SignalTimeline) {
        let p = PrinterProfile::default();
        let prog = parse_program(
            "M106 S200\nG1 X20 Y20 Z0.2 E1 F3000\nG1 X40 E2\nG1 Y40 E3\nG1 Z0.4\nG1 X20 E4\nG1 Z0.6\nG1 Y20 E5\nG1 Z0.8\nG1 X40 E6\nG1 Z1.0\nG1 Y60 E7\nM107",
        );
        let out = simulate_print(&prog, &p, 5).unwrap();
        (p, out.timeline)
    }

    fn count(tl: &SignalTimeline, line: Line) -> usize {
        detect_edges(tl, line, Polarity::Rising).len()
    }

    #[test]
    fn bypass_is_identity() {
        let (p, tl) = golden();
        let a = apply(&tl, &TrojanConfig::bypass(), &p).unwrap();
        assert_eq!(a.timeline, tl);
        assert!(a.log.is_empty());
    }

    #[test]
    fn gap_filling_respects_envelope() {
        let existing = vec![10_000, 12_000, 30_000];
        let at = place(&existing, 9_000, 1_000_000, 3);
        assert_eq!(at, vec![17_000, 22_000, 35_000]);
    }

    #[test]
    fn t2_keeps_odd_pulses() {
        let (p, tl) = golden();
        let a = apply(&tl, &TrojanConfig::with_defaults(&[TrojanId::T2], 1), &p).unwrap();
        let n = count(&tl, Line::EStep);
        assert_eq!(count(&a.timeline, Line::EStep), n.div_ceil(2));
        a.timeline.validate().unwrap();
    }

    #[test]
    fn injections_are_exact_and_gated() {
        let (p, tl) = golden();
        for id in [TrojanId::T1, TrojanId::T4, TrojanId::T5] {
            let mut c = TrojanConfig::with_defaults(&[id], 9);
            if id == TrojanId::T4 {
                c.t4.as_mut().unwrap().layer_increment_rng = [1, 2];
            }
            if id == TrojanId::T1 {
                c.t1.as_mut().unwrap().period_s = 0.5;
            }
            let a = apply(&tl, &c, &p).unwrap();
            a.timeline.validate().unwrap();
            assert!(!a.log.is_empty(), "{id}");
            let homed = a.homed_at.unwrap();
            for axis in [Axis::X, Axis::Y, Axis::Z] {
                let line = Line::step(axis);
                let added: u64 = a
                    .log
                    .iter()
                    .filter(|l| l.line == line)
                    .map(|l| l.placed)
                    .sum();
                assert_eq!(
                    count(&a.timeline, line) as u64,
                    count(&tl, line) as u64 + added,
                    "{id} {axis}"
                );
            }
            let cut = tl.events.partition_point(|e| e.t <= homed);
            assert_eq!(a.timeline.events[..cut], tl.events[..cut]);
        }
    }

    #[test]
    fn seeded_runs_repeat() {
        let (p, tl) = golden();
        let mut c = TrojanConfig::with_defaults(&[TrojanId::T1], 3);
        c.t1.as_mut().unwrap().period_s = 0.5;
        assert_eq!(apply(&tl, &c, &p).unwrap(), apply(&tl, &c, &p).unwrap());
    }

    #[test]
    fn t3_over_and_under() {
        let (p, tl) = golden();
        let mut c = TrojanConfig::with_defaults(&[TrojanId::T3], 1);
        let over = apply(&tl, &c, &p).unwrap();
        assert!(count(&over.timeline, Line::EStep) > count(&tl, Line::EStep));
        c.t3.as_mut().unwrap().mode = T3Mode::Under;
        let under = apply(&tl, &c, &p).unwrap();
        assert!(count(&under.timeline, Line::EStep) < count(&tl, Line::EStep));
        under.timeline.validate().unwrap();
    }

    #[test]
    fn t7_holds_heater_high() {
        let p = PrinterProfile::default();
        let prog = parse_program("M104 S200\nG1 X5 F60\nM104 S0\nG1 X0 F600");
        let tl = simulate_print(&prog, &p, 1).unwrap().timeline;
        assert!(count(&tl, Line::HeatHotend) >= 1);
        let a = apply(&tl, &TrojanConfig::with_defaults(&[TrojanId::T7], 1), &p).unwrap();
        a.timeline.validate().unwrap();
        assert!(a.timeline.levels_at_end()[Line::HeatHotend.index()]);
        assert_eq!(
            detect_edges(&a.timeline, Line::HeatHotend, Polarity::Falling).len(),
            0
        );
    }

    #[test]
    fn t6_holds_heater_low() {
        let p = PrinterProfile::default();
        let prog = parse_program("M104 S200\nG1 X5 F60");
        let tl = simulate_print(&prog, &p, 1).unwrap().timeline;
        let a = apply(&tl, &TrojanConfig::with_defaults(&[TrojanId::T6], 1), &p).unwrap();
        assert_eq!(count(&a.timeline, Line::HeatHotend), 0);
    }

    #[test]
    fn t8_cuts_enable_in_window() {
        let (p, tl) = golden();
        let mut c = TrojanConfig::with_defaults(&[TrojanId::T8], 1);
        c.t8.as_mut().unwrap().toggle_schedule = vec![(0.5, 1.0)];
        let a = apply(&tl, &c, &p).unwrap();
        a.timeline.validate().unwrap();
        let h = a.homed_at.unwrap();
        let mid = h + seconds_to_ticks(0.75);
        assert!(!a.timeline.level_at(Line::XEn, mid));
        assert!(a.timeline.level_at(Line::XEn, h + seconds_to_ticks(1.0)));
        assert!(a.log[0].requested > 0);
    }

    #[test]
    fn t9_scales_fan() {
        let (p, tl) = golden();
        let a = apply(&tl, &TrojanConfig::with_defaults(&[TrojanId::T9], 1), &p).unwrap();
        a.timeline.validate().unwrap();
        let high = |tl: &SignalTimeline| -> Tick {
            tl.pulses(Line::Fan)
                .iter()
                .map(|&(r, f)| f.unwrap() - r)
                .sum()
        };
        let ratio = high(&a.timeline) as f64 / high(&tl) as f64;
        assert!((0.45..0.55).contains(&ratio), "{ratio}");
    }

    #[test]
    fn bursts_split_on_gaps() {
        let b = bursts(&[1, 2, 3, BURST_GAP + 10, BURST_GAP + 20], 0);
        assert_eq!(b, vec![(1, 3), (BURST_GAP + 10, BURST_GAP + 20)]);
        assert!(bursts(&[1, 2], 5).is_empty());
    }

    #[test]
    fn tap_matches_transform_rules() {
        let p = PrinterProfile::default();
        let c = TrojanConfig::with_defaults(&[TrojanId::T7], 1);
        let mut tap = HeaterForcing::new(&c, &p);
        assert!(!tap.route(Line::HeatHotend, 0, false));
        for (i, a) in [Axis::X, Axis::Y, Axis::Z].into_iter().enumerate() {
            tap.observe(&Event::new(i as Tick + 1, Line::endstop(a).unwrap(), true));
        }
        assert!(!tap.route(Line::HeatHotend, 10, false));
        assert!(tap.route(Line::HeatHotend, 11, true));
        assert!(tap.route(Line::HeatHotend, 12, false));
        assert!(!tap.route(Line::HeatBed, 12, false));
    }
}
