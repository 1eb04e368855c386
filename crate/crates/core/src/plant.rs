//! The machine on the far side of the driver board: integrates step pulses
//! into head position and extruded filament, drives the endstop switches, and
//! evolves heater temperatures with a first-order thermal model.

use std::fmt::Write as _;

use serde::Serialize;

use crate::axis::{Axis, PerAxis};
use crate::firmware::{HeaterProfile, PrinterProfile};
use crate::signals::{ticks_to_seconds, Event, Line, SignalTimeline, Tick, TICKS_PER_SECOND};

/// Snapshot of the physical printer.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlantState {
    /// Machine coordinates, mm.
    pub position: [f64; 3],
    pub extruded_mm: f64,
    pub hotend_temp: f64,
    pub bed_temp: f64,
    pub fan_duty: u32,
    pub motors_enabled: PerAxis<bool>,
    /// Latching; carries the reason.
    pub destroyed: Option<String>,
}

/// Extrusion during one sampling interval, at the step-weighted mean
/// position of the nozzle while filament was fed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Deposit {
    /// End of the interval, seconds.
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    /// Net filament fed, mm.
    pub de: f64,
}

#[derive(Debug, Clone, Default)]
struct DepositAcc {
    forward: i64,
    net: i64,
    sum: [i128; 3],
}

#[derive(Debug, Clone)]
struct Heater {
    profile: HeaterProfile,
    temp: f64,
    on: bool,
}

impl Heater {
    fn new(profile: HeaterProfile) -> Heater {
        Heater {
            profile,
            temp: profile.ambient,
            on: false,
        }
    }

    /// Integrates over `dt` seconds. Returns the offset in seconds at which
    /// the temperature first exceeded `max_temp`, if it did.
    fn integrate(&mut self, dt: f64) -> Option<f64> {
        if dt <= 0.0 {
            return None;
        }
        let p = &self.profile;
        let target = p.equilibrium(if self.on { 1.0 } else { 0.0 });
        let t0 = self.temp;
        self.temp = target + (t0 - target) * (-dt / p.cool_time_constant).exp();
        if t0 <= p.max_temp && self.temp > p.max_temp {
            let s = -p.cool_time_constant * ((p.max_temp - target) / (t0 - target)).ln();
            return Some(s.clamp(0.0, dt));
        }
        None
    }
}

/// Incremental plant. Feed it events in time order with [`Plant::apply`].
#[derive(Debug, Clone)]
pub struct Plant {
    spm: PerAxis<f64>,
    steps: [i64; 4],
    dir: [bool; 4],
    enabled: [bool; 4],
    endstop: [bool; 3],
    hotend: Heater,
    bed: Heater,
    fan_high: bool,
    fan_high_since: Tick,
    fan_high_time: Tick,
    fan_duty: u32,
    fan_max: u32,
    destroyed: Option<(Tick, String)>,
    now: Tick,
    ignored: [u64; 4],
    // Sampling, only when recording.
    record: bool,
    interval: Tick,
    next_sample: Tick,
    acc: DepositAcc,
    trace: Vec<(Tick, PlantState)>,
    deposits: Vec<Deposit>,
}

impl Plant {
    /// A plant with the head at `profile.start_position`.
    pub fn new(profile: &PrinterProfile) -> Plant {
        let pos = [0, 1, 2].map(|i| profile.to_steps(Axis::XYZ[i], profile.start_position[i]));
        Plant::with_position(profile, pos)
    }

    /// A plant with the head at the given machine position in steps.
    pub fn with_position(profile: &PrinterProfile, xyz_steps: [i64; 3]) -> Plant {
        let interval = profile.fan_period();
        Plant {
            spm: profile.steps_per_mm,
            steps: [xyz_steps[0], xyz_steps[1], xyz_steps[2], 0],
            dir: [false; 4],
            enabled: [false; 4],
            endstop: [false; 3],
            hotend: Heater::new(profile.hotend),
            bed: Heater::new(profile.bed),
            fan_high: false,
            fan_high_since: 0,
            fan_high_time: 0,
            fan_duty: 0,
            fan_max: profile.fan_max_duty,
            destroyed: None,
            now: 0,
            ignored: [0; 4],
            record: false,
            interval,
            next_sample: interval,
            acc: DepositAcc::default(),
            trace: Vec::new(),
            deposits: Vec::new(),
        }
    }

    /// Endstop edges owed at tick 0 for axes that start on their switch.
    /// Must be called once before the first [`Plant::apply`].
    pub fn power_on(&mut self) -> Vec<Event> {
        let mut out = Vec::new();
        for axis in Axis::XYZ {
            if let Some(e) = self.update_endstop(axis, 0) {
                out.push(e);
            }
        }
        out
    }

    fn update_endstop(&mut self, axis: Axis, t: Tick) -> Option<Event> {
        let i = axis.index();
        let pressed = self.steps[i] <= 0;
        if pressed != self.endstop[i] {
            self.endstop[i] = pressed;
            return Line::endstop(axis).map(|line| Event::new(t, line, pressed));
        }
        None
    }

    fn integrate_heaters(&mut self, from: Tick, to: Tick) {
        let dt = ticks_to_seconds(to - from);
        let hot = self.hotend.integrate(dt);
        let bed = self.bed.integrate(dt);
        if self.destroyed.is_none() {
            let at = |s: f64| from + (s * TICKS_PER_SECOND as f64) as Tick;
            match (hot, bed) {
                (Some(s), _) => {
                    self.destroyed = Some((
                        at(s),
                        format!("hotend exceeded {} °C", self.hotend.profile.max_temp),
                    ));
                }
                (None, Some(s)) => {
                    self.destroyed = Some((
                        at(s),
                        format!("bed exceeded {} °C", self.bed.profile.max_temp),
                    ));
                }
                _ => {}
            }
        }
    }

    fn close_interval(&mut self, end: Tick) {
        if self.fan_high {
            self.fan_high_time += end - self.fan_high_since;
            self.fan_high_since = end;
        }
        self.fan_duty = ((self.fan_high_time as f64 / self.interval as f64) * self.fan_max as f64)
            .round() as u32;
        self.fan_high_time = 0;
        if !self.record {
            return;
        }
        self.flush_deposit(end);
        let state = self.state();
        self.trace.push((end, state));
    }

    fn flush_deposit(&mut self, end: Tick) {
        if self.acc.forward > 0 {
            let n = self.acc.forward as f64;
            let mean = |i: usize| self.acc.sum[i] as f64 / n / self.spm.get(Axis::XYZ[i]);
            self.deposits.push(Deposit {
                t: ticks_to_seconds(end),
                x: mean(0),
                y: mean(1),
                z: mean(2),
                de: self.acc.net as f64 / self.spm.e,
            });
        }
        self.acc = DepositAcc::default();
    }

    /// Lets time pass without any edges.
    pub fn advance_to(&mut self, t: Tick) {
        while self.next_sample <= t {
            let b = self.next_sample;
            self.integrate_heaters(self.now, b);
            self.now = b;
            self.close_interval(b);
            self.next_sample += self.interval;
        }
        if t > self.now {
            self.integrate_heaters(self.now, t);
            self.now = t;
        }
    }

    /// Applies one edge. Returns the endstop edge it causes, if any.
    pub fn apply(&mut self, e: &Event) -> Option<Event> {
        self.advance_to(e.t);
        match e.line {
            Line::XStep | Line::YStep | Line::ZStep | Line::EStep => {
                if !e.high {
                    return None;
                }
                let axis = e.line.step_axis().unwrap();
                let i = axis.index();
                if !self.enabled[i] {
                    self.ignored[i] += 1;
                    return None;
                }
                let d = if self.dir[i] { 1 } else { -1 };
                self.steps[i] += d;
                if axis == Axis::E {
                    self.acc.net += d;
                    if d > 0 {
                        self.acc.forward += 1;
                        for k in 0..3 {
                            self.acc.sum[k] += i128::from(self.steps[k]);
                        }
                    }
                    return None;
                }
                self.update_endstop(axis, e.t)
            }
            Line::XDir => self.set(&e.line, e.high, |p| &mut p.dir[0]),
            Line::YDir => self.set(&e.line, e.high, |p| &mut p.dir[1]),
            Line::ZDir => self.set(&e.line, e.high, |p| &mut p.dir[2]),
            Line::EDir => self.set(&e.line, e.high, |p| &mut p.dir[3]),
            Line::XEn => self.set(&e.line, e.high, |p| &mut p.enabled[0]),
            Line::YEn => self.set(&e.line, e.high, |p| &mut p.enabled[1]),
            Line::ZEn => self.set(&e.line, e.high, |p| &mut p.enabled[2]),
            Line::EEn => self.set(&e.line, e.high, |p| &mut p.enabled[3]),
            Line::HeatHotend => {
                self.hotend.on = e.high;
                None
            }
            Line::HeatBed => {
                self.bed.on = e.high;
                None
            }
            Line::Fan => {
                if e.high && !self.fan_high {
                    self.fan_high_since = e.t;
                } else if !e.high && self.fan_high {
                    self.fan_high_time += e.t - self.fan_high_since;
                }
                self.fan_high = e.high;
                None
            }
            // Switch outputs; the plant computes its own.
            Line::EndstopX | Line::EndstopY | Line::EndstopZ => None,
        }
    }

    fn set(
        &mut self,
        _line: &Line,
        v: bool,
        f: impl FnOnce(&mut Plant) -> &mut bool,
    ) -> Option<Event> {
        *f(self) = v;
        None
    }

    pub fn now(&self) -> Tick {
        self.now
    }

    pub fn steps(&self) -> [i64; 4] {
        self.steps
    }

    pub fn endstop(&self, axis: Axis) -> bool {
        axis.is_gantry() && self.endstop[axis.index()]
    }

    pub fn hotend_temp(&self) -> f64 {
        self.hotend.temp
    }

    pub fn bed_temp(&self) -> f64 {
        self.bed.temp
    }

    pub fn temp(&self, bed: bool) -> f64 {
        if bed {
            self.bed.temp
        } else {
            self.hotend.temp
        }
    }

    /// Steps that arrived while the axis driver was disabled.
    pub fn ignored_steps(&self) -> [u64; 4] {
        self.ignored
    }

    pub fn destroyed_at(&self) -> Option<Tick> {
        self.destroyed.as_ref().map(|d| d.0)
    }

    pub fn state(&self) -> PlantState {
        PlantState {
            position: [0, 1, 2].map(|i| self.steps[i] as f64 / self.spm.get(Axis::XYZ[i])),
            extruded_mm: self.steps[3] as f64 / self.spm.e,
            hotend_temp: self.hotend.temp,
            bed_temp: self.bed.temp,
            fan_duty: self.fan_duty,
            motors_enabled: PerAxis::new(
                self.enabled[0],
                self.enabled[1],
                self.enabled[2],
                self.enabled[3],
            ),
            destroyed: self.destroyed.as_ref().map(|d| d.1.clone()),
        }
    }
}

/// Result of driving a fresh plant with a timeline.
#[derive(Debug, Clone)]
pub struct PlantRun {
    /// One snapshot per sampling interval, plus the final state.
    pub trace: Vec<(Tick, PlantState)>,
    pub deposition: Vec<Deposit>,
    pub final_state: PlantState,
    pub final_steps: [i64; 4],
    pub ignored_steps: [u64; 4],
    pub destroyed_at: Option<Tick>,
}

impl PlantRun {
    /// Filament-weighted mean nozzle position over deposits whose interval
    /// ends in `[from_s, to_s)`. `None` when nothing was extruded there.
    pub fn centroid(&self, from_s: f64, to_s: f64) -> Option<[f64; 3]> {
        let mut w = 0.0;
        let mut sum = [0.0; 3];
        for d in self
            .deposition
            .iter()
            .filter(|d| d.t >= from_s && d.t < to_s && d.de > 0.0)
        {
            w += d.de;
            sum[0] += d.x * d.de;
            sum[1] += d.y * d.de;
            sum[2] += d.z * d.de;
        }
        (w > 0.0).then(|| sum.map(|s| s / w))
    }

    pub fn deposition_csv(&self) -> String {
        let mut s = String::from("t,x,y,z,de\n");
        for d in &self.deposition {
            let _ = writeln!(s, "{:.1},{:.5},{:.5},{:.5},{:.5}", d.t, d.x, d.y, d.z, d.de);
        }
        s
    }
}

/// Runs a plant that starts at `profile.start_position` over `timeline`,
/// stopping at its last event.
pub fn apply_timeline(timeline: &SignalTimeline, profile: &PrinterProfile) -> PlantRun {
    apply_timeline_until(timeline, profile, timeline.end_time())
}

/// As [`apply_timeline`], letting time run on to `horizon` after the last
/// event with every line held at its final level.
pub fn apply_timeline_until(
    timeline: &SignalTimeline,
    profile: &PrinterProfile,
    horizon: Tick,
) -> PlantRun {
    let mut plant = Plant::new(profile);
    plant.record = true;
    plant.power_on();
    for e in &timeline.events {
        plant.apply(e);
    }
    plant.advance_to(horizon.max(plant.now));
    plant.flush_deposit(plant.now);
    let final_state = plant.state();
    let mut trace = std::mem::take(&mut plant.trace);
    trace.push((plant.now, final_state.clone()));
    PlantRun {
        trace,
        deposition: std::mem::take(&mut plant.deposits),
        final_state,
        final_steps: plant.steps,
        ignored_steps: plant.ignored,
        destroyed_at: plant.destroyed_at(),
    }
}
