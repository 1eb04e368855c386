use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use super::planner::{plan, MotionSegment, Plan};
use super::profile::PrinterProfile;
use super::thermal::RunawayMonitor;
use crate::axis::Axis;
use crate::gcode::{CommandKind, Param, Program};
use crate::plant::Plant;
use crate::signals::{
    seconds_to_ticks, ticks_to_seconds, Event, Line, SignalTimeline, Tick, STEP_PULSE_WIDTH,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FirmwareEventKind {
    PrintComplete,
    ThermalRunawayHalt,
    TempReached,
    MotorsDisabled,
    HomingFault,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FirmwareEvent {
    pub kind: FirmwareEventKind,
    pub t: Tick,
    pub detail: String,
}

#[derive(Debug, Error, PartialEq)]
pub enum FirmwareError {
    #[error("line {line}: {heater} did not reach {target} °C within {limit_s} s")]
    WaitTimeout {
        line: usize,
        heater: &'static str,
        target: f64,
        limit_s: f64,
    },
    #[error("endstop {0} never triggered")]
    HomingFault(Axis),
}

/// What sits between the heater outputs and the heating elements.
///
/// The firmware reads its thermistors through whatever reaches the
/// elements, so a tap that overrides a line is felt by the control loop.
pub trait HeaterTap {
    /// Sees every edge the board emits, endstops included.
    fn observe(&mut self, e: &Event);
    /// The level that reaches the element while the firmware drives `line`
    /// to `commanded`.
    fn route(&mut self, line: Line, t: Tick, commanded: bool) -> bool;
}

/// Heaters wired straight to the board.
#[derive(Debug, Clone, Copy, Default)]
pub struct DirectHeaters;

impl HeaterTap for DirectHeaters {
    fn observe(&mut self, _e: &Event) {}

    fn route(&mut self, _line: Line, _t: Tick, commanded: bool) -> bool {
        commanded
    }
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub timeline: SignalTimeline,
    pub events: Vec<FirmwareEvent>,
    pub plan: Plan,
    /// When the power-on homing routine finished.
    pub homed_at: Option<Tick>,
}

impl SimOutput {
    pub fn halted(&self) -> Option<&FirmwareEvent> {
        self.events.iter().find(|e| {
            matches!(
                e.kind,
                FirmwareEventKind::ThermalRunawayHalt | FirmwareEventKind::HomingFault
            )
        })
    }

    pub fn completed(&self) -> bool {
        self.events
            .iter()
            .any(|e| e.kind == FirmwareEventKind::PrintComplete)
    }

    pub fn first(&self, kind: FirmwareEventKind) -> Option<&FirmwareEvent> {
        self.events.iter().find(|e| e.kind == kind)
    }
}

const HEATERS: [Line; 2] = [Line::HeatHotend, Line::HeatBed];
const HEATER_NAMES: [&str; 2] = ["hotend", "bed"];

struct Machine<'a> {
    profile: &'a PrinterProfile,
    tap: &'a mut dyn HeaterTap,
    plant: Plant,
    out: Vec<Event>,
    levels: [bool; Line::COUNT],
    fw: Vec<FirmwareEvent>,
    now: Tick,
    tick: Tick,
    next_thermal: Tick,
    targets: [f64; 2],
    commanded: [bool; 2],
    routed: [bool; 2],
    monitors: [RunawayMonitor; 2],
    fan: Vec<(Tick, u32)>,
    halted: bool,
}

impl<'a> Machine<'a> {
    fn new(profile: &'a PrinterProfile, plant: Plant, tap: &'a mut dyn HeaterTap) -> Machine<'a> {
        let tick = profile.thermal_tick();
        Machine {
            profile,
            tap,
            plant,
            out: Vec::new(),
            levels: [false; Line::COUNT],
            fw: Vec::new(),
            now: 0,
            tick,
            next_thermal: tick,
            targets: [0.0; 2],
            commanded: [false; 2],
            routed: [false; 2],
            monitors: [
                RunawayMonitor::new(profile.thermal, profile.hotend),
                RunawayMonitor::new(profile.thermal, profile.bed),
            ],
            fan: Vec::new(),
            halted: false,
        }
    }

    fn power_on(&mut self) {
        for e in self.plant.power_on() {
            self.record(e);
        }
        self.reroute(0);
    }

    /// Appends an edge the plant produced, or one that needs no plant update.
    fn record(&mut self, e: Event) {
        self.levels[e.line.index()] = e.high;
        self.tap.observe(&e);
        self.out.push(e);
    }

    fn reroute(&mut self, t: Tick) {
        for h in 0..2 {
            let actual = self.tap.route(HEATERS[h], t, self.commanded[h]);
            if actual != self.routed[h] {
                self.routed[h] = actual;
                self.plant.apply(&Event::new(t, HEATERS[h], actual));
            }
        }
    }

    /// Emits a board output at `e.t`, running any control ticks due first.
    /// Returns the endstop edge it caused, if any.
    fn put(&mut self, e: Event) -> Option<Event> {
        self.thermal_until(e.t);
        if self.halted || self.levels[e.line.index()] == e.high {
            return None;
        }
        self.record(e);
        let hit = self.plant.apply(&e)?;
        self.record(hit);
        self.reroute(hit.t);
        Some(hit)
    }

    fn drive_heater(&mut self, h: usize, t: Tick, level: bool) {
        self.commanded[h] = level;
        let line = HEATERS[h];
        if self.levels[line.index()] != level {
            self.record(Event::new(t, line, level));
        }
        let actual = self.tap.route(line, t, level);
        if actual != self.routed[h] {
            self.routed[h] = actual;
            self.plant.apply(&Event::new(t, line, actual));
        }
    }

    fn thermal_until(&mut self, t: Tick) {
        while !self.halted && self.next_thermal <= t {
            let tau = self.next_thermal;
            self.next_thermal += self.tick;
            self.thermal_tick(tau);
        }
    }

    fn thermal_tick(&mut self, tau: Tick) {
        self.plant.advance_to(tau);
        let hyst = self.profile.thermal.hysteresis_c;
        for h in 0..2 {
            let temp = self.plant.temp(h == 1);
            let duty = if self.commanded[h] { 1.0 } else { 0.0 };
            if let Some(fault) = self.monitors[h].sample(temp, duty) {
                self.shutdown(tau);
                self.fw.push(FirmwareEvent {
                    kind: FirmwareEventKind::ThermalRunawayHalt,
                    t: tau,
                    detail: format!("{}: {fault}", HEATER_NAMES[h]),
                });
                return;
            }
            let target = self.targets[h];
            let level = if target <= 0.0 {
                false
            } else if temp < target - hyst {
                true
            } else if temp >= target {
                false
            } else {
                self.commanded[h]
            };
            if level != self.commanded[h] {
                self.drive_heater(h, tau, level);
            }
        }
    }

    /// Everything off: heaters, fan, drivers, and any STEP line left high.
    fn shutdown(&mut self, t: Tick) {
        for axis in Axis::ALL {
            let step = Line::step(axis);
            if self.levels[step.index()] {
                self.record(Event::new(t, step, false));
            }
        }
        for h in 0..2 {
            self.targets[h] = 0.0;
            self.drive_heater(h, t, false);
        }
        self.set_fan(t, 0);
        for axis in Axis::ALL {
            let en = Line::enable(axis);
            if self.levels[en.index()] {
                self.record(Event::new(t, en, false));
            }
        }
        self.halted = true;
    }

    fn set_target(&mut self, h: usize, target: f64) {
        if target != self.targets[h] {
            self.targets[h] = target;
            self.monitors[h].reset();
        }
    }

    fn set_fan(&mut self, t: Tick, duty: u32) {
        let last = self.fan.last().map_or(0, |f| f.1);
        if last != duty {
            self.fan.push((t, duty));
        }
    }

    fn enable(&mut self, axis: Axis, t: Tick) {
        self.put(Event::new(t, Line::enable(axis), true));
    }

    /// Drives each axis toward its minimum until its endstop closes.
    fn home(&mut self, axes: &[Axis]) -> Result<(), Axis> {
        for &a in &Axis::XYZ {
            self.enable(a, self.now);
        }
        for &axis in axes {
            if self.halted {
                return Ok(());
            }
            let i = axis.index();
            let period = self.profile.homing_step_period(axis);
            let step = Line::step(axis);
            let dir = Line::dir(axis);
            let pulse = |m: &mut Machine, t: Tick| {
                m.put(Event::new(t, step, true));
                m.put(Event::new(t + STEP_PULSE_WIDTH, step, false));
            };

            if self.plant.endstop(axis) {
                let bump = self.profile.to_steps(axis, self.profile.homing_bump[i]);
                if bump > 0 {
                    self.put(Event::new(self.now, dir, true));
                    for _ in 0..bump {
                        self.now += period;
                        pulse(self, self.now);
                    }
                    self.now += period;
                }
            }
            self.put(Event::new(self.now, dir, false));
            let limit = (1.5 * self.profile.build_volume[i] * self.profile.steps_per_mm.get(axis))
                .ceil() as u64;
            let mut taken = 0u64;
            while !self.plant.endstop(axis) && !self.halted {
                if taken == limit {
                    self.shutdown(self.now);
                    self.fw.push(FirmwareEvent {
                        kind: FirmwareEventKind::HomingFault,
                        t: self.now,
                        detail: format!("ENDSTOP_{axis} not triggered after {limit} steps"),
                    });
                    return Err(axis);
                }
                self.now += period;
                pulse(self, self.now);
                taken += 1;
            }
            self.now += period;
        }
        Ok(())
    }

    fn run_segment(&mut self, seg: &MotionSegment, duration: Tick) {
        if duration == 0 {
            return;
        }
        let start = self.now;
        let mut pulses = Vec::new();
        for axis in Axis::ALL {
            let steps = seg.steps.get(axis);
            if steps == 0 {
                continue;
            }
            if !self.levels[Line::enable(axis).index()] {
                self.enable(axis, start);
            }
            self.put(Event::new(start, Line::dir(axis), seg.dirs.get(axis)));
            let n = steps.unsigned_abs();
            let line = Line::step(axis);
            for k in 0..n {
                let rise = start + ((2 * k + 1) * duration) / (2 * n);
                pulses.push(Event::new(rise, line, true));
                pulses.push(Event::new(rise + STEP_PULSE_WIDTH, line, false));
            }
        }
        pulses.sort_by_key(|e| e.t);
        for e in pulses {
            if self.halted {
                return;
            }
            self.put(e);
        }
        self.now = start + duration;
    }

    fn wait(&mut self, h: usize, line: usize) -> Result<(), FirmwareError> {
        let target = self.targets[h];
        if target <= 0.0 {
            return Ok(());
        }
        self.thermal_until(self.now);
        let start = self.now;
        let limit = seconds_to_ticks(self.profile.thermal.max_wait_s);
        let window = self.profile.thermal.temp_window_c;
        loop {
            if self.halted {
                return Ok(());
            }
            let tau = self.next_thermal;
            if tau - start > limit {
                return Err(FirmwareError::WaitTimeout {
                    line,
                    heater: HEATER_NAMES[h],
                    target,
                    limit_s: self.profile.thermal.max_wait_s,
                });
            }
            self.thermal_until(tau);
            let temp = self.plant.temp(h == 1);
            if !self.halted && (temp - target).abs() <= window {
                self.now = tau;
                self.fw.push(FirmwareEvent {
                    kind: FirmwareEventKind::TempReached,
                    t: tau,
                    detail: format!("{} {temp:.1} °C", HEATER_NAMES[h]),
                });
                return Ok(());
            }
        }
    }

    fn motors_off(&mut self, axes: &[Axis]) {
        self.thermal_until(self.now);
        for &a in axes {
            self.put(Event::new(self.now, Line::enable(a), false));
        }
        if !self.halted {
            let names: Vec<String> = axes.iter().map(Axis::to_string).collect();
            self.fw.push(FirmwareEvent {
                kind: FirmwareEventKind::MotorsDisabled,
                t: self.now,
                detail: names.join(" "),
            });
        }
    }

    /// Soft PWM on a fixed grid from t=0; a new duty takes effect at the
    /// next period boundary.
    fn fan_events(&self, end: Tick) -> Vec<Event> {
        let period = self.profile.fan_period();
        let max = self.profile.fan_max_duty;
        let mut out = Vec::new();
        let mut high = false;
        let mut change = self.fan.iter().peekable();
        let mut duty = 0;
        let mut start = 0;
        while start < end {
            while let Some(&&(t, d)) = change.peek() {
                if t > start {
                    break;
                }
                duty = d;
                change.next();
            }
            let on = u64::from(duty.min(max)) * period / u64::from(max);
            if on == 0 {
                if high {
                    out.push(Event::new(start, Line::Fan, false));
                    high = false;
                }
            } else {
                if !high {
                    out.push(Event::new(start, Line::Fan, true));
                    high = true;
                }
                if on < period {
                    out.push(Event::new((start + on).min(end), Line::Fan, false));
                    high = false;
                }
            }
            start += period;
        }
        if high {
            out.push(Event::new(end, Line::Fan, false));
        }
        out
    }

    fn finish(mut self, plan: Plan, homed_at: Option<Tick>) -> SimOutput {
        let end = self
            .out
            .iter()
            .map(|e| e.t)
            .max()
            .unwrap_or(0)
            .max(self.now);
        let fan = self.fan_events(end);
        self.out.extend(fan);
        SimOutput {
            timeline: SignalTimeline::from_unsorted(self.out),
            events: self.fw,
            plan,
            homed_at,
        }
    }
}

/// Gantry axes in homing order, followed by any not listed there.
fn homing_sequence(profile: &PrinterProfile, wanted: [bool; 3]) -> Vec<Axis> {
    let mut seq: Vec<Axis> = profile
        .homing_order
        .iter()
        .copied()
        .filter(|a| wanted[a.index()])
        .collect();
    for a in Axis::XYZ {
        if wanted[a.index()] && !seq.contains(&a) {
            seq.push(a);
        }
    }
    seq
}

/// Homes the axes in `profile.homing_order` on an existing plant.
pub fn home(profile: &PrinterProfile, plant: &mut Plant) -> Result<SignalTimeline, FirmwareError> {
    let mut tap = DirectHeaters;
    let mut m = Machine::new(profile, plant.clone(), &mut tap);
    m.now = plant.now();
    m.next_thermal = (plant.now() / m.tick + 1) * m.tick;
    m.power_on();
    let result = m.home(&profile.homing_order);
    *plant = m.plant.clone();
    result.map_err(FirmwareError::HomingFault)?;
    Ok(m.finish(Plan::default(), None).timeline)
}

/// Segment durations after timing jitter.
///
/// Each boundary between two back-to-back segments moves by at most
/// `time_noise` of the shorter neighbour; boundaries next to a wait or a
/// homing move stay put. Drift therefore never accumulates and every segment
/// still finishes within `time_noise` of its nominal time.
fn jittered(program: &Program, plan: &Plan, profile: &PrinterProfile, seed: u64) -> Vec<Tick> {
    let mut durations: Vec<Tick> = plan.segments.iter().map(|s| s.duration).collect();
    let j = profile.time_noise;
    if j == 0.0 || durations.is_empty() {
        return durations;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seg = plan.segments.iter().enumerate().peekable();
    let mut prev: Option<usize> = None;
    let mut shift = vec![0i64; durations.len()];
    for (i, c) in program.commands.iter().enumerate() {
        match c.kind {
            CommandKind::Home | CommandKind::WaitHotendTemp | CommandKind::WaitBedTemp => {
                prev = None
            }
            _ => {}
        }
        while let Some(&(k, s)) = seg.peek() {
            if s.command_index != i {
                break;
            }
            seg.next();
            if let Some(p) = prev {
                let u: f64 = rng.random_range(-1.0..1.0);
                let room = durations[p].min(durations[k]) as f64;
                shift[p] = (u * j * room).round() as i64;
            }
            prev = Some(k);
        }
    }
    let mut before = 0i64;
    for (k, s) in plan.segments.iter().enumerate() {
        let d = durations[k] as i64 + shift[k] - before;
        before = shift[k];
        let floor = MotionSegment::min_duration(&s.steps, profile) as i64;
        durations[k] = if durations[k] == 0 {
            0
        } else {
            d.max(floor) as Tick
        };
    }
    durations
}

pub fn simulate_print(
    program: &Program,
    profile: &PrinterProfile,
    seed: u64,
) -> Result<SimOutput, FirmwareError> {
    simulate_print_with(program, profile, seed, &mut DirectHeaters)
}

/// Runs `program` on a printer that powers up at `profile.start_position`:
/// home, then execute every command.
pub fn simulate_print_with(
    program: &Program,
    profile: &PrinterProfile,
    seed: u64,
    tap: &mut dyn HeaterTap,
) -> Result<SimOutput, FirmwareError> {
    let plan = plan(program, profile);
    let durations = jittered(program, &plan, profile, seed);
    let mut by_command: Vec<Option<usize>> = vec![None; program.commands.len()];
    for (k, s) in plan.segments.iter().enumerate() {
        by_command[s.command_index] = Some(k);
    }

    let mut m = Machine::new(profile, Plant::new(profile), tap);
    m.power_on();
    let _ = m.home(&homing_sequence(profile, [true; 3]));
    let homed_at = (!m.halted).then_some(m.now);

    for (i, c) in program.commands.iter().enumerate() {
        if m.halted {
            break;
        }
        let s_word = || c.get(Param::S).unwrap_or(0.0);
        match c.kind {
            CommandKind::Move { .. } => {
                if let Some(k) = by_command[i] {
                    m.run_segment(&plan.segments[k], durations[k]);
                }
            }
            CommandKind::Home => {
                let any = [Param::X, Param::Y, Param::Z]
                    .iter()
                    .any(|p| c.params.contains_key(p));
                let wanted = Axis::XYZ.map(|a| !any || c.params.contains_key(&a.param()));
                let _ = m.home(&homing_sequence(profile, wanted));
            }
            CommandKind::SetHotendTemp => m.set_target(0, s_word()),
            CommandKind::SetBedTemp => m.set_target(1, s_word()),
            CommandKind::WaitHotendTemp => {
                m.set_target(0, s_word());
                m.wait(0, c.source_line)?;
            }
            CommandKind::WaitBedTemp => {
                m.set_target(1, s_word());
                m.wait(1, c.source_line)?;
            }
            CommandKind::FanOn => {
                let max = f64::from(profile.fan_max_duty);
                let duty = c.get(Param::S).unwrap_or(max).clamp(0.0, max).round() as u32;
                m.set_fan(m.now, duty);
            }
            CommandKind::FanOff => m.set_fan(m.now, 0),
            CommandKind::MotorsOff => {
                let any = Axis::ALL.iter().any(|a| c.params.contains_key(&a.param()));
                let axes: Vec<Axis> = Axis::ALL
                    .into_iter()
                    .filter(|a| !any || c.params.contains_key(&a.param()))
                    .collect();
                m.motors_off(&axes);
            }
            _ => {}
        }
    }
    if !m.halted {
        m.thermal_until(m.now);
    }
    if !m.halted {
        m.fw.push(FirmwareEvent {
            kind: FirmwareEventKind::PrintComplete,
            t: m.now,
            detail: format!("{:.3} s", ticks_to_seconds(m.now)),
        });
    }
    Ok(m.finish(plan, homed_at))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gcode::parse_program;
    use crate::signals::{detect_edges, Polarity};

    fn rises(tl: &SignalTimeline, line: Line) -> usize {
        detect_edges(tl, line, Polarity::Rising).len()
    }

    fn signed_steps(tl: &SignalTimeline, axis: Axis) -> i64 {
        let mut dir = false;
        let mut n = 0;
        for e in &tl.events {
            if e.line == Line::dir(axis) {
                dir = e.high;
            } else if e.line == Line::step(axis) && e.high {
                n += if dir { 1 } else { -1 };
            }
        }
        n
    }

    #[test]
    fn empty_program_homes_and_completes() {
        let p = PrinterProfile::default();
        let out = simulate_print(&Program::default(), &p, 1).unwrap();
        assert_eq!(out.events.len(), 1);
        assert_eq!(out.events[0].kind, FirmwareEventKind::PrintComplete);
        out.timeline.validate().unwrap();
        // 60 mm of X at 100 steps/mm before the switch closes.
        assert_eq!(rises(&out.timeline, Line::XStep), 6000);
        let order: Vec<Line> = out
            .timeline
            .iter()
            .filter(|e| e.high && e.line.endstop_axis().is_some())
            .map(|e| e.line)
            .collect();
        assert_eq!(order, vec![Line::EndstopX, Line::EndstopY, Line::EndstopZ]);
    }

    #[test]
    fn home_from_origin_bumps() {
        let p = PrinterProfile {
            start_position: [0.0; 3],
            ..PrinterProfile::default()
        };
        let mut plant = Plant::new(&p);
        let tl = home(&p, &mut plant).unwrap();
        assert_eq!(plant.steps()[..3], [0, 0, 0]);
        // Out by the bump and back again.
        assert_eq!(rises(&tl, Line::XStep), 1000);
        assert_eq!(rises(&tl, Line::ZStep), 1600);
    }

    #[test]
    fn home_from_fifty_mm() {
        let p = PrinterProfile {
            start_position: [50.0, 0.0, 0.0],
            ..PrinterProfile::default()
        };
        let mut plant = Plant::new(&p);
        let tl = home(&p, &mut plant).unwrap();
        let x_end = tl
            .iter()
            .find(|e| e.line == Line::EndstopX && e.high)
            .unwrap()
            .t;
        let before = tl
            .iter()
            .filter(|e| e.line == Line::XStep && e.high && e.t <= x_end)
            .count();
        assert!(before >= 5000);
        assert!(tl.iter().all(|e| e.line != Line::XDir || !e.high));
    }

    #[test]
    fn homing_fault_when_switch_is_missing() {
        let p = PrinterProfile {
            start_position: [0.0, 0.0, 10.0],
            ..PrinterProfile::default()
        };
        // A plant that thinks Z sits far beyond its travel.
        let mut plant = Plant::with_position(&p, [0, 0, 400 * 1000]);
        assert_eq!(
            home(&p, &mut plant),
            Err(FirmwareError::HomingFault(Axis::Z))
        );
    }

    #[test]
    fn same_seed_same_timeline() {
        let p = PrinterProfile::default();
        let prog = parse_program("G1 X10 Y10 F3000\nG1 X20 E1\nG1 Y30 E2\nG1 X5 Y5");
        let a = simulate_print(&prog, &p, 7).unwrap();
        let b = simulate_print(&prog, &p, 7).unwrap();
        assert_eq!(a.timeline, b.timeline);
        assert_eq!(a.events, b.events);
        let c = simulate_print(&prog, &p, 8).unwrap();
        assert_ne!(a.timeline, c.timeline);
    }

    #[test]
    fn step_conservation() {
        let p = PrinterProfile::default();
        let prog = parse_program("G1 X10 Y10 F3000\nG1 X20 E1\nG1 Y30 E2\nG1 E1.5\nG1 X5 Y5 Z0.4");
        let out = simulate_print(&prog, &p, 3).unwrap();
        let total = out.plan.total_steps();
        let homed = out.homed_at.unwrap();
        let after = SignalTimeline::from_unsorted(
            out.timeline
                .iter()
                .filter(|e| e.t >= homed)
                .copied()
                .collect(),
        );
        for axis in Axis::ALL {
            assert_eq!(signed_steps(&after, axis), total.get(axis), "{axis}");
        }
    }

    #[test]
    fn step_rate_within_ceiling() {
        let p = PrinterProfile::default();
        let prog = parse_program("G1 X100 Y100 Z5 E20 F100000");
        let out = simulate_print(&prog, &p, 11).unwrap();
        for axis in Axis::ALL {
            let r = detect_edges(&out.timeline, Line::step(axis), Polarity::Rising);
            let min = r.windows(2).map(|w| w[1] - w[0]).min().unwrap();
            assert!(min >= p.min_step_period(axis), "{axis}: {min}");
        }
    }

    #[test]
    fn heats_to_target_without_fault() {
        let p = PrinterProfile::default();
        let prog = parse_program(
            "M140 S60\nM104 S210\nM190 S60\nM109 S210\nG1 X10 F600\nM104 S0\nM140 S0",
        );
        let out = simulate_print(&prog, &p, 1).unwrap();
        assert!(out.halted().is_none());
        assert!(out.completed());
        assert_eq!(
            out.events
                .iter()
                .filter(|e| e.kind == FirmwareEventKind::TempReached)
                .count(),
            2
        );
        assert!(rises(&out.timeline, Line::HeatHotend) >= 1);
    }

    struct Cut;
    impl HeaterTap for Cut {
        fn observe(&mut self, _e: &Event) {}
        fn route(&mut self, _line: Line, _t: Tick, _c: bool) -> bool {
            false
        }
    }

    #[test]
    fn dead_heater_trips_runaway_after_watch_period() {
        let p = PrinterProfile::default();
        let prog = parse_program("M109 S210\nG1 X10");
        let out = simulate_print_with(&prog, &p, 1, &mut Cut).unwrap();
        let halt = out.halted().unwrap();
        assert_eq!(halt.kind, FirmwareEventKind::ThermalRunawayHalt);
        let on = out
            .timeline
            .iter()
            .find(|e| e.line == Line::HeatHotend && e.high)
            .unwrap()
            .t;
        let dt = ticks_to_seconds(halt.t - on);
        assert!((40.0..=40.2).contains(&dt), "{dt}");
        assert!(!out.completed());
        assert_eq!(out.timeline.end_time(), halt.t);
        assert_eq!(rises(&out.timeline, Line::XStep), 6000);
    }

    #[test]
    fn fan_pwm_matches_duty() {
        let p = PrinterProfile::default();
        let prog = parse_program("M106 S128\nG1 X50 F600\nM107");
        let out = simulate_print(&prog, &p, 1).unwrap();
        let pulses = out.timeline.pulses(Line::Fan);
        assert!(pulses.len() > 40);
        let (r, f) = pulses[5];
        assert_eq!(f.unwrap() - r, 128 * p.fan_period() / 255);
    }

    #[test]
    fn motors_off_drops_enables() {
        let p = PrinterProfile::default();
        let out = simulate_print(&parse_program("G1 X1\nM84"), &p, 1).unwrap();
        let end = out.timeline.levels_at_end();
        assert!(Axis::ALL.iter().all(|&a| !end[Line::enable(a).index()]));
        assert!(out.first(FirmwareEventKind::MotorsDisabled).is_some());
    }
}
