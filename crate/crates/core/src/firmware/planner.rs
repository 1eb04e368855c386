use serde::Serialize;

use super::profile::{BoundsPolicy, PrinterProfile};
use crate::axis::{Axis, PerAxis};
use crate::gcode::{Diagnostic, Program, Step, Tracker};
use crate::signals::{seconds_to_ticks, Tick};

/// One constant-rate move. Every stepping axis starts and finishes with the
/// segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MotionSegment {
    /// Index into `Program::commands`.
    pub command_index: usize,
    pub steps: PerAxis<i64>,
    /// DIR level per axis; `true` is the positive direction.
    pub dirs: PerAxis<bool>,
    pub duration: Tick,
    /// Effective path speed, mm/s.
    pub feedrate: f64,
}

impl MotionSegment {
    pub fn is_dwell(&self) -> bool {
        self.steps.to_array().iter().all(|&s| s == 0)
    }

    /// Shortest duration that keeps every axis inside its step-rate ceiling.
    pub fn min_duration(steps: &PerAxis<i64>, profile: &PrinterProfile) -> Tick {
        Axis::ALL
            .iter()
            .map(|&a| steps.get(a).unsigned_abs() * (profile.min_step_period(a) + 1))
            .max()
            .unwrap_or(0)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Plan {
    pub segments: Vec<MotionSegment>,
    pub diagnostics: Vec<Diagnostic>,
}

impl Plan {
    pub fn total_steps(&self) -> PerAxis<i64> {
        let mut t = PerAxis::splat(0i64);
        for s in &self.segments {
            for a in Axis::ALL {
                t.set(a, t.get(a) + s.steps.get(a));
            }
        }
        t
    }
}

/// Turns moves into timed segments. Positions start at the homing origin
/// with E at 0; `G28` returns the named axes to 0.
pub fn plan(program: &Program, profile: &PrinterProfile) -> Plan {
    let mut tracker = Tracker::new(profile.default_feedrate);
    let mut at = [0i64; 4];
    let mut out = Plan::default();
    for (index, c) in program.commands.iter().enumerate() {
        match tracker.apply(c) {
            Step::Home(axes) => {
                for (i, homed) in axes.into_iter().enumerate() {
                    if homed {
                        at[i] = 0;
                    }
                }
            }
            Step::Move(m) => {
                let mut to = m.to;
                let mut rejected = false;
                for (i, axis) in Axis::XYZ.into_iter().enumerate() {
                    let max = profile.build_volume[i];
                    if (0.0..=max).contains(&to[i]) {
                        continue;
                    }
                    let clamped = to[i].clamp(0.0, max);
                    let what = match profile.out_of_bounds {
                        BoundsPolicy::Clamp => "clamped",
                        BoundsPolicy::Reject => {
                            rejected = true;
                            "move rejected"
                        }
                    };
                    out.diagnostics.push(Diagnostic {
                        line: c.source_line,
                        message: format!("{axis}{} outside build volume [0, {max}], {what}", to[i]),
                    });
                    to[i] = clamped;
                }
                if rejected {
                    to = m.from;
                }
                if to != m.to {
                    for (i, &v) in to.iter().enumerate() {
                        tracker.set_machine(Axis::ALL[i], v);
                    }
                }

                let mut steps = PerAxis::splat(0i64);
                let mut dirs = PerAxis::splat(true);
                for axis in Axis::ALL {
                    let i = axis.index();
                    let target = profile.to_steps(axis, to[i]);
                    let d = target - at[i];
                    at[i] = target;
                    steps.set(axis, d);
                    dirs.set(axis, d >= 0);
                }

                let d = |i: usize| to[i] - m.from[i];
                let mut dist = (d(0).powi(2) + d(1).powi(2) + d(2).powi(2)).sqrt();
                if dist == 0.0 {
                    dist = d(3).abs();
                }
                let floor = MotionSegment::min_duration(&steps, profile);
                let duration = if floor == 0 {
                    0
                } else {
                    seconds_to_ticks(dist / (m.feed / 60.0)).max(floor)
                };
                let feedrate = if duration == 0 {
                    0.0
                } else {
                    dist / crate::signals::ticks_to_seconds(duration)
                };
                out.segments.push(MotionSegment {
                    command_index: index,
                    steps,
                    dirs,
                    duration,
                    feedrate,
                });
            }
            Step::Other => {}
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gcode::parse_program;

    fn segs(text: &str) -> Vec<MotionSegment> {
        plan(&parse_program(text), &PrinterProfile::default()).segments
    }

    #[test]
    fn ten_mm_is_thousand_steps() {
        // round(10 * 100)
        let s = segs("G1 X10");
        assert_eq!(s[0].steps, PerAxis::new(1000, 0, 0, 0));
        assert!(s[0].dirs.x);
    }

    #[test]
    fn feed_only_is_a_dwell() {
        let s = segs("G1 F1800");
        assert_eq!(s.len(), 1);
        assert!(s[0].is_dwell());
        assert_eq!(s[0].duration, 0);
    }

    #[test]
    fn g92_then_extrude() {
        // round(5 * 280)
        let s = segs("G1 E3\nG92 E0\nG1 E5");
        assert_eq!(s[1].steps.e, 1400);
    }

    #[test]
    fn quantization_does_not_drift() {
        // 0.005 mm is half a step; a thousand of them must land on 5 mm.
        let text: String = (1..=1000)
            .map(|k| format!("G1 X{}\n", k as f64 * 0.005))
            .collect();
        let p = plan(&parse_program(&text), &PrinterProfile::default());
        assert_eq!(p.total_steps().x, 500);
    }

    #[test]
    fn duration_follows_feed_and_ceiling() {
        // 10 mm at 600 mm/min is one second.
        let s = segs("G1 X10 F600");
        assert_eq!(s[0].duration, seconds_to_ticks(1.0));
        // 100 mm at an absurd feed is capped at the X ceiling.
        let s = segs("G1 X100 F1000000");
        let p = PrinterProfile::default();
        assert_eq!(s[0].duration, 10_000 * (p.min_step_period(Axis::X) + 1));
    }

    #[test]
    fn retraction_uses_e_distance() {
        // 1 mm at 2400 mm/min.
        let s = segs("G1 E-1 F2400");
        assert_eq!(s[0].steps.e, -280);
        assert!(!s[0].dirs.e);
        assert_eq!(s[0].duration, seconds_to_ticks(1.0 / 40.0));
    }

    #[test]
    fn out_of_bounds_clamps_with_diagnostic() {
        let p = plan(
            &parse_program("G1 X250\nG91\nG1 X-10"),
            &PrinterProfile::default(),
        );
        assert_eq!(p.segments[0].steps.x, 20_000);
        assert_eq!(p.segments[1].steps.x, -1000);
        assert_eq!(p.diagnostics.len(), 1);
        assert_eq!(p.diagnostics[0].line, 1);
    }

    #[test]
    fn out_of_bounds_reject() {
        let profile = PrinterProfile {
            out_of_bounds: BoundsPolicy::Reject,
            ..PrinterProfile::default()
        };
        let p = plan(&parse_program("G1 X10\nG1 X-5 Y3\nG1 X20"), &profile);
        assert!(p.segments[1].is_dwell());
        assert_eq!(p.segments[2].steps.x, 1000);
        assert_eq!(p.total_steps().y, 0);
    }

    #[test]
    fn home_resets_position() {
        let s = segs("G1 X10 Y5\nG28 X\nG1 X3 Y5");
        assert_eq!(s[1].steps.x, 300);
        assert_eq!(s[1].steps.y, 0);
    }
}
