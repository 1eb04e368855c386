use super::{Command, CommandKind, Modes, Param, Positioning};
use crate::axis::Axis;

/// A resolved `G0`/`G1` in machine coordinates (mm).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MoveTarget {
    pub from: [f64; 4],
    pub to: [f64; 4],
    /// Modal feedrate after this command, mm/min.
    pub feed: f64,
    pub rapid: bool,
}

impl MoveTarget {
    pub fn delta(&self, axis: Axis) -> f64 {
        self.to[axis.index()] - self.from[axis.index()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Step {
    Move(MoveTarget),
    /// `G28`, with the axes it homes.
    Home([bool; 3]),
    /// Any command that does not change position.
    Other,
}

/// Modal interpreter state: positioning modes, feedrate and the `G92`
/// coordinate offset.
///
/// Machine coordinates are what the motors see; logical coordinates are what
/// the program writes. `machine = logical + offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tracker {
    modes: Modes,
    machine: [f64; 4],
    offset: [f64; 4],
    feed: f64,
}

impl Tracker {
    pub fn new(default_feed_mm_min: f64) -> Tracker {
        Tracker {
            modes: Modes::default(),
            machine: [0.0; 4],
            offset: [0.0; 4],
            feed: default_feed_mm_min,
        }
    }

    pub fn modes(&self) -> Modes {
        self.modes
    }

    pub fn machine(&self) -> [f64; 4] {
        self.machine
    }

    pub fn logical(&self) -> [f64; 4] {
        let mut l = self.machine;
        for (v, o) in l.iter_mut().zip(self.offset) {
            *v -= o;
        }
        l
    }

    pub fn feed(&self) -> f64 {
        self.feed
    }

    /// Overrides the machine position of one axis, e.g. after clamping.
    pub fn set_machine(&mut self, axis: Axis, mm: f64) {
        self.machine[axis.index()] = mm;
    }

    pub fn apply(&mut self, c: &Command) -> Step {
        self.modes.update(c.kind);
        match c.kind {
            CommandKind::Move { rapid } => {
                let from = self.machine;
                for axis in Axis::ALL {
                    let Some(v) = c.get(axis.param()) else {
                        continue;
                    };
                    let i = axis.index();
                    let relative = match axis {
                        Axis::E => self.modes.extrusion == Positioning::Relative,
                        _ => self.modes.motion == Positioning::Relative,
                    };
                    self.machine[i] = if relative {
                        self.machine[i] + v
                    } else {
                        v + self.offset[i]
                    };
                }
                if let Some(f) = c.get(Param::F) {
                    if f > 0.0 {
                        self.feed = f;
                    }
                }
                Step::Move(MoveTarget {
                    from,
                    to: self.machine,
                    feed: self.feed,
                    rapid,
                })
            }
            CommandKind::SetPosition => {
                for axis in Axis::ALL {
                    if let Some(v) = c.get(axis.param()) {
                        let i = axis.index();
                        self.offset[i] = self.machine[i] - v;
                    }
                }
                Step::Other
            }
            CommandKind::Home => {
                let any = [Param::X, Param::Y, Param::Z]
                    .iter()
                    .any(|p| c.params.contains_key(p));
                let mut homed = [false; 3];
                for (i, axis) in Axis::XYZ.into_iter().enumerate() {
                    if !any || c.params.contains_key(&axis.param()) {
                        homed[i] = true;
                        self.machine[i] = 0.0;
                        self.offset[i] = 0.0;
                    }
                }
                Step::Home(homed)
            }
            _ => Step::Other,
        }
    }
}
