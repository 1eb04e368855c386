use crate::axis::Axis;
use crate::signals::{Event, SignalTimeline, Tick};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HomingState {
    Idle,
    /// This many axes of the homing order have closed their switch.
    Seen(usize),
    Homed,
}

/// Watches endstop rising edges for the configured homing order.
///
/// Advances only on the next expected axis; anything else is ignored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HomingFsm {
    order: Vec<Axis>,
    seen: usize,
    homed_at: Option<Tick>,
}

impl HomingFsm {
    pub fn new(order: &[Axis]) -> HomingFsm {
        HomingFsm {
            order: order.to_vec(),
            seen: 0,
            homed_at: order.is_empty().then_some(0),
        }
    }

    pub fn state(&self) -> HomingState {
        if self.homed_at.is_some() {
            HomingState::Homed
        } else if self.seen == 0 {
            HomingState::Idle
        } else {
            HomingState::Seen(self.seen)
        }
    }

    pub fn homed_at(&self) -> Option<Tick> {
        self.homed_at
    }

    pub fn is_homed(&self) -> bool {
        self.homed_at.is_some()
    }

    /// Feeds one endstop actuation.
    pub fn step(&mut self, axis: Axis, t: Tick) -> HomingState {
        if self.homed_at.is_none() && self.order.get(self.seen) == Some(&axis) {
            self.seen += 1;
            if self.seen == self.order.len() {
                self.homed_at = Some(t);
            }
        }
        self.state()
    }

    /// Feeds any edge; only endstop rising edges matter.
    pub fn observe(&mut self, e: &Event) -> HomingState {
        match e.line.endstop_axis() {
            Some(axis) if e.high => self.step(axis, e.t),
            _ => self.state(),
        }
    }

    /// Index into `timeline.events` of the edge that completed homing.
    pub fn scan(order: &[Axis], timeline: &SignalTimeline) -> Option<(usize, Tick)> {
        let mut fsm = HomingFsm::new(order);
        if fsm.is_homed() {
            return Some((0, 0));
        }
        for (i, e) in timeline.iter().enumerate() {
            if fsm.observe(e) == HomingState::Homed {
                return Some((i, e.t));
            }
        }
        None
    }
}

/// Functional form of [`HomingFsm::step`].
pub fn fsm_step(mut fsm: HomingFsm, axis: Axis, t: Tick) -> HomingFsm {
    fsm.step(axis, t);
    fsm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::firmware::{home, PrinterProfile};
    use crate::plant::Plant;
    use crate::signals::Line;

    #[test]
    fn x_moves_idle_to_seen() {
        let f = fsm_step(HomingFsm::new(&[Axis::X, Axis::Y, Axis::Z]), Axis::X, 5);
        assert_eq!(f.state(), HomingState::Seen(1));
    }

    #[test]
    fn out_of_order_is_ignored() {
        let f = fsm_step(HomingFsm::new(&[Axis::X, Axis::Y, Axis::Z]), Axis::Z, 5);
        assert_eq!(f.state(), HomingState::Idle);
        let f = fsm_step(fsm_step(f, Axis::X, 6), Axis::X, 7);
        assert_eq!(f.state(), HomingState::Seen(1));
    }

    #[test]
    fn homed_at_z_edge_of_real_homing() {
        let p = PrinterProfile::default();
        let mut plant = Plant::new(&p);
        let tl = home(&p, &mut plant).unwrap();
        let z = tl
            .iter()
            .find(|e| e.line == Line::EndstopZ && e.high)
            .unwrap()
            .t;
        let (_, t) = HomingFsm::scan(&p.homing_order, &tl).unwrap();
        assert_eq!(t, z);
    }

    #[test]
    fn falling_edges_do_nothing() {
        let mut f = HomingFsm::new(&[Axis::X]);
        assert_eq!(
            f.observe(&Event::new(3, Line::EndstopX, false)),
            HomingState::Idle
        );
        assert_eq!(
            f.observe(&Event::new(4, Line::EndstopX, true)),
            HomingState::Homed
        );
        assert_eq!(f.homed_at(), Some(4));
        assert_eq!(
            f.observe(&Event::new(9, Line::EndstopY, true)),
            HomingState::Homed
        );
    }
}
