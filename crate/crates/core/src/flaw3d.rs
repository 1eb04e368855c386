//! G-code level emulation of the Flaw3D bootloader Trojans: quietly reduce
//! extrusion, or strip material from every n-th extruding move and deposit
//! it a few millimetres away.
//!
//! An extruding move is a `G0`/`G1` that pushes filament (positive ΔE) while
//! moving in X or Y. Primes, retractions and unretractions are left alone.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::axis::Axis;
use crate::gcode::{Command, CommandKind, Param, Positioning, Program, Step, Tracker};

/// E words are rewritten to this many decimals.
pub const E_DECIMALS: i32 = 5;
pub const DEFAULT_OFFSET: (f64, f64) = (5.0, 5.0);

#[derive(Debug, Error, PartialEq)]
pub enum MutationError {
    #[error("reduction factor must be in (0, 1], got {0}")]
    Factor(f64),
    #[error("relocation cadence must be at least 1")]
    Cadence,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MutationKind {
    Reduction { factor: f64 },
    Relocation { n_moves: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MutationSpec {
    pub kind: MutationKind,
    pub relocation_offset: (f64, f64),
}

impl MutationSpec {
    pub fn reduction(factor: f64) -> MutationSpec {
        MutationSpec {
            kind: MutationKind::Reduction { factor },
            relocation_offset: DEFAULT_OFFSET,
        }
    }

    pub fn relocation(n_moves: u32) -> MutationSpec {
        MutationSpec {
            kind: MutationKind::Relocation { n_moves },
            relocation_offset: DEFAULT_OFFSET,
        }
    }

    pub fn validate(&self) -> Result<(), MutationError> {
        match self.kind {
            MutationKind::Reduction { factor } if !(factor > 0.0 && factor <= 1.0) => {
                Err(MutationError::Factor(factor))
            }
            MutationKind::Relocation { n_moves: 0 } => Err(MutationError::Cadence),
            _ => Ok(()),
        }
    }

    /// `volume` is the XY build area the relocation must stay inside.
    pub fn apply(&self, program: &Program, volume: [f64; 2]) -> Result<Program, MutationError> {
        self.validate()?;
        Ok(match self.kind {
            MutationKind::Reduction { factor } => reduce_extrusion(program, factor),
            MutationKind::Relocation { n_moves } => {
                relocate(program, n_moves, self.relocation_offset, volume)
            }
        })
    }

    pub fn type_name(&self) -> &'static str {
        match self.kind {
            MutationKind::Reduction { .. } => "reduction",
            MutationKind::Relocation { .. } => "relocation",
        }
    }

    pub fn value(&self) -> f64 {
        match self.kind {
            MutationKind::Reduction { factor } => factor,
            MutationKind::Relocation { n_moves } => f64::from(n_moves),
        }
    }
}

impl fmt::Display for MutationSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            MutationKind::Reduction { factor } => write!(f, "reduction x{factor}"),
            MutationKind::Relocation { n_moves } => write!(f, "relocation every {n_moves} moves"),
        }
    }
}

/// The eight test cases, numbered from 1.
pub fn table2_suite() -> Vec<(u32, MutationSpec)> {
    let mut out: Vec<MutationSpec> = [0.5, 0.85, 0.9, 0.98]
        .into_iter()
        .map(MutationSpec::reduction)
        .collect();
    out.extend([5, 10, 20, 100].into_iter().map(MutationSpec::relocation));
    out.into_iter().zip(1..).map(|(s, i)| (i, s)).collect()
}

fn round_e(v: f64) -> f64 {
    let k = 10f64.powi(E_DECIMALS);
    let r = (v * k).round() / k;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

/// Walks a program with the interpreter and keeps absolute E words
/// consistent with whatever the caller did to earlier extruding moves.
struct Rewriter {
    tracker: Tracker,
    /// Mutated logical E minus original logical E.
    shift: f64,
    out: Vec<Command>,
    extruding: usize,
}

impl Rewriter {
    fn new() -> Rewriter {
        Rewriter {
            tracker: Tracker::new(1500.0),
            shift: 0.0,
            out: Vec::new(),
            extruding: 0,
        }
    }

    fn e_relative(&self) -> bool {
        self.tracker.modes().extrusion == Positioning::Relative
    }

    fn xy_relative(&self) -> bool {
        self.tracker.modes().motion == Positioning::Relative
    }

    /// Feeds one original command; returns its ΔE if it is an extruding move.
    fn interpret(&mut self, c: &Command) -> Option<f64> {
        let step = self.tracker.apply(c);
        if c.kind == CommandKind::SetPosition && c.params.contains_key(&Param::E) {
            self.shift = 0.0;
        }
        match step {
            Step::Move(m) => {
                let de = m.delta(Axis::E);
                let xy = m.delta(Axis::X) != 0.0 || m.delta(Axis::Y) != 0.0;
                (de > 0.0 && xy && c.get(Param::E).is_some()).then_some(de)
            }
            _ => None,
        }
    }

    /// Emits `c` with its E word set so the mutated extruder moves `new_de`
    /// (or, if `None`, drops the E word).
    fn emit_extrusion(&mut self, c: &Command, old_de: f64, new_de: Option<f64>) {
        let mut c = c.clone();
        let de = new_de.unwrap_or(0.0);
        if self.e_relative() {
            match new_de {
                Some(v) => c.params.insert(Param::E, round_e(v)),
                None => c.params.remove(&Param::E),
            };
            self.shift += de - old_de;
        } else {
            self.shift += de - old_de;
            match new_de {
                Some(_) => {
                    let orig = c.get(Param::E).unwrap();
                    c.params.insert(Param::E, round_e(orig + self.shift));
                }
                None => {
                    c.params.remove(&Param::E);
                }
            }
        }
        self.out.push(c);
    }

    fn emit_other(&mut self, c: &Command) {
        let mut c = c.clone();
        if c.is_move() && !self.e_relative() && self.shift != 0.0 {
            if let Some(e) = c.get(Param::E) {
                c.params.insert(Param::E, round_e(e + self.shift));
            }
        }
        self.out.push(c);
    }

    fn finish(self, program: &Program) -> Program {
        let mut p = Program::new(self.out);
        p.diagnostics = program.diagnostics.clone();
        p.normalize()
    }
}

/// Scales every extruding move's ΔE by `factor`.
pub fn reduce_extrusion(program: &Program, factor: f64) -> Program {
    let mut rw = Rewriter::new();
    for c in &program.commands {
        match rw.interpret(c) {
            Some(de) => rw.emit_extrusion(c, de, Some(de * factor)),
            None => rw.emit_other(c),
        }
    }
    rw.finish(program)
}

fn reflect(at: f64, d: f64, max: f64) -> f64 {
    if (0.0..=max).contains(&(at + d)) {
        d
    } else {
        -d
    }
}

/// Turns every `n`-th extruding move into a travel and deposits its
/// filament at the move's end point plus `offset`, then returns.
pub fn relocate(program: &Program, n_moves: u32, offset: (f64, f64), volume: [f64; 2]) -> Program {
    let n = n_moves.max(1) as usize;
    let mut rw = Rewriter::new();
    for c in &program.commands {
        let Some(de) = rw.interpret(c) else {
            rw.emit_other(c);
            continue;
        };
        rw.extruding += 1;
        if !rw.extruding.is_multiple_of(n) {
            rw.emit_extrusion(c, de, Some(de));
            continue;
        }
        rw.emit_extrusion(c, de, None);
        let machine = rw.tracker.machine();
        let logical = rw.tracker.logical();
        let dx = reflect(machine[0], offset.0, volume[0]);
        let dy = reflect(machine[1], offset.1, volume[1]);
        let travel = |x: f64, y: f64| {
            Command::new(CommandKind::Move { rapid: true })
                .with(Param::X, x)
                .with(Param::Y, y)
        };
        let (away, back) = if rw.xy_relative() {
            (travel(dx, dy), travel(-dx, -dy))
        } else {
            (
                travel(logical[0] + dx, logical[1] + dy),
                travel(logical[0], logical[1]),
            )
        };
        rw.out.push(away);
        // Put the filament back: the deposit restores the original E.
        rw.shift += de;
        let e_word = if rw.e_relative() {
            de
        } else {
            logical[3] + rw.shift
        };
        rw.out
            .push(Command::new(CommandKind::Move { rapid: false }).with(Param::E, round_e(e_word)));
        rw.out.push(back);
    }
    rw.finish(program)
}

/// Sum of ΔE over extruding moves.
pub fn extruded_total(program: &Program) -> f64 {
    let mut rw = Rewriter::new();
    program
        .commands
        .iter()
        .filter_map(|c| rw.interpret(c))
        .sum()
}

/// Net ΔE over the whole program, every move included.
pub fn net_extrusion(program: &Program) -> f64 {
    let mut t = Tracker::new(1500.0);
    let mut total = 0.0;
    for c in &program.commands {
        if let Step::Move(m) = t.apply(c) {
            total += m.delta(Axis::E);
        }
    }
    total
}
