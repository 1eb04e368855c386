//! Marlin-flavoured g-code: parsing, canonical serialization and modal
//! position tracking.
//!
//! The supported vocabulary is what a Cura slice for a Marlin target emits
//! (`G0 G1 G28 G90 G91 G92 M82 M83 M84 M104 M109 M140 M190 M106 M107`).
//! Anything else survives a parse/serialize cycle untouched as
//! [`CommandKind::Unknown`].

mod interp;
mod parse;
mod write;

use std::collections::BTreeMap;
use std::fmt;

pub use interp::{MoveTarget, Step, Tracker};
pub use parse::{parse_bytes, parse_line, parse_program};
pub use write::{format_number, serialize, serialize_command};

/// Parameter letters carried by supported commands.
///
/// The declaration order is the canonical output order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Param {
    X,
    Y,
    Z,
    E,
    F,
    S,
}

impl Param {
    pub fn from_letter(c: char) -> Option<Param> {
        match c.to_ascii_uppercase() {
            'X' => Some(Param::X),
            'Y' => Some(Param::Y),
            'Z' => Some(Param::Z),
            'E' => Some(Param::E),
            'F' => Some(Param::F),
            'S' => Some(Param::S),
            _ => None,
        }
    }

    pub fn letter(self) -> char {
        match self {
            Param::X => 'X',
            Param::Y => 'Y',
            Param::Z => 'Z',
            Param::E => 'E',
            Param::F => 'F',
            Param::S => 'S',
        }
    }
}

pub type Params = BTreeMap<Param, f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CommandKind {
    /// `G0` (rapid) or `G1`.
    Move {
        rapid: bool,
    },
    /// `G28`; axis letters without a value are stored as `0`.
    Home,
    /// `G92`
    SetPosition,
    /// `M104`
    SetHotendTemp,
    /// `M109`
    WaitHotendTemp,
    /// `M140`
    SetBedTemp,
    /// `M190`
    WaitBedTemp,
    /// `M106`
    FanOn,
    /// `M107`
    FanOff,
    /// `M84`; axis letters without a value are stored as `0`.
    MotorsOff,
    /// `G90`
    AbsolutePositioning,
    /// `G91`
    RelativePositioning,
    /// `M82`
    AbsoluteExtrusion,
    /// `M83`
    RelativeExtrusion,
    Comment,
    Unknown,
}

impl CommandKind {
    fn from_code(letter: char, number: u32) -> Option<CommandKind> {
        use CommandKind::*;
        let kind = match (letter, number) {
            ('G', 0) => Move { rapid: true },
            ('G', 1) => Move { rapid: false },
            ('G', 28) => Home,
            ('G', 90) => AbsolutePositioning,
            ('G', 91) => RelativePositioning,
            ('G', 92) => SetPosition,
            ('M', 82) => AbsoluteExtrusion,
            ('M', 83) => RelativeExtrusion,
            ('M', 84) => MotorsOff,
            ('M', 104) => SetHotendTemp,
            ('M', 106) => FanOn,
            ('M', 107) => FanOff,
            ('M', 109) => WaitHotendTemp,
            ('M', 140) => SetBedTemp,
            ('M', 190) => WaitBedTemp,
            _ => return None,
        };
        Some(kind)
    }

    /// The code word, e.g. `"G1"`. `None` for comments and unknown lines.
    pub fn code(self) -> Option<&'static str> {
        use CommandKind::*;
        Some(match self {
            Move { rapid: true } => "G0",
            Move { rapid: false } => "G1",
            Home => "G28",
            AbsolutePositioning => "G90",
            RelativePositioning => "G91",
            SetPosition => "G92",
            AbsoluteExtrusion => "M82",
            RelativeExtrusion => "M83",
            MotorsOff => "M84",
            SetHotendTemp => "M104",
            FanOn => "M106",
            FanOff => "M107",
            WaitHotendTemp => "M109",
            SetBedTemp => "M140",
            WaitBedTemp => "M190",
            Comment | Unknown => return None,
        })
    }

    /// Whether `p` may appear on a command of this kind.
    pub fn accepts(self, p: Param) -> bool {
        use CommandKind::*;
        use Param::*;
        match self {
            Move { .. } => matches!(p, X | Y | Z | E | F),
            Home => matches!(p, X | Y | Z),
            SetPosition => matches!(p, X | Y | Z | E),
            MotorsOff => matches!(p, X | Y | Z | E),
            SetHotendTemp | WaitHotendTemp | SetBedTemp | WaitBedTemp | FanOn => p == S,
            _ => false,
        }
    }

    /// Kinds whose axis letters act as bare flags (`G28 X Y`, `M84 E`).
    pub(crate) fn takes_flags(self) -> bool {
        matches!(self, CommandKind::Home | CommandKind::MotorsOff)
    }
}

/// One parsed line.
#[derive(Debug, Clone, PartialEq)]
pub struct Command {
    pub kind: CommandKind,
    pub params: Params,
    /// Text after `;`. For [`CommandKind::Comment`] this is the whole payload.
    pub comment: Option<String>,
    /// Verbatim line text, kept only for [`CommandKind::Unknown`].
    pub raw: Option<String>,
    /// Set when an otherwise recognised line had a malformed field.
    pub malformed: bool,
    /// 1-based.
    pub source_line: usize,
}

impl Command {
    pub fn new(kind: CommandKind) -> Command {
        Command {
            kind,
            params: Params::new(),
            comment: None,
            raw: None,
            malformed: false,
            source_line: 0,
        }
    }

    pub fn with(mut self, p: Param, v: f64) -> Command {
        self.params.insert(p, v);
        self
    }

    pub fn comment(text: impl Into<String>) -> Command {
        let mut c = Command::new(CommandKind::Comment);
        c.comment = Some(text.into());
        c
    }

    pub fn get(&self, p: Param) -> Option<f64> {
        self.params.get(&p).copied()
    }

    pub fn is_move(&self) -> bool {
        matches!(self.kind, CommandKind::Move { .. })
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&serialize_command(self))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Positioning {
    #[default]
    Absolute,
    Relative,
}

/// Modal positioning state: `G90/G91` for X/Y/Z, `M82/M83` for E.
///
/// `G90`/`G91` also set the extruder mode, as Marlin does.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Modes {
    pub motion: Positioning,
    pub extrusion: Positioning,
}

impl Modes {
    pub fn update(&mut self, kind: CommandKind) {
        match kind {
            CommandKind::AbsolutePositioning => {
                self.motion = Positioning::Absolute;
                self.extrusion = Positioning::Absolute;
            }
            CommandKind::RelativePositioning => {
                self.motion = Positioning::Relative;
                self.extrusion = Positioning::Relative;
            }
            CommandKind::AbsoluteExtrusion => self.extrusion = Positioning::Absolute,
            CommandKind::RelativeExtrusion => self.extrusion = Positioning::Relative,
            _ => {}
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct Program {
    pub commands: Vec<Command>,
    /// Modes in effect after the last command.
    pub positioning: Modes,
    pub diagnostics: Vec<Diagnostic>,
}

impl PartialEq for Program {
    fn eq(&self, other: &Program) -> bool {
        self.commands == other.commands && self.positioning == other.positioning
    }
}

impl Program {
    pub fn new(commands: Vec<Command>) -> Program {
        let mut positioning = Modes::default();
        for c in &commands {
            positioning.update(c.kind);
        }
        Program {
            commands,
            positioning,
            diagnostics: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.commands.len()
    }

    pub fn is_empty(&self) -> bool {
        self.commands.is_empty()
    }

    /// Renumbers `source_line` to match the line layout [`serialize`]
    /// produces, so that `parse_program(&serialize(p)) == p.normalize()`.
    pub fn normalize(&self) -> Program {
        let mut out = self.clone();
        for (i, c) in out.commands.iter_mut().enumerate() {
            c.source_line = i + 1;
        }
        out.diagnostics.clear();
        out
    }

    /// Commands paired with the modes in effect when each one executes.
    pub fn with_modes(&self) -> impl Iterator<Item = (Modes, &Command)> {
        let mut modes = Modes::default();
        self.commands.iter().map(move |c| {
            let before = modes;
            modes.update(c.kind);
            (before, c)
        })
    }
}
