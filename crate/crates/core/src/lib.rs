//! Signal-level simulation of a hobby FFF printer with a machine-in-the-middle
//! board: Trojan emulation on the motor and heater lines, step-count capture
//! and golden-model detection.

pub mod axis;
pub mod capture;
pub mod detector;
pub mod firmware;
pub mod flaw3d;
pub mod gcode;
pub mod pipeline;
pub mod plant;
pub mod signals;
pub mod trojans;

pub use axis::{Axis, PerAxis};
pub use capture::{capture, Transaction};
pub use detector::{compare, DetectionReport, Verdict};
pub use firmware::{simulate_print, PrinterProfile};
pub use flaw3d::{table2_suite, MutationSpec};
pub use gcode::{parse_program, serialize, Command, CommandKind, Program};
pub use pipeline::{run, Run};
pub use signals::{Event, Line, SignalTimeline, Tick};
pub use trojans::{TrojanConfig, TrojanId};
