//! The controller board: plans g-code into timed step, direction, enable,
//! heater and fan edges, homes against the endstops and runs bang-bang
//! temperature control with thermal-runaway protection.

mod planner;
mod profile;
mod sim;
mod thermal;

pub use planner::{plan, MotionSegment, Plan};
pub use profile::{BoundsPolicy, HeaterProfile, PrinterProfile, ProfileError, ThermalSafety};
pub use sim::{
    home, simulate_print, simulate_print_with, DirectHeaters, FirmwareError, FirmwareEvent,
    FirmwareEventKind, HeaterTap, SimOutput,
};
pub use thermal::{thermal_runaway_check, RunawayMonitor, ThermalFault};
