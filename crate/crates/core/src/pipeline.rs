//! One print end to end: firmware, Trojan board, motors and heaters, and the
//! monitoring capture.

use thiserror::Error;

use crate::capture::{capture, CaptureError, Transaction};
use crate::firmware::{simulate_print_with, FirmwareError, PrinterProfile, SimOutput};
use crate::gcode::Program;
use crate::plant::{apply_timeline_until, PlantRun};
use crate::signals::seconds_to_ticks;
use crate::trojans::{apply, Applied, HeaterForcing, TrojanConfig, TrojanError};

/// How long the plant keeps running after the last edge, so that a heater
/// left on has time to do damage.
pub const PLANT_TAIL_S: f64 = 30.0;

#[derive(Debug, Error, PartialEq)]
pub enum PipelineError {
    #[error(transparent)]
    Firmware(#[from] FirmwareError),
    #[error(transparent)]
    Trojan(#[from] TrojanError),
    #[error(transparent)]
    Capture(#[from] CaptureError),
}

#[derive(Debug, Clone)]
pub struct Run {
    /// What the controller board emitted.
    pub sim: SimOutput,
    /// What reached the drivers.
    pub trojans: Applied,
    pub plant: PlantRun,
    pub capture: Vec<Transaction>,
}

pub fn run(
    program: &Program,
    profile: &PrinterProfile,
    trojans: &TrojanConfig,
    seed: u64,
) -> Result<Run, PipelineError> {
    trojans.validate(profile)?;
    let mut tap = HeaterForcing::new(trojans, profile);
    let sim = simulate_print_with(program, profile, seed, &mut tap)?;
    let applied = apply(&sim.timeline, trojans, profile)?;
    let horizon = applied.timeline.end_time() + seconds_to_ticks(PLANT_TAIL_S);
    let plant = apply_timeline_until(&applied.timeline, profile, horizon);
    let capture = capture(&applied.timeline, profile)?;
    Ok(Run {
        sim,
        trojans: applied,
        plant,
        capture,
    })
}

/// Untampered run.
pub fn golden(
    program: &Program,
    profile: &PrinterProfile,
    seed: u64,
) -> Result<Run, PipelineError> {
    run(program, profile, &TrojanConfig::bypass(), seed)
}
