use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::axis::{Axis, PerAxis};
use crate::signals::{seconds_to_ticks, Tick, MIN_STEP_PERIOD, TICKS_PER_SECOND};

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error("reading profile {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing profile: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid profile: {0}")]
    Invalid(String),
}

/// First-order heater constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeaterProfile {
    /// °C; above this the element is considered damaged and firmware halts.
    pub max_temp: f64,
    pub ambient: f64,
    /// °C/s gained at 100% duty, before losses.
    pub heat_rate: f64,
    /// Newtonian cooling time constant, seconds.
    pub cool_time_constant: f64,
}

impl HeaterProfile {
    /// Steady-state temperature at the given duty.
    pub fn equilibrium(&self, duty: f64) -> f64 {
        self.ambient + self.heat_rate * duty * self.cool_time_constant
    }
}

/// Thermal-runaway watchdog and bang-bang controller settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThermalSafety {
    pub watch_period_s: f64,
    pub min_rise_c: f64,
    pub min_duty: f64,
    pub hysteresis_c: f64,
    /// Control and watchdog cadence.
    pub sample_period_s: f64,
    /// `M109`/`M190` finish once within this many °C of target.
    pub temp_window_c: f64,
    /// Give up on an `M109`/`M190` after this long.
    pub max_wait_s: f64,
}

impl Default for ThermalSafety {
    fn default() -> Self {
        ThermalSafety {
            watch_period_s: 40.0,
            min_rise_c: 2.0,
            min_duty: 0.5,
            hysteresis_c: 2.0,
            sample_period_s: 0.1,
            temp_window_c: 1.0,
            max_wait_s: 1800.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundsPolicy {
    #[default]
    Clamp,
    Reject,
}

/// Kinematic and thermal calibration of the simulated printer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrinterProfile {
    pub steps_per_mm: PerAxis<f64>,
    /// mm/s
    pub max_feedrate: PerAxis<f64>,
    pub microstep_factor: PerAxis<u32>,
    /// mm
    pub build_volume: [f64; 3],
    pub homing_order: Vec<Axis>,
    /// mm/s, gantry axes only.
    pub homing_feedrate: [f64; 3],
    /// Back-off distance when an endstop is already pressed, mm.
    pub homing_bump: [f64; 3],
    /// Where the head sits when power comes on, mm.
    pub start_position: [f64; 3],
    /// mm/min, used until the first `F` word.
    pub default_feedrate: f64,
    pub out_of_bounds: BoundsPolicy,
    /// Half-width of the uniform per-segment timing jitter, as a fraction.
    pub time_noise: f64,
    pub hotend: HeaterProfile,
    pub bed: HeaterProfile,
    pub thermal: ThermalSafety,
    pub fan_max_duty: u32,
    pub fan_pwm_period_s: f64,
}

impl Default for PrinterProfile {
    fn default() -> Self {
        PrinterProfile {
            steps_per_mm: PerAxis::new(100.0, 100.0, 400.0, 280.0),
            max_feedrate: PerAxis::new(200.0, 200.0, 5.0, 50.0),
            microstep_factor: PerAxis::splat(16),
            build_volume: [200.0, 200.0, 180.0],
            homing_order: vec![Axis::X, Axis::Y, Axis::Z],
            homing_feedrate: [50.0, 50.0, 4.0],
            homing_bump: [5.0, 5.0, 2.0],
            start_position: [60.0, 45.0, 12.0],
            default_feedrate: 1500.0,
            out_of_bounds: BoundsPolicy::Clamp,
            time_noise: 0.01,
            hotend: HeaterProfile {
                max_temp: 275.0,
                ambient: 25.0,
                heat_rate: 12.0,
                cool_time_constant: 60.0,
            },
            bed: HeaterProfile {
                max_temp: 150.0,
                ambient: 25.0,
                heat_rate: 1.0,
                cool_time_constant: 300.0,
            },
            thermal: ThermalSafety::default(),
            fan_max_duty: 255,
            fan_pwm_period_s: 0.1,
        }
    }
}

impl PrinterProfile {
    pub fn from_toml(text: &str) -> Result<PrinterProfile, ProfileError> {
        let p: PrinterProfile = toml::from_str(text)?;
        p.validate()?;
        Ok(p)
    }

    pub fn load(path: &Path) -> Result<PrinterProfile, ProfileError> {
        let text = std::fs::read_to_string(path).map_err(|source| ProfileError::Io {
            path: path.display().to_string(),
            source,
        })?;
        PrinterProfile::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("profile serializes")
    }

    /// The same printer with timing jitter switched off.
    pub fn noiseless(&self) -> PrinterProfile {
        PrinterProfile {
            time_noise: 0.0,
            ..self.clone()
        }
    }

    pub fn has_axis(&self, axis: Axis) -> bool {
        self.steps_per_mm.get(axis) > 0.0
    }

    pub fn validate(&self) -> Result<(), ProfileError> {
        let bad = |m: String| Err(ProfileError::Invalid(m));
        for axis in Axis::ALL {
            let spm = self.steps_per_mm.get(axis);
            if !(spm > 0.0 && spm.is_finite()) {
                return bad(format!(
                    "steps_per_mm.{} must be > 0",
                    axis.to_string().to_lowercase()
                ));
            }
            if !(self.max_feedrate.get(axis) > 0.0) {
                return bad(format!(
                    "max_feedrate.{} must be > 0",
                    axis.to_string().to_lowercase()
                ));
            }
            if !matches!(self.microstep_factor.get(axis), 1 | 2 | 4 | 8 | 16) {
                return bad(format!(
                    "microstep_factor.{} must be 1, 2, 4, 8 or 16",
                    axis.to_string().to_lowercase()
                ));
            }
        }
        let mut seen = [false; 3];
        for &a in &self.homing_order {
            if !a.is_gantry() {
                return bad("homing_order may only name X, Y and Z".into());
            }
            if std::mem::replace(&mut seen[a.index()], true) {
                return bad(format!("homing_order repeats {a}"));
            }
        }
        for i in 0..3 {
            if !(self.build_volume[i] > 0.0)
                || !(self.homing_feedrate[i] > 0.0)
                || self.homing_bump[i] < 0.0
            {
                return bad(
                    "build_volume, homing_feedrate and homing_bump must be positive".into(),
                );
            }
            if self.start_position[i] < 0.0 || self.start_position[i] > self.build_volume[i] {
                return bad("start_position must lie inside build_volume".into());
            }
        }
        for (name, h) in [("hotend", &self.hotend), ("bed", &self.bed)] {
            if !(h.max_temp > h.ambient) {
                return bad(format!("{name}.max_temp must exceed ambient"));
            }
            if !(h.heat_rate > 0.0 && h.cool_time_constant > 0.0) {
                return bad(format!(
                    "{name} heat_rate and cool_time_constant must be > 0"
                ));
            }
        }
        if !(0.0..0.25).contains(&self.time_noise) {
            return bad("time_noise must be in [0, 0.25)".into());
        }
        if !(self.default_feedrate > 0.0) {
            return bad("default_feedrate must be > 0".into());
        }
        if self.fan_max_duty == 0 || !(self.fan_pwm_period_s > 0.0) {
            return bad("fan_max_duty and fan_pwm_period_s must be > 0".into());
        }
        let t = &self.thermal;
        if !(t.sample_period_s > 0.0 && t.watch_period_s >= t.sample_period_s) {
            return bad("thermal.sample_period_s must be > 0 and <= watch_period_s".into());
        }
        Ok(())
    }

    /// Shortest legal interval between two step pulses on `axis`: the
    /// feedrate ceiling or the 20 kHz driver envelope, whichever is slower.
    pub fn min_step_period(&self, axis: Axis) -> Tick {
        let by_feed =
            TICKS_PER_SECOND as f64 / (self.steps_per_mm.get(axis) * self.max_feedrate.get(axis));
        (by_feed.ceil() as Tick).max(MIN_STEP_PERIOD)
    }

    pub fn homing_step_period(&self, axis: Axis) -> Tick {
        let i = axis.index();
        let by_feed =
            TICKS_PER_SECOND as f64 / (self.steps_per_mm.get(axis) * self.homing_feedrate[i]);
        (by_feed.ceil() as Tick).max(self.min_step_period(axis))
    }

    pub fn heater(&self, bed: bool) -> &HeaterProfile {
        if bed {
            &self.bed
        } else {
            &self.hotend
        }
    }

    pub fn thermal_tick(&self) -> Tick {
        seconds_to_ticks(self.thermal.sample_period_s).max(1)
    }

    pub fn fan_period(&self) -> Tick {
        seconds_to_ticks(self.fan_pwm_period_s).max(1)
    }

    /// Machine position in whole steps for a gantry coordinate in mm.
    pub fn to_steps(&self, axis: Axis, mm: f64) -> i64 {
        (mm * self.steps_per_mm.get(axis)).round() as i64
    }

    pub fn to_mm(&self, axis: Axis, steps: i64) -> f64 {
        steps as f64 / self.steps_per_mm.get(axis)
    }
}
