use std::collections::VecDeque;
use std::fmt;

use serde::Serialize;

use super::profile::{HeaterProfile, ThermalSafety};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum ThermalFault {
    /// Powered for the whole watch period without warming up.
    Runaway {
        rise: f64,
        duty: f64,
    },
    MaxTemp {
        temp: f64,
    },
}

impl fmt::Display for ThermalFault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ThermalFault::Runaway { rise, duty } => {
                write!(
                    f,
                    "thermal runaway: rose {rise:.2} °C at {:.0}% duty",
                    duty * 100.0
                )
            }
            ThermalFault::MaxTemp { temp } => write!(f, "MAXTEMP: {temp:.1} °C"),
        }
    }
}

/// Checks sampled history at a fixed cadence. `duty_history[i]` is the
/// heater duty over the interval ending at `temp_history[i]`. The watch
/// period spans the last `window` samples.
pub fn thermal_runaway_check(
    temp_history: &[f64],
    duty_history: &[f64],
    window: usize,
    safety: &ThermalSafety,
    heater: &HeaterProfile,
) -> Option<ThermalFault> {
    let &last = temp_history.last()?;
    if last > heater.max_temp {
        return Some(ThermalFault::MaxTemp { temp: last });
    }
    let n = temp_history.len().min(duty_history.len());
    if window == 0 || n <= window {
        return None;
    }
    let duty = duty_history[n - window..n].iter().sum::<f64>() / window as f64;
    let rise = temp_history[n - 1] - temp_history[n - 1 - window];
    (duty >= safety.min_duty && rise < safety.min_rise_c)
        .then_some(ThermalFault::Runaway { rise, duty })
}

/// Streaming form of [`thermal_runaway_check`].
#[derive(Debug, Clone)]
pub struct RunawayMonitor {
    safety: ThermalSafety,
    heater: HeaterProfile,
    window: usize,
    temps: VecDeque<f64>,
    duties: VecDeque<f64>,
    duty_sum: f64,
}

impl RunawayMonitor {
    pub fn new(safety: ThermalSafety, heater: HeaterProfile) -> RunawayMonitor {
        let window = (safety.watch_period_s / safety.sample_period_s)
            .round()
            .max(1.0) as usize;
        RunawayMonitor {
            safety,
            heater,
            window,
            temps: VecDeque::with_capacity(window + 1),
            duties: VecDeque::with_capacity(window),
            duty_sum: 0.0,
        }
    }

    /// Restarts the watch period, e.g. on a new target.
    pub fn reset(&mut self) {
        self.temps.clear();
        self.duties.clear();
        self.duty_sum = 0.0;
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn sample(&mut self, temp: f64, duty: f64) -> Option<ThermalFault> {
        if temp > self.heater.max_temp {
            return Some(ThermalFault::MaxTemp { temp });
        }
        self.temps.push_back(temp);
        if self.temps.len() > self.window + 1 {
            self.temps.pop_front();
        }
        self.duties.push_back(duty);
        self.duty_sum += duty;
        if self.duties.len() > self.window {
            self.duty_sum -= self.duties.pop_front().unwrap();
        }
        if self.temps.len() <= self.window {
            return None;
        }
        // Recomputed rather than trusting the running sum's rounding.
        let duty: f64 = self.duties.iter().sum::<f64>() / self.window as f64;
        let rise = temp - self.temps[0];
        (duty >= self.safety.min_duty && rise < self.safety.min_rise_c)
            .then_some(ThermalFault::Runaway { rise, duty })
    }
}
