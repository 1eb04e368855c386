use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::TrojanError;
use crate::axis::Axis;
use crate::firmware::PrinterProfile;
use crate::signals::Line;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TrojanId {
    T1,
    T2,
    T3,
    T4,
    T5,
    T6,
    T7,
    T8,
    T9,
}

impl TrojanId {
    pub const ALL: [TrojanId; 9] = [
        TrojanId::T1,
        TrojanId::T2,
        TrojanId::T3,
        TrojanId::T4,
        TrojanId::T5,
        TrojanId::T6,
        TrojanId::T7,
        TrojanId::T8,
        TrojanId::T9,
    ];

    pub fn number(self) -> u8 {
        self as u8 + 1
    }

    /// Short description of the effect.
    pub fn effect(self) -> &'static str {
        match self {
            TrojanId::T1 => "random X/Y shift every period",
            TrojanId::T2 => "halve extrusion",
            TrojanId::T3 => "extra or missing filament during Y moves",
            TrojanId::T4 => "small X/Y shift on random layers",
            TrojanId::T5 => "Z shift",
            TrojanId::T6 => "heater disabled",
            TrojanId::T7 => "heater stuck on",
            TrojanId::T8 => "motor disabled",
            TrojanId::T9 => "part fan slowed",
        }
    }

    pub fn is_stochastic(self) -> bool {
        matches!(self, TrojanId::T1 | TrojanId::T4)
    }
}

impl fmt::Display for TrojanId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "T{}", self.number())
    }
}

impl FromStr for TrojanId {
    type Err = String;

    fn from_str(s: &str) -> Result<TrojanId, String> {
        let s = s.trim();
        let n = s
            .strip_prefix(['T', 't'])
            .and_then(|n| n.parse::<usize>().ok())
            .filter(|n| (1..=9).contains(n))
            .ok_or_else(|| format!("unknown Trojan {s:?} (expected T1..T9)"))?;
        Ok(TrojanId::ALL[n - 1])
    }
}

impl Serialize for TrojanId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TrojanId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<TrojanId, D::Error> {
        String::deserialize(d)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct T1Params {
    pub period_s: f64,
    pub max_shift_steps: u32,
}

impl Default for T1Params {
    fn default() -> Self {
        T1Params {
            period_s: 10.0,
            max_shift_steps: 400,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskMode {
    #[default]
    EveryOther,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct T2Params {
    pub mask_mode: MaskMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum T3Mode {
    #[default]
    Over,
    Under,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct T3Params {
    pub mode: T3Mode,
    pub extra_e_steps_per_y_burst: u32,
}

impl Default for T3Params {
    fn default() -> Self {
        T3Params {
            mode: T3Mode::Over,
            extra_e_steps_per_y_burst: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct T4Params {
    /// Inclusive range of layers between shifts.
    pub layer_increment_rng: [u32; 2],
    pub shift_steps: u32,
    pub axes: Vec<Axis>,
}

impl Default for T4Params {
    fn default() -> Self {
        T4Params {
            layer_increment_rng: [2, 10],
            shift_steps: 300,
            axes: vec![Axis::X, Axis::Y],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftAt {
    Start,
    /// After the n-th layer change, counting from 1.
    Layer(u32),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct T5Params {
    pub z_shift_steps: u32,
    pub at: ShiftAt,
}

impl Default for T5Params {
    fn default() -> Self {
        T5Params {
            z_shift_steps: 200,
            at: ShiftAt::Layer(3),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeaterTargets {
    pub targets: Vec<Line>,
}

impl Default for HeaterTargets {
    fn default() -> Self {
        HeaterTargets {
            targets: vec![Line::HeatHotend],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct T8Params {
    pub axis: Axis,
    /// `(off_from, off_until)` in seconds after homing.
    pub toggle_schedule: Vec<(f64, f64)>,
}

impl Default for T8Params {
    fn default() -> Self {
        T8Params {
            axis: Axis::X,
            toggle_schedule: vec![(60.0, 63.0)],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct T9Params {
    pub duty_scale: f64,
}

impl Default for T9Params {
    fn default() -> Self {
        T9Params { duty_scale: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrojanConfig {
    pub enabled: BTreeSet<TrojanId>,
    pub seed: Option<u64>,
    pub t1: Option<T1Params>,
    pub t2: Option<T2Params>,
    pub t3: Option<T3Params>,
    pub t4: Option<T4Params>,
    pub t5: Option<T5Params>,
    pub t6: Option<HeaterTargets>,
    pub t7: Option<HeaterTargets>,
    pub t8: Option<T8Params>,
    pub t9: Option<T9Params>,
}

impl TrojanConfig {
    /// Bypass: every Trojan off.
    pub fn bypass() -> TrojanConfig {
        TrojanConfig::default()
    }

    /// Enables `ids` with default parameters.
    pub fn with_defaults(ids: &[TrojanId], seed: u64) -> TrojanConfig {
        let mut c = TrojanConfig {
            seed: Some(seed),
            ..TrojanConfig::default()
        };
        for &id in ids {
            c.enable(id);
        }
        c
    }

    /// Turns `id` on, filling in default parameters if none are set.
    pub fn enable(&mut self, id: TrojanId) {
        self.enabled.insert(id);
        match id {
            TrojanId::T1 => _ = self.t1.get_or_insert_with(Default::default),
            TrojanId::T2 => _ = self.t2.get_or_insert_with(Default::default),
            TrojanId::T3 => _ = self.t3.get_or_insert_with(Default::default),
            TrojanId::T4 => _ = self.t4.get_or_insert_with(Default::default),
            TrojanId::T5 => _ = self.t5.get_or_insert_with(Default::default),
            TrojanId::T6 => _ = self.t6.get_or_insert_with(Default::default),
            TrojanId::T7 => _ = self.t7.get_or_insert_with(Default::default),
            TrojanId::T8 => _ = self.t8.get_or_insert_with(Default::default),
            TrojanId::T9 => _ = self.t9.get_or_insert_with(Default::default),
        }
    }

    pub fn is_enabled(&self, id: TrojanId) -> bool {
        self.enabled.contains(&id)
    }

    pub fn from_toml(text: &str) -> Result<TrojanConfig, TrojanError> {
        toml::from_str(text).map_err(|e| TrojanError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<TrojanConfig, TrojanError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| TrojanError::Config(format!("reading {}: {e}", path.display())))?;
        TrojanConfig::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Rejects incomplete or inconsistent configurations before a run.
    pub fn validate(&self, profile: &PrinterProfile) -> Result<(), TrojanError> {
        let bad = |m: String| Err(TrojanError::Config(m));
        for &id in &self.enabled {
            let present = match id {
                TrojanId::T1 => self.t1.is_some(),
                TrojanId::T2 => self.t2.is_some(),
                TrojanId::T3 => self.t3.is_some(),
                TrojanId::T4 => self.t4.is_some(),
                TrojanId::T5 => self.t5.is_some(),
                TrojanId::T6 => self.t6.is_some(),
                TrojanId::T7 => self.t7.is_some(),
                TrojanId::T8 => self.t8.is_some(),
                TrojanId::T9 => self.t9.is_some(),
            };
            if !present {
                return bad(format!(
                    "{id} is enabled but has no [{}] table",
                    id.to_string().to_lowercase()
                ));
            }
            if id.is_stochastic() && self.seed.is_none() {
                return bad(format!("{id} needs a seed"));
            }
        }
        let on = |id| self.is_enabled(id);
        let need_axis = |a: Axis, who: &str| {
            if profile.has_axis(a) {
                Ok(())
            } else {
                Err(TrojanError::Config(format!(
                    "{who} uses axis {a}, which the profile does not have"
                )))
            }
        };
        if on(TrojanId::T1) {
            let p = self.t1.as_ref().unwrap();
            if !(p.period_s > 0.0) {
                return bad("t1.period_s must be > 0".into());
            }
            if p.max_shift_steps == 0 {
                return bad("t1.max_shift_steps must be > 0".into());
            }
            need_axis(Axis::X, "T1")?;
            need_axis(Axis::Y, "T1")?;
        }
        if on(TrojanId::T3) {
            need_axis(Axis::Y, "T3")?;
            need_axis(Axis::E, "T3")?;
        }
        if on(TrojanId::T4) {
            let p = self.t4.as_ref().unwrap();
            let [lo, hi] = p.layer_increment_rng;
            if lo == 0 || lo > hi {
                return bad("t4.layer_increment_rng must be [lo, hi] with 1 <= lo <= hi".into());
            }
            if p.axes.is_empty() {
                return bad("t4.axes must not be empty".into());
            }
            for &a in &p.axes {
                if !a.is_gantry() {
                    return bad("t4.axes may only name X, Y and Z".into());
                }
                need_axis(a, "T4")?;
            }
        }
        if on(TrojanId::T5) {
            need_axis(Axis::Z, "T5")?;
            if self.t5.as_ref().unwrap().at == ShiftAt::Layer(0) {
                return bad("t5.at layer numbers start at 1".into());
            }
        }
        for (id, t) in [(TrojanId::T6, &self.t6), (TrojanId::T7, &self.t7)] {
            if !on(id) {
                continue;
            }
            let t = t.as_ref().unwrap();
            if t.targets.is_empty() {
                return bad(format!("{id} has no targets"));
            }
            if let Some(l) = t
                .targets
                .iter()
                .find(|l| !matches!(l, Line::HeatHotend | Line::HeatBed))
            {
                return bad(format!("{id} target {l} is not a heater line"));
            }
        }
        if on(TrojanId::T6) && on(TrojanId::T7) {
            let t7 = &self.t7.as_ref().unwrap().targets;
            if self
                .t6
                .as_ref()
                .unwrap()
                .targets
                .iter()
                .any(|l| t7.contains(l))
            {
                return bad("T6 and T7 target the same heater".into());
            }
        }
        if on(TrojanId::T8) {
            let p = self.t8.as_ref().unwrap();
            need_axis(p.axis, "T8")?;
            if p.toggle_schedule.iter().any(|&(a, b)| !(a >= 0.0 && b > a)) {
                return bad(
                    "t8.toggle_schedule windows must satisfy 0 <= off_from < off_until".into(),
                );
            }
        }
        if on(TrojanId::T9) {
            let s = self.t9.as_ref().unwrap().duty_scale;
            if !(0.0..=1.0).contains(&s) {
                return bad("t9.duty_scale must be in [0, 1]".into());
            }
        }
        Ok(())
    }

    pub fn targets(&self, id: TrojanId) -> &[Line] {
        let t = match id {
            TrojanId::T6 => &self.t6,
            TrojanId::T7 => &self.t7,
            _ => &None,
        };
        match (self.is_enabled(id), t) {
            (true, Some(t)) => &t.targets,
            _ => &[],
        }
    }
}
