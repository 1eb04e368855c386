use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::gcode::Param;

/// A motor: the three gantry axes and the extruder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
    Z,
    E,
}

impl Axis {
    pub const ALL: [Axis; 4] = [Axis::X, Axis::Y, Axis::Z, Axis::E];
    pub const XYZ: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn param(self) -> Param {
        match self {
            Axis::X => Param::X,
            Axis::Y => Param::Y,
            Axis::Z => Param::Z,
            Axis::E => Param::E,
        }
    }

    pub fn is_gantry(self) -> bool {
        self != Axis::E
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::X => "X",
            Axis::Y => "Y",
            Axis::Z => "Z",
            Axis::E => "E",
        })
    }
}

impl FromStr for Axis {
    type Err = String;

    fn from_str(s: &str) -> Result<Axis, String> {
        match s.trim() {
            "X" | "x" => Ok(Axis::X),
            "Y" | "y" => Ok(Axis::Y),
            "Z" | "z" => Ok(Axis::Z),
            "E" | "e" => Ok(Axis::E),
            other => Err(format!("unknown axis {other:?}")),
        }
    }
}

/// One value per motor, indexed by [`Axis`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PerAxis<T> {
    pub x: T,
    pub y: T,
    pub z: T,
    pub e: T,
}

impl<T: Copy> PerAxis<T> {
    pub fn new(x: T, y: T, z: T, e: T) -> PerAxis<T> {
        PerAxis { x, y, z, e }
    }

    pub fn splat(v: T) -> PerAxis<T> {
        PerAxis {
            x: v,
            y: v,
            z: v,
            e: v,
        }
    }

    pub fn get(&self, axis: Axis) -> T {
        match axis {
            Axis::X => self.x,
            Axis::Y => self.y,
            Axis::Z => self.z,
            Axis::E => self.e,
        }
    }

    pub fn set(&mut self, axis: Axis, v: T) {
        match axis {
            Axis::X => self.x = v,
            Axis::Y => self.y = v,
            Axis::Z => self.z = v,
            Axis::E => self.e = v,
        }
    }

    pub fn to_array(&self) -> [T; 4] {
        [self.x, self.y, self.z, self.e]
    }
}
