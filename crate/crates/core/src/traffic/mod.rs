//! Vehicle dynamics and travel demand.

mod demand;
mod sim;

pub use demand::*;
pub use sim::*;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VehicleParams {
    pub length: f64,
    pub max_accel: f64,
    pub max_decel: f64,
    /// Bumper-to-bumper standstill gap kept to the vehicle ahead.
    pub min_gap: f64,
    pub depart_speed: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        VehicleParams { length: 5.0, max_accel: 2.6, max_decel: 4.5, min_gap: 2.5, depart_speed: 0.0 }
    }
}

/// Fixed-step clock. Metrics only count events inside
/// `[warmup, horizon - cooldown]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimClock {
    pub dt: f64,
    pub horizon: f64,
    pub warmup: f64,
    pub cooldown: f64,
}

impl Default for SimClock {
    fn default() -> Self {
        SimClock { dt: 1.0, horizon: 3600.0, warmup: 600.0, cooldown: 600.0 }
    }
}

impl SimClock {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || self.dt > 1.0 {
            return Err(Error::Config(format!("dt {} must be in (0, 1]", self.dt)));
        }
        let per_second = 1.0 / self.dt;
        if (per_second - per_second.round()).abs() > 1e-9 {
            return Err(Error::Config(format!("dt {} must divide one second evenly", self.dt)));
        }
        if !(self.horizon > 0.0) || self.warmup < 0.0 || self.cooldown < 0.0 {
            return Err(Error::Config("horizon must be positive, warmup/cooldown non-negative".into()));
        }
        if self.warmup + self.cooldown >= self.horizon {
            return Err(Error::Config("warmup + cooldown must leave a measured window".into()));
        }
        Ok(())
    }

    pub fn measured_window(&self) -> (f64, f64) {
        (self.warmup, self.horizon - self.cooldown)
    }

    pub fn in_window(&self, t: f64) -> bool {
        let (a, b) = self.measured_window();
        t >= a - 1e-9 && t <= b + 1e-9
    }

    pub fn steps(&self) -> u64 {
        (self.horizon / self.dt).round() as u64
    }
}
