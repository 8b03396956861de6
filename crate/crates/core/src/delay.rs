//! Stopped-delay bookkeeping.
//!
//! A vehicle is stopped while its speed is strictly below
//! [`STOP_SPEED_THRESHOLD`]. `waiting` is the length of the current stopped
//! spell and resets when the vehicle moves; `accumulated` is the lifetime
//! total and never resets. The entry snapshot and the carried-over value
//! turn the lifetime total into per-approach delays.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const STOP_SPEED_THRESHOLD: f64 = 0.1;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DelayLedger {
    pub waiting: f64,
    pub accumulated: f64,
    pub entry_accumulated: f64,
    pub carried_over: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DelayVariant {
    Dt1,
    Dt2,
}

impl DelayLedger {
    pub fn update_waiting(self, speed: f64, dt: f64) -> DelayLedger {
        if speed < STOP_SPEED_THRESHOLD {
            DelayLedger { waiting: self.waiting + dt, accumulated: self.accumulated + dt, ..self }
        } else {
            DelayLedger { waiting: 0.0, ..self }
        }
    }

    /// Stopped delay since entering the current approach.
    pub fn vehicle_delay_dt1(&self) -> Result<f64> {
        let d = self.accumulated - self.entry_accumulated;
        if d < 0.0 {
            return Err(Error::LedgerCorrupt { accumulated: self.accumulated, entry: self.entry_accumulated });
        }
        Ok(d)
    }

    /// Stopped delay on the current approach plus the delay carried over
    /// from the immediately previous approach.
    pub fn vehicle_delay_dt2(&self) -> Result<f64> {
        Ok(self.vehicle_delay_dt1()? + self.carried_over)
    }

    pub fn vehicle_delay(&self, variant: DelayVariant) -> Result<f64> {
        match variant {
            DelayVariant::Dt1 => self.vehicle_delay_dt1(),
            DelayVariant::Dt2 => self.vehicle_delay_dt2(),
        }
    }

    /// Called as the vehicle crosses into its next approach.
    pub fn on_approach_transition(self) -> DelayLedger {
        DelayLedger {
            carried_over: self.accumulated - self.entry_accumulated,
            entry_accumulated: self.accumulated,
            ..self
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproachDelaySnapshot {
    pub vehicle_delays: Vec<f64>,
    pub average: f64,
}

/// Mean per-vehicle delay over the vehicles on one approach; 0 when empty.
pub fn average_approach_delay<'a, I>(ledgers: I, variant: DelayVariant) -> Result<ApproachDelaySnapshot>
where
    I: IntoIterator<Item = &'a DelayLedger>,
{
    let vehicle_delays = ledgers
        .into_iter()
        .map(|l| l.vehicle_delay(variant))
        .collect::<Result<Vec<_>>>()?;
    let average = if vehicle_delays.is_empty() {
        0.0
    } else {
        vehicle_delays.iter().sum::<f64>() / vehicle_delays.len() as f64
    };
    Ok(ApproachDelaySnapshot { vehicle_delays, average })
}

/// Travel time over a segment in excess of its free-flow time, floored at 0.
pub fn segment_delay(t_in: f64, t_out: f64, length: f64, free_flow_speed: f64) -> Result<f64> {
    if t_out < t_in {
        return Err(Error::Argument(format!("exit time {t_out} precedes entry time {t_in}")));
    }
    if !(length > 0.0) || !(free_flow_speed > 0.0) {
        return Err(Error::Argument("segment length and free-flow speed must be positive".into()));
    }
    Ok(((t_out - t_in) - length / free_flow_speed).max(0.0))
}
