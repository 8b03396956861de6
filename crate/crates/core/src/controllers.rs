//! Phase-selection algorithms. All three share one decision rule: find the
//! largest per-movement value and give green to the first phase group, in
//! the order NS-through, EW-through, EW-left, NS-left, that contains a
//! movement attaining it. They differ only in what the values measure:
//! approach density for the baseline, average stopped delay on the approach
//! for DT1, and that delay plus the delay carried over from the previous
//! approach for DT2.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::Movement;
use crate::signal::{Phase, Proposal};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Baseline,
    Dt1,
    Dt2,
}

impl Algorithm {
    /// Registration order; also the tie-break order for selection.
    pub const ALL: [Algorithm; 3] = [Algorithm::Baseline, Algorithm::Dt1, Algorithm::Dt2];

    pub fn token(self) -> &'static str {
        match self {
            Algorithm::Baseline => "baseline",
            Algorithm::Dt1 => "dt1",
            Algorithm::Dt2 => "dt2",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Algorithm> {
        match s.trim().to_ascii_lowercase().as_str() {
            "baseline" => Ok(Algorithm::Baseline),
            "dt1" => Ok(Algorithm::Dt1),
            "dt2" => Ok(Algorithm::Dt2),
            _ => Err(Error::UnknownAlgorithm(s.to_string())),
        }
    }
}

/// Per-movement observation values, indexed by [`Movement::index`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionInput {
    pub values: [f64; 8],
}

impl DecisionInput {
    /// Validated constructor: every value must be finite and non-negative.
    pub fn new(values: [f64; 8]) -> Result<DecisionInput> {
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::Argument(format!("decision input value {v} must be finite and >= 0")));
        }
        Ok(DecisionInput { values })
    }

    pub fn from_fn(mut f: impl FnMut(Movement) -> f64) -> DecisionInput {
        let mut values = [0.0; 8];
        for m in Movement::ALL {
            values[m.index()] = f(m);
        }
        DecisionInput { values }
    }

    pub fn get(&self, m: Movement) -> f64 {
        self.values[m.index()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    /// `None` means the controller should go out of order.
    pub proposed_phase: Option<Phase>,
    pub winning_movement: Option<Movement>,
    pub winning_value: f64,
}

impl Decision {
    pub fn proposal(&self) -> Proposal {
        match self.proposed_phase {
            Some(p) => Proposal::Phase(p),
            None => Proposal::OutOfOrder,
        }
    }
}

const CHAIN: [(Phase, [Movement; 2]); 4] = [
    (Phase::NS_THROUGH, [Movement::Nbt, Movement::Sbt]),
    (Phase::EW_THROUGH, [Movement::Wbt, Movement::Ebt]),
    (Phase::EW_LEFT, [Movement::Wbl, Movement::Ebl]),
    (Phase::NS_LEFT, [Movement::Nbl, Movement::Sbl]),
];

fn max_then_chain(input: &DecisionInput) -> Decision {
    if input.values.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Decision { proposed_phase: None, winning_movement: None, winning_value: f64::NAN };
    }
    let max = input.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    for (phase, group) in CHAIN {
        for m in group {
            if input.get(m) == max {
                return Decision { proposed_phase: Some(phase), winning_movement: Some(m), winning_value: max };
            }
        }
    }
    Decision { proposed_phase: None, winning_movement: None, winning_value: max }
}

/// Density rule: input values are vehicles per lane per mile.
pub fn baseline_decide(input: &DecisionInput) -> Decision {
    max_then_chain(input)
}

/// DT1 rule: input values are average approach stopped delays.
pub fn dt1_decide(input: &DecisionInput) -> Decision {
    max_then_chain(input)
}

/// DT2 rule: input values are average approach delays including carry-over.
pub fn dt2_decide(input: &DecisionInput) -> Decision {
    max_then_chain(input)
}

pub fn decide(algorithm: Algorithm, input: &DecisionInput) -> Decision {
    match algorithm {
        Algorithm::Baseline => baseline_decide(input),
        Algorithm::Dt1 => dt1_decide(input),
        Algorithm::Dt2 => dt2_decide(input),
    }
}

/// Vehicles per lane per mile.
pub fn approach_density(vehicle_count: usize, lane_count: u32, lane_length_miles: f64) -> Result<f64> {
    if lane_count == 0 || !(lane_length_miles > 0.0) {
        return Err(Error::Argument("lane count and lane length must be positive".into()));
    }
    Ok(vehicle_count as f64 / (lane_count as f64 * lane_length_miles))
}
