//! Signal phases, the per-intersection controller timer and the fixed-time
//! plan used at intersections that are not adaptively controlled.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::Movement;

const EPS: f64 = 1e-6;

/// Row of the phase/state table. Even phases 0, 2, 4, 6 serve greens, odd
/// phases are their yellows and 8 is all-red.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Phase(u8);

impl Phase {
    pub const NS_THROUGH: Phase = Phase(0);
    pub const EW_THROUGH: Phase = Phase(2);
    pub const EW_LEFT: Phase = Phase(4);
    pub const NS_LEFT: Phase = Phase(6);
    pub const ALL_RED: Phase = Phase(8);
    pub const GREENS: [Phase; 4] = [Phase(0), Phase(2), Phase(4), Phase(6)];

    pub fn new(index: u8) -> Result<Phase> {
        if index <= 8 {
            Ok(Phase(index))
        } else {
            Err(Error::Argument(format!("phase {index} out of range 0..=8")))
        }
    }

    pub fn index(self) -> u8 {
        self.0
    }

    pub fn is_green(self) -> bool {
        self.0 < 8 && self.0 % 2 == 0
    }

    pub fn yellow(self) -> Phase {
        debug_assert!(self.is_green());
        Phase(self.0 + 1)
    }

    /// Green phase serving `movement`.
    pub fn serving(movement: Movement) -> Phase {
        match movement {
            Movement::Nbt | Movement::Sbt => Phase(0),
            Movement::Ebt | Movement::Wbt => Phase(2),
            Movement::Ebl | Movement::Wbl => Phase(4),
            Movement::Nbl | Movement::Sbl => Phase(6),
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Light {
    Green,
    Yellow,
    Red,
    FlashingYellow,
}

impl Light {
    pub fn code(self) -> char {
        match self {
            Light::Green => 'G',
            Light::Yellow => 'Y',
            Light::Red => 'R',
            Light::FlashingYellow => 'F',
        }
    }
}

/// Phase/state table lookup.
pub fn phase_for_movement(phase: Phase, movement: Movement) -> Light {
    if phase == Phase::ALL_RED {
        return Light::Red;
    }
    let green = Phase(phase.0 & !1);
    if Phase::serving(movement) != green {
        Light::Red
    } else if phase.0 % 2 == 0 {
        Light::Green
    } else {
        Light::Yellow
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Green,
    Yellow,
    AllRed,
}

impl Stage {
    pub fn label(self) -> &'static str {
        match self {
            Stage::Green => "green",
            Stage::Yellow => "yellow",
            Stage::AllRed => "all_red",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalStatus {
    Ok,
    OutOfOrder,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalTiming {
    pub yellow: f64,
    pub all_red: f64,
    /// Decisions are skipped until green has lasted strictly longer than this.
    pub min_green: f64,
    pub decision_period: f64,
}

impl Default for SignalTiming {
    fn default() -> Self {
        SignalTiming { yellow: 2.0, all_red: 1.0, min_green: 5.0, decision_period: 5.0 }
    }
}

/// What a decision source asks the timer to do.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Proposal {
    Phase(Phase),
    OutOfOrder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TickOutcome {
    pub consulted: bool,
    pub transition_started: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerTimer {
    pub current_phase: Phase,
    pub stage: Stage,
    pub stage_elapsed: f64,
    pub green_elapsed: f64,
    pub pending_target: Option<Phase>,
    pub status: SignalStatus,
    pub timing: SignalTiming,
}

impl ControllerTimer {
    pub fn new(initial: Phase, timing: SignalTiming) -> Result<ControllerTimer> {
        if !initial.is_green() {
            return Err(Error::Argument(format!("initial phase {initial} is not a green phase")));
        }
        Ok(ControllerTimer {
            current_phase: initial,
            stage: Stage::Green,
            stage_elapsed: 0.0,
            green_elapsed: 0.0,
            pending_target: None,
            status: SignalStatus::Ok,
            timing,
        })
    }

    pub fn light(&self, movement: Movement) -> Light {
        match self.status {
            SignalStatus::OutOfOrder => Light::FlashingYellow,
            SignalStatus::Ok => phase_for_movement(self.current_phase, movement),
        }
    }

    /// Asks for a change to `proposed`. Same phase is a no-op; otherwise the
    /// timer runs yellow then all-red before `proposed` turns green.
    pub fn request_phase(&mut self, proposed: Phase) -> Result<()> {
        if !proposed.is_green() {
            return Err(Error::Argument(format!("phase {proposed} is not a green phase")));
        }
        if self.status == SignalStatus::OutOfOrder {
            return Err(Error::RejectedRequest("out-of-order"));
        }
        if self.stage != Stage::Green {
            return Err(Error::RejectedRequest(self.stage.label()));
        }
        if proposed != self.current_phase {
            self.current_phase = self.current_phase.yellow();
            self.stage = Stage::Yellow;
            self.stage_elapsed = 0.0;
            self.pending_target = Some(proposed);
        }
        Ok(())
    }

    pub fn set_out_of_order(&mut self) {
        self.status = SignalStatus::OutOfOrder;
        self.pending_target = None;
    }

    /// True when the timer would consult its decision source at `now`.
    pub fn decision_due(&self, now: f64) -> bool {
        self.status == SignalStatus::Ok
            && self.stage == Stage::Green
            && self.green_elapsed > self.timing.min_green + EPS
            && is_multiple(now, self.timing.decision_period)
    }

    /// Advances the clocks by `dt` to time `now`, completing any clearance
    /// stage that has run its full length, then consults `source` if a
    /// decision is due.
    pub fn tick<F>(&mut self, now: f64, dt: f64, source: F) -> TickOutcome
    where
        F: FnOnce(&ControllerTimer) -> Proposal,
    {
        self.advance(dt);
        self.consult(now, source)
    }

    pub fn advance(&mut self, dt: f64) {
        if self.status == SignalStatus::OutOfOrder {
            return;
        }
        self.stage_elapsed += dt;
        match self.stage {
            Stage::Green => self.green_elapsed += dt,
            Stage::Yellow if self.stage_elapsed >= self.timing.yellow - EPS => {
                self.stage = Stage::AllRed;
                self.current_phase = Phase::ALL_RED;
                self.stage_elapsed = 0.0;
            }
            Stage::AllRed if self.stage_elapsed >= self.timing.all_red - EPS => {
                self.stage = Stage::Green;
                self.current_phase = self.pending_target.take().expect("all-red without target");
                self.stage_elapsed = 0.0;
                self.green_elapsed = 0.0;
            }
            _ => {}
        }
    }

    /// Consults `source` and acts on its proposal if a decision is due at `now`.
    pub fn consult<F>(&mut self, now: f64, source: F) -> TickOutcome
    where
        F: FnOnce(&ControllerTimer) -> Proposal,
    {
        if !self.decision_due(now) {
            return TickOutcome::default();
        }
        match source(self) {
            Proposal::Phase(p) => {
                let before = self.stage;
                // Due implies green stage; the only failure is a non-green proposal.
                if self.request_phase(p).is_err() {
                    self.set_out_of_order();
                }
                TickOutcome { consulted: true, transition_started: before != self.stage }
            }
            Proposal::OutOfOrder => {
                self.set_out_of_order();
                TickOutcome { consulted: true, transition_started: false }
            }
        }
    }
}

fn is_multiple(t: f64, period: f64) -> bool {
    let k = (t / period).round();
    (t - k * period).abs() < EPS
}

/// Two-phase fixed-time plan: north-south then east-west, each with its left
/// movements permitted alongside the through movements.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedTimePlan {
    pub green: f64,
    pub yellow: f64,
    pub all_red: f64,
    pub offset: f64,
}

impl Default for FixedTimePlan {
    fn default() -> Self {
        FixedTimePlan { green: 30.0, yellow: 2.0, all_red: 1.0, offset: 0.0 }
    }
}

impl FixedTimePlan {
    pub fn cycle(&self) -> f64 {
        2.0 * (self.green + self.yellow + self.all_red)
    }

    /// (axis phase, stage, seconds into stage) at time `t`; axis phase is
    /// 0 for north-south and 2 for east-west.
    pub fn state(&self, t: f64) -> (Phase, Stage, f64) {
        let half = self.green + self.yellow + self.all_red;
        let c = (t + self.offset).rem_euclid(self.cycle());
        let (axis, r) = if c < half - EPS { (Phase(0), c) } else { (Phase(2), c - half) };
        if r < self.green - EPS {
            (axis, Stage::Green, r)
        } else if r < self.green + self.yellow - EPS {
            (axis, Stage::Yellow, r - self.green)
        } else {
            (axis, Stage::AllRed, r - self.green - self.yellow)
        }
    }

    pub fn light(&self, t: f64, movement: Movement) -> Light {
        let (axis, stage, _) = self.state(t);
        let ns = matches!(movement, Movement::Nbt | Movement::Sbt | Movement::Nbl | Movement::Sbl);
        let on_axis = ns == (axis == Phase(0));
        match (stage, on_axis) {
            (_, false) | (Stage::AllRed, _) => Light::Red,
            (Stage::Green, true) => Light::Green,
            (Stage::Yellow, true) => Light::Yellow,
        }
    }

    /// Phase code for logging: the axis green, its yellow, or all-red.
    pub fn phase_code(&self, t: f64) -> (Phase, Stage, f64) {
        let (axis, stage, into) = self.state(t);
        let phase = match stage {
            Stage::Green => axis,
            Stage::Yellow => axis.yellow(),
            Stage::AllRed => Phase::ALL_RED,
        };
        let green_elapsed = if stage == Stage::Green { into } else { 0.0 };
        (phase, stage, green_elapsed)
    }
}
