#![allow(dead_code)]

use std::fs;
use std::path::Path;
use std::sync::Arc;

use signaltwin::delay::DelayLedger;
use signaltwin::network::{build_grid, GridSpec, Movement, Network};
use signaltwin::traffic::{grid_flow_template, scenario_catalog, DemandPlan, DemandScenario, DepartureMode, TemplateShares};

pub fn grid(rows: u32, cols: u32) -> Arc<Network> {
    Arc::new(build_grid(&GridSpec { rows, cols, ..GridSpec::default() }).unwrap())
}

pub fn catalog(net: &Network, shares: TemplateShares, base: f64, id: u32) -> DemandScenario {
    let template = grid_flow_template(net, 3, 3, &shares).unwrap();
    scenario_catalog(base, 0.5, &template).unwrap().swap_remove(id as usize - 1)
}

pub fn plan(net: &Network, scenario: &DemandScenario, horizon: f64, seed: u64) -> DemandPlan {
    DemandPlan::constant(net, &scenario.flows, horizon, seed, DepartureMode::Poisson).unwrap()
}

/// Rows of a headed CSV file, header dropped.
pub fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

/// Movements released by each green phase index, written out by hand.
pub fn released(phase: u8) -> &'static [Movement] {
    match phase {
        0 => &[Movement::Nbt, Movement::Sbt],
        2 => &[Movement::Ebt, Movement::Wbt],
        4 => &[Movement::Ebl, Movement::Wbl],
        6 => &[Movement::Nbl, Movement::Sbl],
        _ => &[],
    }
}

/// Two movements conflict unless they are the same opposing pair.
pub fn conflicting(a: Movement, b: Movement) -> bool {
    let pair = |m: Movement| [0u8, 2, 4, 6].into_iter().find(|&p| released(p).contains(&m)).unwrap();
    pair(a) != pair(b)
}

#[derive(Debug, Clone)]
pub struct SignalRow {
    pub t: f64,
    pub phase: String,
    pub stage: String,
    pub green_elapsed: f64,
}

pub fn signal_rows(path: &Path, intersection: &str) -> Vec<SignalRow> {
    csv_rows(path)
        .into_iter()
        .filter(|r| r[1] == intersection)
        .map(|r| SignalRow { t: r[0].parse().unwrap(), phase: r[2].clone(), stage: r[3].clone(), green_elapsed: r[4].parse().unwrap() })
        .collect()
}

/// Checks the subject signal log: every change runs green, 2 s yellow,
/// 1 s all-red, green; greens last more than 5 s; changes start on
/// multiples of 5 s; never two conflicting greens. Returns violations.
pub fn phase_machine_violations(rows: &[SignalRow]) -> Vec<String> {
    let mut v = Vec::new();
    let mut green_start: Option<(f64, String)> = None;
    let mut i = 0;
    while i < rows.len() {
        let r = &rows[i];
        match r.stage.as_str() {
            "green" => {
                let Ok(p) = r.phase.parse::<u8>() else {
                    v.push(format!("t={} signal out of order", r.t));
                    i += 1;
                    continue;
                };
                if p % 2 != 0 || p > 6 {
                    v.push(format!("t={} green with phase {}", r.t, p));
                }
                let rel = released(p);
                for a in rel {
                    for b in rel {
                        if conflicting(*a, *b) {
                            v.push(format!("t={} conflicting greens", r.t));
                        }
                    }
                }
                if green_start.as_ref().map_or(true, |(_, ph)| *ph != r.phase) {
                    green_start = Some((r.t, r.phase.clone()));
                }
                i += 1;
            }
            "yellow" => {
                let (start, ph) = green_start.clone().unwrap_or((0.0, "0".into()));
                if r.t % 5.0 != 0.0 {
                    v.push(format!("t={} change started off the 5 s grid", r.t));
                }
                if r.t - start <= 5.0 {
                    v.push(format!("t={} green lasted only {} s", r.t, r.t - start));
                }
                let expected_yellow = (ph.parse::<u8>().unwrap() + 1).to_string();
                let ys: Vec<&SignalRow> = rows[i..].iter().take_while(|x| x.stage == "yellow").collect();
                if ys.len() != 2 || ys.iter().any(|y| y.phase != expected_yellow) {
                    v.push(format!("t={} yellow ran {} rows", r.t, ys.len()));
                }
                i += ys.len();
                let reds: Vec<&SignalRow> = rows[i..].iter().take_while(|x| x.stage == "all_red").collect();
                if reds.len() != 1 || reds[0].phase != "8" {
                    v.push(format!("t={} all-red ran {} rows", r.t, reds.len()));
                }
                i += reds.len();
                if let Some(next) = rows.get(i) {
                    if next.stage != "green" || next.phase == ph {
                        v.push(format!("t={} change did not end in a new green", next.t));
                    }
                }
            }
            other => {
                v.push(format!("t={} unexpected stage {other}", r.t));
                i += 1;
            }
        }
    }
    v
}

/// One step of a speed trace; `cross` marks an approach change right after
/// the step.
#[derive(Debug, Clone, Copy)]
pub struct Sample {
    pub speed: f64,
    pub cross: bool,
}

pub struct Replay {
    pub waiting: f64,
    pub accumulated: f64,
    pub dt1: f64,
    pub dt2: f64,
}

/// Recomputes the ledger from counts of stopped steps per approach.
pub fn replay(trace: &[Sample], dt: f64) -> Replay {
    let mut per_approach = vec![0u64];
    let mut run = 0u64;
    for s in trace {
        if s.speed < 0.1 {
            *per_approach.last_mut().unwrap() += 1;
            run += 1;
        } else {
            run = 0;
        }
        if s.cross {
            per_approach.push(0);
        }
    }
    let total: u64 = per_approach.iter().sum();
    let current = *per_approach.last().unwrap();
    let previous = if per_approach.len() > 1 { per_approach[per_approach.len() - 2] } else { 0 };
    Replay {
        waiting: run as f64 * dt,
        accumulated: total as f64 * dt,
        dt1: current as f64 * dt,
        dt2: (current + previous) as f64 * dt,
    }
}

pub fn run(trace: &[Sample], dt: f64) -> DelayLedger {
    trace.iter().fold(DelayLedger::default(), |l, s| {
        let l = l.update_waiting(s.speed, dt);
        if s.cross {
            l.on_approach_transition()
        } else {
            l
        }
    })
}

/// Max-then-chain rule written directly: find the maximum, then walk the
/// fixed pair order and take the first pair holding a maximal value.
pub fn chain_oracle(values: &[f64; 8]) -> Option<u8> {
    if values.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let v = |m: Movement| values[m.index()];
    let chain: [(Movement, Movement, u8); 4] = [
        (Movement::Nbt, Movement::Sbt, 0),
        (Movement::Wbt, Movement::Ebt, 2),
        (Movement::Wbl, Movement::Ebl, 4),
        (Movement::Nbl, Movement::Sbl, 6),
    ];
    chain.iter().find(|(a, b, _)| v(*a) == max || v(*b) == max).map(|c| c.2)
}

