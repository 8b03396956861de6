use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{Heading, Network, Route, SegmentId};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DepartureMode {
    #[default]
    Poisson,
    Uniform,
}

/// A stream of vehicles between two peripheral segments, optionally forced
/// through waypoint segments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Flow {
    pub origin: String,
    pub destination: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub via: Vec<String>,
    pub vph: f64,
}

impl Flow {
    pub fn route(&self, network: &Network) -> Result<Route> {
        let o = network.segment_by_name(&self.origin)?;
        let d = network.segment_by_name(&self.destination)?;
        let via = self
            .via
            .iter()
            .map(|v| network.segment_by_name(v))
            .collect::<Result<Vec<SegmentId>>>()?;
        network.route_via(o, &via, d)
    }

    /// Stable label naming this flow's random stream.
    pub fn stream_label(&self) -> String {
        let mut s = format!("flow/{}->{}", self.origin, self.destination);
        for v in &self.via {
            s.push('/');
            s.push_str(v);
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DemandClass {
    Low,
    Moderate,
    High,
}

impl DemandClass {
    pub fn for_scenario(id: u32) -> Option<DemandClass> {
        match id {
            1..=3 => Some(DemandClass::Low),
            4..=7 => Some(DemandClass::Moderate),
            8..=11 => Some(DemandClass::High),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandScenario {
    pub scenario_id: u32,
    #[serde(default)]
    pub demand_class: Option<DemandClass>,
    pub flows: Vec<Flow>,
}

impl DemandScenario {
    pub fn new(scenario_id: u32, flows: Vec<Flow>) -> DemandScenario {
        DemandScenario { scenario_id, demand_class: DemandClass::for_scenario(scenario_id), flows }
    }

    pub fn load(path: &Path) -> Result<DemandScenario> {
        let mut s: DemandScenario = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        s.demand_class = DemandClass::for_scenario(s.scenario_id);
        if let Some(f) = s.flows.iter().find(|f| !(f.vph >= 0.0) || !f.vph.is_finite()) {
            return Err(Error::Config(format!("flow {} has invalid vph {}", f.stream_label(), f.vph)));
        }
        Ok(s)
    }

    pub fn vph_vector(&self) -> Vec<f64> {
        self.flows.iter().map(|f| f.vph).collect()
    }

    pub fn with_vph(&self, vph: &[f64]) -> Result<DemandScenario> {
        if vph.len() != self.flows.len() {
            return Err(Error::DimensionMismatch { expected: self.flows.len(), found: vph.len() });
        }
        let flows = self.flows.iter().zip(vph).map(|(f, &v)| Flow { vph: v, ..f.clone() }).collect();
        Ok(DemandScenario { flows, ..self.clone() })
    }
}

/// A flow's origin/destination with a relative demand share.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowTemplate {
    pub origin: String,
    pub destination: String,
    #[serde(default)]
    pub via: Vec<String>,
    pub share: f64,
}

/// Eleven scenarios of monotonically increasing demand. Scenario `k` gives
/// each flow `share * (base_vph + (k - 1) * ladder_factor * base_vph)`.
pub fn scenario_catalog(base_vph: f64, ladder_factor: f64, template: &[FlowTemplate]) -> Result<Vec<DemandScenario>> {
    if !(base_vph > 0.0) || !(ladder_factor > 0.0) {
        return Err(Error::Argument("base_vph and ladder_factor must be positive".into()));
    }
    Ok((1..=11u32)
        .map(|k| {
            let vph = base_vph + (k - 1) as f64 * ladder_factor * base_vph;
            DemandScenario::new(
                k,
                template
                    .iter()
                    .map(|t| Flow {
                        origin: t.origin.clone(),
                        destination: t.destination.clone(),
                        via: t.via.clone(),
                        vph: vph * t.share,
                    })
                    .collect(),
            )
        })
        .collect())
}

/// Relative demand shares for the grid flow template.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TemplateShares {
    /// Straight east-west flows along the subject's row.
    pub ew_through: f64,
    /// Straight north-south flows along the subject's column.
    pub ns_through: f64,
    /// Flows turning left at the subject intersection.
    pub left: f64,
    /// Straight flows on every other row and column.
    pub background: f64,
}

impl Default for TemplateShares {
    fn default() -> Self {
        TemplateShares { ew_through: 1.0, ns_through: 1.0, left: 0.25, background: 0.5 }
    }
}

impl TemplateShares {
    /// Heavy east-west demand across the subject intersection.
    pub fn asymmetric() -> Self {
        TemplateShares { ew_through: 1.0, ns_through: 0.3, left: 0.15, background: 0.3 }
    }
}

/// Flow template for a grid built by [`crate::network::build_grid`]:
/// straight flows along every row and column in both directions, plus one
/// left-turning flow per approach of the subject intersection.
pub fn grid_flow_template(network: &Network, rows: u32, cols: u32, shares: &TemplateShares) -> Result<Vec<FlowTemplate>> {
    let (sr, sc) = (rows / 2, cols / 2);
    let name = |s: SegmentId| network.segment(s).name.clone();
    let mut out = Vec::new();
    let mut push = |o: SegmentId, d: SegmentId, via: Vec<String>, share: f64| {
        if share > 0.0 {
            out.push(FlowTemplate { origin: name(o), destination: name(d), via, share });
        }
    };
    for r in 0..rows {
        let share = if r == sr { shares.ew_through } else { shares.background };
        push(network.grid_entry(r, 0, Heading::East)?, network.grid_exit(r, cols - 1, Heading::East)?, vec![], share);
        push(network.grid_entry(r, cols - 1, Heading::West)?, network.grid_exit(r, 0, Heading::West)?, vec![], share);
    }
    for c in 0..cols {
        let share = if c == sc { shares.ns_through } else { shares.background };
        push(network.grid_entry(rows - 1, c, Heading::North)?, network.grid_exit(0, c, Heading::North)?, vec![], share);
        push(network.grid_entry(0, c, Heading::South)?, network.grid_exit(rows - 1, c, Heading::South)?, vec![], share);
    }

    // Left turns at the subject: leave along the subject's row or column.
    let subject = network.subject_intersection();
    let outgoing = |h: Heading| -> Result<SegmentId> {
        network
            .outgoing(subject)
            .iter()
            .copied()
            .find(|&s| network.segment(s).heading == h)
            .ok_or_else(|| Error::UnknownId(format!("{h:?} exit of subject")))
    };
    let lefts = [
        (network.grid_entry(sr, 0, Heading::East)?, network.grid_exit(0, sc, Heading::North)?, Heading::North),
        (network.grid_entry(sr, cols - 1, Heading::West)?, network.grid_exit(rows - 1, sc, Heading::South)?, Heading::South),
        (network.grid_entry(rows - 1, sc, Heading::North)?, network.grid_exit(sr, 0, Heading::West)?, Heading::West),
        (network.grid_entry(0, sc, Heading::South)?, network.grid_exit(sr, cols - 1, Heading::East)?, Heading::East),
    ];
    for (o, d, turn_to) in lefts {
        let via = outgoing(turn_to)?;
        let via = if via == d { vec![] } else { vec![name(via)] };
        push(o, d, via, shares.left);
    }
    Ok(out)
}

/// Departure times for a constant rate over `[start, end)`.
pub fn departure_times<R: Rng>(vph: f64, start: f64, end: f64, rng: &mut R, mode: DepartureMode) -> Vec<f64> {
    if !(vph > 0.0) || end <= start {
        return Vec::new();
    }
    let mean_headway = 3600.0 / vph;
    match mode {
        DepartureMode::Uniform => {
            let n = (vph * (end - start) / 3600.0 + 1e-9).floor() as usize;
            (0..n).map(|k| start + k as f64 * mean_headway).collect()
        }
        DepartureMode::Poisson => {
            let mut out = Vec::new();
            let mut t = start;
            loop {
                let u: f64 = rng.gen();
                t += -(1.0 - u).ln() * mean_headway;
                if t >= end {
                    break;
                }
                out.push(t);
            }
            out
        }
    }
}

pub fn generate_departures(
    network: &Network,
    flow: &Flow,
    horizon: f64,
    seed: u64,
    mode: DepartureMode,
) -> Result<Vec<(f64, Route)>> {
    if !(horizon > 0.0) {
        return Err(Error::Argument("horizon must be positive".into()));
    }
    let route = flow.route(network)?;
    let mut rng = seed::stream(seed, &flow.stream_label());
    Ok(departure_times(flow.vph, 0.0, horizon, &mut rng, mode)
        .into_iter()
        .map(|t| (t, route.clone()))
        .collect())
}

/// Constant-rate interval of a time-varying flow.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatePiece {
    pub start: f64,
    pub end: f64,
    pub vph: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlannedDeparture {
    pub time: f64,
    pub flow: usize,
}

/// All departures for a run, sorted by time; index in `departures` is the
/// vehicle id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandPlan {
    pub flows: Vec<Flow>,
    pub routes: Vec<Route>,
    pub departures: Vec<PlannedDeparture>,
}

impl DemandPlan {
    pub fn constant(network: &Network, flows: &[Flow], horizon: f64, seed: u64, mode: DepartureMode) -> Result<DemandPlan> {
        let pieces: Vec<Vec<RatePiece>> =
            flows.iter().map(|f| vec![RatePiece { start: 0.0, end: horizon, vph: f.vph }]).collect();
        DemandPlan::piecewise(network, flows, &pieces, seed, mode)
    }

    /// Departures for flows whose rate changes over time. Each (flow,
    /// piece) pair draws from its own labelled stream.
    pub fn piecewise(
        network: &Network,
        flows: &[Flow],
        pieces: &[Vec<RatePiece>],
        seed: u64,
        mode: DepartureMode,
    ) -> Result<DemandPlan> {
        if pieces.len() != flows.len() {
            return Err(Error::DimensionMismatch { expected: flows.len(), found: pieces.len() });
        }
        let routes = flows.iter().map(|f| f.route(network)).collect::<Result<Vec<_>>>()?;
        let mut seen: BTreeMap<String, usize> = BTreeMap::new();
        let mut departures = Vec::new();
        for (i, (flow, flow_pieces)) in flows.iter().zip(pieces).enumerate() {
            let base = flow.stream_label();
            let dup = seen.entry(base.clone()).or_insert(0);
            let label = if *dup == 0 { base } else { format!("{base}#{dup}") };
            *dup += 1;
            for (k, p) in flow_pieces.iter().enumerate() {
                if !(p.vph >= 0.0) || !p.vph.is_finite() {
                    return Err(Error::Argument(format!("invalid rate {} for {}", p.vph, label)));
                }
                let piece_label = if k == 0 { label.clone() } else { format!("{label}@{k}") };
                let mut rng = seed::stream(seed, &piece_label);
                departures.extend(
                    departure_times(p.vph, p.start, p.end, &mut rng, mode)
                        .into_iter()
                        .map(|time| PlannedDeparture { time, flow: i }),
                );
            }
        }
        departures.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.flow.cmp(&b.flow)));
        Ok(DemandPlan { flows: flows.to_vec(), routes, departures })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{build_grid, GridSpec};

    fn net() -> Network {
        build_grid(&GridSpec::default()).unwrap()
    }

    fn corridor(vph: f64) -> Flow {
        Flow { origin: "fw1-n1_0".into(), destination: "n1_2-fe1".into(), via: vec![], vph }
    }

    #[test]
    fn uniform_spacing() {
        let deps = generate_departures(&net(), &corridor(360.0), 600.0, 1, DepartureMode::Uniform).unwrap();
        assert_eq!(deps.len(), 60);
        for (k, (t, r)) in deps.iter().enumerate() {
            assert!((t - 10.0 * k as f64).abs() < 1e-9);
            assert_eq!(r.len(), 4);
        }
    }

    #[test]
    fn zero_demand_is_empty() {
        for mode in [DepartureMode::Uniform, DepartureMode::Poisson] {
            assert!(generate_departures(&net(), &corridor(0.0), 3600.0, 3, mode).unwrap().is_empty());
        }
    }

    #[test]
    fn poisson_is_seed_deterministic() {
        let a = generate_departures(&net(), &corridor(720.0), 3600.0, 7, DepartureMode::Poisson).unwrap();
        let b = generate_departures(&net(), &corridor(720.0), 3600.0, 7, DepartureMode::Poisson).unwrap();
        let c = generate_departures(&net(), &corridor(720.0), 3600.0, 8, DepartureMode::Poisson).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!((620..=820).contains(&a.len()), "{}", a.len());
        assert!(a.windows(2).all(|w| w[0].0 < w[1].0));
    }

    #[test]
    fn catalog_ladder() {
        let template = vec![FlowTemplate {
            origin: "fw1-n1_0".into(),
            destination: "n1_2-fe1".into(),
            via: vec![],
            share: 1.0,
        }];
        let cat = scenario_catalog(100.0, 0.5, &template).unwrap();
        assert_eq!(cat.len(), 11);
        assert_eq!(cat[0].flows[0].vph, 100.0);
        assert_eq!(cat[10].flows[0].vph, 600.0);
        assert_eq!(cat[4].demand_class, Some(DemandClass::Moderate));
        assert_eq!(cat[0].demand_class, Some(DemandClass::Low));
        assert_eq!(cat[7].demand_class, Some(DemandClass::High));
        assert!(cat.windows(2).all(|w| w[0].flows[0].vph < w[1].flows[0].vph));
        assert!(scenario_catalog(0.0, 0.5, &template).is_err());
    }

    #[test]
    fn grid_template_covers_all_subject_movements() {
        let n = net();
        let template = grid_flow_template(&n, 3, 3, &TemplateShares::default()).unwrap();
        assert_eq!(template.len(), 12 + 4);
        let subject = n.subject_intersection();
        let mut used = std::collections::BTreeSet::new();
        for t in &template {
            let flow = Flow { origin: t.origin.clone(), destination: t.destination.clone(), via: t.via.clone(), vph: 1.0 };
            let route = flow.route(&n).unwrap();
            n.validate_route(&route).unwrap();
            for w in route.0.windows(2) {
                let s = n.segment(w[0]);
                if s.to == subject {
                    let left = n.turn(w[0], w[1]) == crate::network::Turn::Left;
                    used.insert(crate::network::Movement::new(s.heading, left));
                }
            }
        }
        assert_eq!(used.len(), 8);
    }

    #[test]
    fn piecewise_streams_are_independent_of_other_flows() {
        let n = net();
        let a = DemandPlan::constant(&n, &[corridor(300.0)], 900.0, 5, DepartureMode::Poisson).unwrap();
        let other = Flow { origin: "fn1-n0_1".into(), destination: "n2_1-fs1".into(), via: vec![], vph: 200.0 };
        let b = DemandPlan::constant(&n, &[other, corridor(300.0)], 900.0, 5, DepartureMode::Poisson).unwrap();
        let ta: Vec<f64> = a.departures.iter().map(|d| d.time).collect();
        let tb: Vec<f64> = b.departures.iter().filter(|d| d.flow == 1).map(|d| d.time).collect();
        assert_eq!(ta, tb);
    }
}
