use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{DemandPlan, SimClock, VehicleParams};
use crate::controllers::{approach_density, decide, Algorithm, DecisionInput};
use crate::delay::{average_approach_delay, segment_delay, DelayLedger, DelayVariant};
use crate::error::{Error, Result};
use crate::metrics::{summarize, RunSummary};
use crate::network::{Movement, Network, NodeId, SegmentId, Turn, METERS_PER_MILE};
use crate::signal::{ControllerTimer, FixedTimePlan, Light, Phase, SignalStatus, SignalTiming, Stage};

/// Vehicles held at a red light stop this far short of the stop line.
pub const STOP_LINE_MARGIN: f64 = 0.5;

const EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub clock: SimClock,
    pub vehicle: VehicleParams,
    pub timing: SignalTiming,
    pub fixed_plan: FixedTimePlan,
    /// Whether left-turn vehicles add the delay carried over from the
    /// segment they arrived on to their DT2 approach delay.
    pub carry_over_for_left: bool,
    pub initial_phase: Phase,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            clock: SimClock::default(),
            vehicle: VehicleParams::default(),
            timing: SignalTiming::default(),
            fixed_plan: FixedTimePlan::default(),
            carry_over_for_left: true,
            initial_phase: Phase::NS_THROUGH,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vehicle {
    pub id: usize,
    pub flow: usize,
    pub route: usize,
    pub route_index: usize,
    pub segment: SegmentId,
    pub lane: usize,
    pub position: f64,
    pub speed: f64,
    pub ledger: DelayLedger,
    pub entry_time: f64,
    pub depart_time: f64,
    pub insert_time: f64,
    committed: bool,
    moved_step: u64,
}

#[derive(Debug, Clone)]
enum NodeSignal {
    Adaptive(ControllerTimer),
    Fixed(FixedTimePlan),
    Unsignalized,
}

/// One vehicle crossing the stop line of a subject-intersection approach.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Traversal {
    pub vehicle: usize,
    pub segment: String,
    pub movement: Movement,
    pub t_in: f64,
    pub t_out: f64,
    /// End of the step in which the crossing happened.
    pub observed_at: f64,
    pub stopped_delay: f64,
    pub carried_over: f64,
    pub segment_delay: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub t: f64,
    pub algorithm: Algorithm,
    pub values: [f64; 8],
    pub proposed_phase: Option<Phase>,
    pub winning_movement: Option<Movement>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwapEvent {
    pub t: f64,
    pub from: Algorithm,
    pub to: Algorithm,
    pub stage: Stage,
    pub green_elapsed: f64,
}

/// Per-movement average DT1 approach delay and vehicle count at one instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproachSample {
    pub t: f64,
    pub average_delay: [f64; 8],
    pub vehicles: [usize; 8],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripRecord {
    pub vehicle: usize,
    pub flow: usize,
    pub depart: f64,
    pub insert: f64,
    pub arrive: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StepEvents {
    pub inserted: Vec<usize>,
    pub arrived: Vec<usize>,
    pub crossings: usize,
    pub on_network: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub algorithm: Algorithm,
    pub clock: SimClock,
    pub subject_intersection: String,
    pub signal_status: SignalStatus,
    pub summary: RunSummary,
    pub inserted: usize,
    pub arrived: usize,
    pub on_network_at_end: usize,
    pub not_inserted: usize,
    pub traversals: Vec<Traversal>,
    pub decisions: Vec<DecisionRecord>,
    pub swaps: Vec<SwapEvent>,
    pub approach_series: Vec<ApproachSample>,
    pub trips: Vec<TripRecord>,
}

/// CSV sinks written while the simulation runs.
#[derive(Default)]
pub struct LogSinks {
    pub trajectory: Option<Box<dyn Write + Send>>,
    pub signals: Option<Box<dyn Write + Send>>,
}

pub const TRAJECTORY_HEADER: &str = "t,vehicle_id,segment_id,position,speed,waiting,accumulated_waiting";
pub const SIGNAL_HEADER: &str = "t,intersection_id,phase,stage,green_elapsed";

struct Obstacle {
    gap: f64,
    speed: Option<f64>,
}

enum Outcome {
    Stay,
    EnterPocket,
    Cross { next: SegmentId, lane: usize, position: f64, t_cross: f64 },
    Arrive { t_cross: f64 },
}

pub struct Simulation {
    network: Arc<Network>,
    config: SimConfig,
    plan: DemandPlan,
    step: u64,
    vehicles: Vec<Option<Vehicle>>,
    active: BTreeSet<usize>,
    lanes: Vec<Vec<Vec<usize>>>,
    next_departure: usize,
    waiting: BTreeMap<SegmentId, VecDeque<usize>>,
    signals: Vec<NodeSignal>,
    algorithm: Algorithm,
    pending_algorithm: Option<Algorithm>,
    traversals: Vec<Traversal>,
    decisions: Vec<DecisionRecord>,
    swaps: Vec<SwapEvent>,
    series: Vec<ApproachSample>,
    trips: Vec<TripRecord>,
    inserted: usize,
    arrived: usize,
    sinks: LogSinks,
}

impl Simulation {
    pub fn new(network: Arc<Network>, config: SimConfig, plan: DemandPlan, algorithm: Algorithm) -> Result<Simulation> {
        config.clock.validate()?;
        for route in &plan.routes {
            network.validate_route(route)?;
        }
        if let Some(d) = plan.departures.iter().find(|d| d.flow >= plan.routes.len()) {
            return Err(Error::Argument(format!("departure references unknown flow {}", d.flow)));
        }
        let subject = network.subject_intersection();
        let signals = network
            .nodes()
            .iter()
            .enumerate()
            .map(|(i, _)| {
                let id = NodeId(i as u32);
                if id == subject {
                    ControllerTimer::new(config.initial_phase, config.timing).map(NodeSignal::Adaptive)
                } else if network.is_intersection(id) {
                    Ok(NodeSignal::Fixed(config.fixed_plan))
                } else {
                    Ok(NodeSignal::Unsignalized)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let lanes = network
            .segments()
            .iter()
            .map(|s| vec![Vec::new(); s.lane_count as usize + usize::from(s.has_pocket())])
            .collect();
        let n = plan.departures.len();
        Ok(Simulation {
            network,
            config,
            plan,
            step: 0,
            vehicles: vec![None; n],
            active: BTreeSet::new(),
            lanes,
            next_departure: 0,
            waiting: BTreeMap::new(),
            signals,
            algorithm,
            pending_algorithm: None,
            traversals: Vec::new(),
            decisions: Vec::new(),
            swaps: Vec::new(),
            series: Vec::new(),
            trips: Vec::new(),
            inserted: 0,
            arrived: 0,
            sinks: LogSinks::default(),
        })
    }

    pub fn attach_sinks(&mut self, mut sinks: LogSinks) -> Result<()> {
        if let Some(w) = sinks.trajectory.as_mut() {
            writeln!(w, "{TRAJECTORY_HEADER}")?;
        }
        if let Some(w) = sinks.signals.as_mut() {
            writeln!(w, "{SIGNAL_HEADER}")?;
        }
        self.sinks = sinks;
        Ok(())
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.config.clock.dt
    }

    pub fn is_finished(&self) -> bool {
        self.step >= self.config.clock.steps()
    }

    pub fn algorithm(&self) -> Algorithm {
        self.algorithm
    }

    /// Queues a controller change. It takes effect the next time the subject
    /// controller reaches a decision point in its green stage.
    pub fn request_algorithm(&mut self, algorithm: Algorithm) {
        self.pending_algorithm = Some(algorithm);
    }

    pub fn subject_timer(&self) -> &ControllerTimer {
        match &self.signals[self.network.subject_intersection().0 as usize] {
            NodeSignal::Adaptive(t) => t,
            _ => unreachable!("subject is always adaptive"),
        }
    }

    pub fn vehicles(&self) -> impl Iterator<Item = &Vehicle> + '_ {
        self.active.iter().map(move |&id| self.vehicles[id].as_ref().unwrap())
    }

    pub fn on_network(&self) -> usize {
        self.active.len()
    }

    pub fn inserted(&self) -> usize {
        self.inserted
    }

    pub fn arrived(&self) -> usize {
        self.arrived
    }

    pub fn plan(&self) -> &DemandPlan {
        &self.plan
    }

    /// Vehicle ids in a lane, front first.
    pub fn lane(&self, segment: SegmentId, lane: usize) -> &[usize] {
        &self.lanes[segment.index()][lane]
    }

    pub fn vehicle(&self, id: usize) -> Option<&Vehicle> {
        self.vehicles.get(id).and_then(|v| v.as_ref())
    }

    pub fn light(&self, node: NodeId, movement: Movement, t: f64) -> Light {
        match &self.signals[node.0 as usize] {
            NodeSignal::Adaptive(timer) => timer.light(movement),
            NodeSignal::Fixed(plan) => plan.light(t, movement),
            NodeSignal::Unsignalized => Light::Green,
        }
    }

    /// Per-movement observation at the subject intersection for `algorithm`.
    pub fn observe(&self, algorithm: Algorithm) -> Result<DecisionInput> {
        let subject = self.network.subject_intersection();
        let mut values = [0.0; 8];
        for approach in self.network.approaches(subject) {
            let seg = self.network.segment(approach.segment);
            let ids = self.approach_vehicles(approach.segment, approach.movement);
            values[approach.movement.index()] = match algorithm {
                Algorithm::Baseline => {
                    let (lanes, length) = if approach.movement.is_left() {
                        (1, seg.pocket_length)
                    } else {
                        (seg.lane_count, seg.length)
                    };
                    approach_density(ids.count(), lanes, length / METERS_PER_MILE)?
                }
                Algorithm::Dt1 => {
                    let ledgers: Vec<DelayLedger> = ids.map(|id| self.vehicles[id].as_ref().unwrap().ledger).collect();
                    average_approach_delay(&ledgers, DelayVariant::Dt1)?.average
                }
                Algorithm::Dt2 => {
                    let carry = !approach.movement.is_left() || self.config.carry_over_for_left;
                    let ledgers: Vec<DelayLedger> = ids
                        .map(|id| {
                            let l = self.vehicles[id].as_ref().unwrap().ledger;
                            if carry {
                                l
                            } else {
                                DelayLedger { carried_over: 0.0, ..l }
                            }
                        })
                        .collect();
                    average_approach_delay(&ledgers, DelayVariant::Dt2)?.average
                }
            };
        }
        DecisionInput::new(values)
    }

    /// Vehicles counted on an approach: pocket vehicles for a left movement,
    /// through-lane vehicles otherwise.
    fn approach_vehicles(&self, segment: SegmentId, movement: Movement) -> impl Iterator<Item = usize> + '_ {
        let seg = self.network.segment(segment);
        let lanes = &self.lanes[segment.index()];
        let range = if movement.is_left() {
            seg.lane_count as usize..lanes.len()
        } else {
            0..seg.lane_count as usize
        };
        lanes[range].iter().flat_map(|l| l.iter().copied())
    }

    pub fn run(&mut self) -> Result<()> {
        while !self.is_finished() {
            self.step()?;
        }
        Ok(())
    }

    pub fn run_until(&mut self, t: f64) -> Result<()> {
        while !self.is_finished() && self.time() < t - EPS {
            self.step()?;
        }
        Ok(())
    }

    pub fn step(&mut self) -> Result<StepEvents> {
        let t = self.time();
        if self.step > 0 {
            self.update_signals(t)?;
        }
        if is_multiple(t, self.config.timing.decision_period) {
            self.sample_series(t)?;
        }
        self.log_signals(t)?;

        let mut events = StepEvents { inserted: self.insert_departures(t), ..Default::default() };
        for seg in self.network.segment_ids().collect::<Vec<_>>() {
            let s = self.network.segment(seg);
            let through = s.lane_count as usize;
            let order = if s.has_pocket() { std::iter::once(through).chain(0..through).collect() } else { (0..through).collect::<Vec<_>>() };
            for lane in order {
                self.move_lane(seg, lane, t, &mut events)?;
            }
        }
        self.step += 1;
        self.log_trajectories(self.time())?;
        events.on_network = self.active.len();
        Ok(events)
    }

    fn update_signals(&mut self, t: f64) -> Result<()> {
        let dt = self.config.clock.dt;
        let subject = self.network.subject_intersection().0 as usize;
        let due = match &mut self.signals[subject] {
            NodeSignal::Adaptive(timer) => {
                timer.advance(dt);
                timer.decision_due(t)
            }
            _ => false,
        };
        if !due {
            return Ok(());
        }
        if let Some(next) = self.pending_algorithm.take() {
            if next != self.algorithm {
                let timer = self.subject_timer();
                self.swaps.push(SwapEvent {
                    t,
                    from: self.algorithm,
                    to: next,
                    stage: timer.stage,
                    green_elapsed: timer.green_elapsed,
                });
                self.algorithm = next;
            }
        }
        let input = self.observe(self.algorithm)?;
        let decision = decide(self.algorithm, &input);
        self.decisions.push(DecisionRecord {
            t,
            algorithm: self.algorithm,
            values: input.values,
            proposed_phase: decision.proposed_phase,
            winning_movement: decision.winning_movement,
        });
        if let NodeSignal::Adaptive(timer) = &mut self.signals[subject] {
            timer.consult(t, |_| decision.proposal());
        }
        Ok(())
    }

    fn sample_series(&mut self, t: f64) -> Result<()> {
        let subject = self.network.subject_intersection();
        let mut sample = ApproachSample { t, average_delay: [0.0; 8], vehicles: [0; 8] };
        for a in self.network.approaches(subject) {
            let ledgers: Vec<DelayLedger> = self
                .approach_vehicles(a.segment, a.movement)
                .map(|id| self.vehicles[id].as_ref().unwrap().ledger)
                .collect();
            sample.vehicles[a.movement.index()] = ledgers.len();
            sample.average_delay[a.movement.index()] = average_approach_delay(&ledgers, DelayVariant::Dt1)?.average;
        }
        self.series.push(sample);
        Ok(())
    }

    fn insert_departures(&mut self, t: f64) -> Vec<usize> {
        while let Some(d) = self.plan.departures.get(self.next_departure) {
            if d.time > t + EPS {
                break;
            }
            let origin = self.plan.routes[d.flow].0[0];
            self.waiting.entry(origin).or_default().push_back(self.next_departure);
            self.next_departure += 1;
        }
        let mut inserted = Vec::new();
        let origins: Vec<SegmentId> = self.waiting.keys().copied().collect();
        for origin in origins {
            while let Some(&id) = self.waiting[&origin].front() {
                let Some((lane, room)) = self.best_entry_lane(origin) else { break };
                if room < 0.0 {
                    break;
                }
                self.waiting.get_mut(&origin).unwrap().pop_front();
                let d = self.plan.departures[id];
                let ff = self.network.segment(origin).free_flow_speed;
                self.vehicles[id] = Some(Vehicle {
                    id,
                    flow: d.flow,
                    route: d.flow,
                    route_index: 0,
                    segment: origin,
                    lane,
                    position: 0.0,
                    speed: self.config.vehicle.depart_speed.min(ff),
                    ledger: DelayLedger::default(),
                    entry_time: t,
                    depart_time: d.time,
                    insert_time: t,
                    committed: false,
                    moved_step: u64::MAX,
                });
                self.lanes[origin.index()][lane].push(id);
                self.active.insert(id);
                self.inserted += 1;
                inserted.push(id);
            }
        }
        self.waiting.retain(|_, q| !q.is_empty());
        inserted
    }

    /// Through lane of `seg` with the most room at its upstream end, as
    /// (lane, furthest admissible front position). Empty lanes report the
    /// segment length.
    fn best_entry_lane(&self, seg: SegmentId) -> Option<(usize, f64)> {
        let s = self.network.segment(seg);
        let veh = &self.config.vehicle;
        let mut best: Option<(usize, f64)> = None;
        for lane in 0..s.lane_count as usize {
            let room = match self.lanes[seg.index()][lane].last() {
                Some(&id) => {
                    let v = self.vehicles[id].as_ref().unwrap();
                    v.position - veh.length - veh.min_gap
                }
                None => s.length,
            };
            if best.map_or(true, |(_, r)| room > r) {
                best = Some((lane, room));
            }
        }
        best
    }

    fn move_lane(&mut self, seg: SegmentId, lane: usize, t: f64, events: &mut StepEvents) -> Result<()> {
        let ids = std::mem::take(&mut self.lanes[seg.index()][lane]);
        let mut kept = Vec::with_capacity(ids.len());
        let mut leader: Option<(f64, f64)> = None;
        let veh_len = self.config.vehicle.length;
        for id in ids {
            let mut v = self.vehicles[id].take().unwrap();
            if v.moved_step == self.step {
                leader = Some((v.position - veh_len, v.speed));
                self.vehicles[id] = Some(v);
                kept.push(id);
                continue;
            }
            let outcome = self.advance_vehicle(&mut v, leader, t)?;
            v.moved_step = self.step;
            match outcome {
                Outcome::Stay => {
                    leader = Some((v.position - veh_len, v.speed));
                    kept.push(id);
                    self.vehicles[id] = Some(v);
                }
                Outcome::EnterPocket => {
                    v.lane = self.network.segment(seg).lane_count as usize;
                    self.lanes[seg.index()][v.lane].push(id);
                    self.vehicles[id] = Some(v);
                }
                Outcome::Cross { next, lane: next_lane, position, t_cross } => {
                    events.crossings += 1;
                    self.record_crossing(&v, t_cross, t + self.config.clock.dt)?;
                    v.ledger = v.ledger.on_approach_transition();
                    v.entry_time = t_cross;
                    v.route_index += 1;
                    v.segment = next;
                    v.lane = next_lane;
                    v.position = position;
                    v.committed = false;
                    self.lanes[next.index()][next_lane].push(id);
                    self.vehicles[id] = Some(v);
                }
                Outcome::Arrive { t_cross } => {
                    self.active.remove(&id);
                    self.arrived += 1;
                    events.arrived.push(id);
                    self.trips.push(TripRecord {
                        vehicle: id,
                        flow: v.flow,
                        depart: v.depart_time,
                        insert: v.insert_time,
                        arrive: t_cross,
                    });
                }
            }
        }
        let appended = std::mem::take(&mut self.lanes[seg.index()][lane]);
        kept.extend(appended);
        self.lanes[seg.index()][lane] = kept;
        Ok(())
    }

    fn record_crossing(&mut self, v: &Vehicle, t_cross: f64, observed_at: f64) -> Result<()> {
        let seg = self.network.segment(v.segment);
        if seg.to != self.network.subject_intersection() {
            return Ok(());
        }
        let in_pocket = v.lane == seg.lane_count as usize;
        let movement = if in_pocket { seg.left_movement() } else { seg.through_movement() };
        let carried_over = if in_pocket && !self.config.carry_over_for_left { 0.0 } else { v.ledger.carried_over };
        self.traversals.push(Traversal {
            vehicle: v.id,
            segment: seg.name.clone(),
            movement,
            t_in: v.entry_time,
            t_out: t_cross,
            observed_at,
            stopped_delay: v.ledger.vehicle_delay_dt1()?,
            carried_over,
            segment_delay: segment_delay(v.entry_time, t_cross, seg.length, seg.free_flow_speed)?,
        });
        Ok(())
    }

    /// Chooses the vehicle's speed for this step, moves it and updates its
    /// delay ledger. Crossing into the next segment is reported, not applied.
    fn advance_vehicle(&self, v: &mut Vehicle, leader: Option<(f64, f64)>, t: f64) -> Result<Outcome> {
        let net = &self.network;
        let p = self.config.vehicle;
        let dt = self.config.clock.dt;
        let seg = net.segment(v.segment);
        let route = &self.plan.routes[v.route].0;
        let next = route.get(v.route_index + 1).copied();
        let in_pocket = v.lane == seg.lane_count as usize;
        let needs_pocket = !in_pocket && seg.has_pocket() && next.is_some_and(|n| net.turn(v.segment, n) == Turn::Left);
        let stop_line = seg.length - STOP_LINE_MARGIN;

        let mut vmax = seg.free_flow_speed;
        let mut obstacles: Vec<Obstacle> = Vec::with_capacity(2);
        if let Some((rear, speed)) = leader {
            obstacles.push(Obstacle { gap: rear - p.min_gap - v.position, speed: Some(speed) });
        }
        let mut receiving: Option<(SegmentId, usize)> = None;

        if needs_pocket {
            let pocket = &self.lanes[v.segment.index()][seg.lane_count as usize];
            match pocket.last() {
                Some(&last) => {
                    let lv = self.vehicles[last].as_ref().unwrap();
                    let room = lv.position - p.length - p.min_gap;
                    if room >= seg.pocket_start() {
                        obstacles.push(Obstacle { gap: room - v.position, speed: Some(lv.speed) });
                    } else {
                        obstacles.push(Obstacle { gap: seg.pocket_start() - v.position, speed: Some(0.0) });
                    }
                }
                None => obstacles.push(Obstacle { gap: stop_line - v.position, speed: Some(0.0) }),
            }
        } else if leader.is_none() {
            if let Some(next) = next {
                let movement = if in_pocket { seg.left_movement() } else { seg.through_movement() };
                let open = match self.light(seg.to, movement, t) {
                    Light::Green => true,
                    Light::Red => false,
                    Light::FlashingYellow => {
                        vmax *= 0.5;
                        true
                    }
                    Light::Yellow => {
                        if !v.committed {
                            let stop = krauss(stop_line - v.position, v.speed, 0.0, p.max_decel, dt);
                            v.committed = stop < v.speed - p.max_decel * dt - EPS;
                        }
                        v.committed
                    }
                };
                let entry = if open { self.best_entry_lane(next) } else { None };
                match entry {
                    Some((lane, room)) if room >= 0.0 => {
                        let last_speed = self.lanes[next.index()][lane]
                            .last()
                            .map(|&id| self.vehicles[id].as_ref().unwrap().speed);
                        obstacles.push(Obstacle { gap: seg.length - v.position + room, speed: last_speed });
                        receiving = Some((next, lane));
                    }
                    _ => obstacles.push(Obstacle { gap: stop_line - v.position, speed: Some(0.0) }),
                }
            }
        }

        let mut speed = (v.speed + p.max_accel * dt).min(vmax);
        for o in &obstacles {
            let gap = o.gap.max(0.0);
            if let Some(vl) = o.speed {
                speed = speed.min(krauss(gap, v.speed, vl, p.max_decel, dt));
            }
            speed = speed.min(gap / dt);
        }
        let speed = speed.max(0.0);
        let old_position = v.position;
        let new_position = old_position + speed * dt;
        v.speed = speed;
        v.ledger = v.ledger.update_waiting(speed, dt);
        let t_cross = |at: f64| if speed > 0.0 { t + (at - old_position) / speed } else { t + dt };

        if next.is_none() && new_position >= seg.length - EPS {
            return Ok(Outcome::Arrive { t_cross: t_cross(seg.length) });
        }
        if new_position >= seg.length - EPS {
            let (next, lane) = receiving.expect("crossing requires an open receiving lane");
            let (_, room) = self.best_entry_lane(next).unwrap();
            return Ok(Outcome::Cross {
                next,
                lane,
                position: (new_position - seg.length).max(0.0).min(room),
                t_cross: t_cross(seg.length),
            });
        }
        v.position = new_position;
        if needs_pocket && new_position >= seg.pocket_start() - EPS {
            let pocket = &self.lanes[v.segment.index()][seg.lane_count as usize];
            let fits = pocket.last().map_or(true, |&last| {
                let lv = self.vehicles[last].as_ref().unwrap();
                lv.position - p.length - p.min_gap >= new_position - EPS
            });
            if fits {
                return Ok(Outcome::EnterPocket);
            }
        }
        Ok(Outcome::Stay)
    }

    fn log_signals(&mut self, t: f64) -> Result<()> {
        let Some(w) = self.sinks.signals.as_mut() else { return Ok(()) };
        for (i, s) in self.signals.iter().enumerate() {
            let name = &self.network.nodes()[i].name;
            match s {
                NodeSignal::Adaptive(timer) => {
                    let phase = if timer.status == SignalStatus::OutOfOrder { "flash".to_string() } else { timer.current_phase.to_string() };
                    writeln!(w, "{t},{name},{phase},{},{}", timer.stage.label(), timer.green_elapsed)?;
                }
                NodeSignal::Fixed(plan) => {
                    let (phase, stage, green) = plan.phase_code(t);
                    writeln!(w, "{t},{name},{phase},{},{green}", stage.label())?;
                }
                NodeSignal::Unsignalized => {}
            }
        }
        Ok(())
    }

    fn log_trajectories(&mut self, t: f64) -> Result<()> {
        let Some(w) = self.sinks.trajectory.as_mut() else { return Ok(()) };
        for &id in &self.active {
            let v = self.vehicles[id].as_ref().unwrap();
            writeln!(
                w,
                "{t},{id},{},{},{},{},{}",
                self.network.segment(v.segment).name,
                v.position,
                v.speed,
                v.ledger.waiting,
                v.ledger.accumulated
            )?;
        }
        Ok(())
    }

    /// Checks the no-overlap and speed-bound invariants; returns a
    /// description of the first violation.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        let p = self.config.vehicle;
        for seg in self.network.segment_ids() {
            let s = self.network.segment(seg);
            for (lane, ids) in self.lanes[seg.index()].iter().enumerate() {
                for w in ids.windows(2) {
                    let (a, b) = (self.vehicles[w[0]].as_ref().unwrap(), self.vehicles[w[1]].as_ref().unwrap());
                    if b.position + p.min_gap > a.position - p.length + 1e-6 {
                        return Err(format!("vehicles {} and {} overlap on {} lane {lane}", a.id, b.id, s.name));
                    }
                }
                for &id in ids {
                    let v = self.vehicles[id].as_ref().unwrap();
                    if v.speed < 0.0 || v.speed > s.free_flow_speed + 1e-9 {
                        return Err(format!("vehicle {id} speed {} out of bounds", v.speed));
                    }
                    if v.position < -1e-9 || v.position > s.length + 1e-9 {
                        return Err(format!("vehicle {id} position {} off segment", v.position));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<SimulationResult> {
        if let Some(w) = self.sinks.trajectory.as_mut() {
            w.flush()?;
        }
        if let Some(w) = self.sinks.signals.as_mut() {
            w.flush()?;
        }
        let clock = self.config.clock;
        let summary = summarize(&self.traversals, &clock)?;
        Ok(SimulationResult {
            algorithm: self.algorithm,
            clock,
            subject_intersection: self.network.node(self.network.subject_intersection()).name.clone(),
            signal_status: self.subject_timer().status,
            summary,
            inserted: self.inserted,
            arrived: self.arrived,
            on_network_at_end: self.active.len(),
            not_inserted: self.plan.departures.len() - self.inserted,
            traversals: self.traversals,
            decisions: self.decisions,
            swaps: self.swaps,
            approach_series: self.series,
            trips: self.trips,
        })
    }
}

/// Largest speed that lets the follower stop behind a leader braking at
/// the same rate, for gap `gap` after one step of length `dt`.
pub fn krauss(gap: f64, speed: f64, leader_speed: f64, decel: f64, dt: f64) -> f64 {
    let v = leader_speed + (gap - leader_speed * dt) / ((speed + leader_speed) / (2.0 * decel) + dt);
    v.max(0.0)
}

fn is_multiple(t: f64, period: f64) -> bool {
    let k = (t / period).round();
    (t - k * period).abs() < 1e-6
}

/// Runs a full simulation for one demand plan and controller.
pub fn simulate(network: Arc<Network>, config: SimConfig, plan: DemandPlan, algorithm: Algorithm, sinks: Option<LogSinks>) -> Result<SimulationResult> {
    let mut sim = Simulation::new(network, config, plan, algorithm)?;
    if let Some(s) = sinks {
        sim.attach_sinks(s)?;
    }
    sim.run()?;
    sim.finish()
}
