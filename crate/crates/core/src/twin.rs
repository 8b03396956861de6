//! Digital-twin loop: estimate the live demand, forecast candidates, score
//! every (candidate, controller) pair in parallel simulations and hand the
//! best controller to the live run.

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::controllers::Algorithm;
use crate::error::{Error, Result};
use crate::metrics::Grade;
use crate::network::Network;
use crate::seed;
use crate::traffic::{DemandPlan, DepartureMode, Flow, LogSinks, SimClock, SimConfig, Simulation, SimulationResult, SwapEvent};

/// The nine twin dimensions and what realizes each of them in this crate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TwinDimensions(pub BTreeMap<String, String>);

impl TwinDimensions {
    pub const SYMBOLS: [&'static str; 9] = ["PE", "DS", "DD", "MO", "SI", "TP", "CA", "AP", "CG"];

    pub fn describe() -> TwinDimensions {
        let entries = [
            ("PE", "live traffic::Simulation (vehicles, signals, road network)"),
            ("DS", "twin-side traffic::Simulation instances started from forecast demand"),
            ("DD", "trajectory.csv, signals.csv, departures.csv and this manifest"),
            ("MO", "traffic car-following model and delay::DelayLedger accounting"),
            ("SI", "twin::run_parallel simulation jobs"),
            ("TP", "twin::Forecaster (scaling-factor forecast by default)"),
            ("CA", "controllers: baseline, dt1, dt2"),
            ("AP", "twin::select_controller applied to the live subject intersection"),
            ("CG", "cli file I/O between the live run and the twin"),
        ];
        TwinDimensions(entries.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect())
    }

    pub fn is_complete(&self) -> bool {
        Self::SYMBOLS.iter().all(|s| self.0.get(*s).is_some_and(|v| !v.is_empty()))
    }
}

/// Per-flow demand measured over a trailing window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandEstimate {
    pub window_length: f64,
    pub vph: Vec<f64>,
}

/// Counts departures per flow in `[now - window, now)` and converts to vph.
pub fn estimate_demand(plan: &DemandPlan, now: f64, window: f64) -> Result<DemandEstimate> {
    if !(window > 0.0) {
        return Err(Error::Argument(format!("estimate window must be positive, got {window}")));
    }
    let mut counts = vec![0usize; plan.flows.len()];
    let start = now - window;
    for d in &plan.departures {
        if d.time >= start && d.time < now {
            counts[d.flow] += 1;
        }
    }
    Ok(DemandEstimate { window_length: window, vph: counts.iter().map(|&c| c as f64 * 3600.0 / window).collect() })
}

/// Produces candidate demand vectors from a measurement.
pub trait Forecaster: Sync {
    fn forecast(&self, estimate: &DemandEstimate) -> Result<Vec<Vec<f64>>>;
}

/// Scales the measured demand by each factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingForecaster {
    pub factors: Vec<f64>,
}

impl Forecaster for ScalingForecaster {
    fn forecast(&self, estimate: &DemandEstimate) -> Result<Vec<Vec<f64>>> {
        forecast_demands(estimate, &self.factors)
    }
}

pub fn forecast_demands(estimate: &DemandEstimate, factors: &[f64]) -> Result<Vec<Vec<f64>>> {
    if factors.is_empty() || factors.iter().any(|f| !(*f > 0.0) || !f.is_finite()) {
        return Err(Error::Config("forecast factors must be non-empty and positive".into()));
    }
    Ok(factors.iter().map(|f| estimate.vph.iter().map(|v| v * f).collect()).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationJob {
    pub id: usize,
    /// Index of the candidate demand this job simulates.
    pub candidate: usize,
    pub vph: Vec<f64>,
    pub algorithm: Algorithm,
    pub seed: u64,
    pub clock: SimClock,
}

/// Runs one job to completion.
pub trait JobRunner: Sync {
    fn run(&self, job: &SimulationJob) -> Result<SimulationResult>;
}

/// Simulates a job on a shared network with the given flows, rescaled to
/// the job's demand vector. Jobs start from an empty network.
pub struct SimJobRunner {
    pub network: Arc<Network>,
    pub flows: Vec<Flow>,
    pub config: SimConfig,
    pub mode: DepartureMode,
}

impl JobRunner for SimJobRunner {
    fn run(&self, job: &SimulationJob) -> Result<SimulationResult> {
        if job.vph.len() != self.flows.len() {
            return Err(Error::DimensionMismatch { expected: self.flows.len(), found: job.vph.len() });
        }
        let flows: Vec<Flow> = self.flows.iter().zip(&job.vph).map(|(f, &vph)| Flow { vph, ..f.clone() }).collect();
        let plan = DemandPlan::constant(&self.network, &flows, job.clock.horizon, job.seed, self.mode)?;
        let config = SimConfig { clock: job.clock, ..self.config.clone() };
        let mut sim = Simulation::new(self.network.clone(), config, plan, job.algorithm)?;
        sim.run()?;
        sim.finish()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobResult {
    pub job: SimulationJob,
    pub outcome: std::result::Result<SimulationResult, String>,
}

/// Runs every job on a pool of `parallelism` threads. A failing job only
/// affects its own slot. Output is sorted by job id.
pub fn run_parallel(jobs: &[SimulationJob], parallelism: usize, runner: &dyn JobRunner) -> Result<Vec<JobResult>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let mut out: Vec<JobResult> = pool.install(|| {
        jobs.par_iter()
            .map(|job| JobResult { job: job.clone(), outcome: runner.run(job).map_err(|e| e.to_string()) })
            .collect()
    });
    out.sort_by_key(|r| r.job.id);
    Ok(out)
}

/// Index of the candidate nearest to `measured` in Euclidean distance;
/// ties go to the smallest index.
pub fn match_demand(measured: &[f64], candidates: &[Vec<f64>]) -> Result<usize> {
    if candidates.is_empty() {
        return Err(Error::Argument("no candidate demands".into()));
    }
    let mut best = (0, f64::INFINITY);
    for (i, c) in candidates.iter().enumerate() {
        if c.len() != measured.len() {
            return Err(Error::DimensionMismatch { expected: measured.len(), found: c.len() });
        }
        let d: f64 = c.iter().zip(measured).map(|(a, b)| (a - b) * (a - b)).sum();
        if d < best.1 {
            best = (i, d);
        }
    }
    Ok(best.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredJob {
    pub job_id: usize,
    pub algorithm: Algorithm,
    pub mean_control_delay: f64,
    pub los: Grade,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwinSelection {
    pub scored: Vec<ScoredJob>,
    pub chosen_algorithm: Algorithm,
    pub matched_demand: usize,
}

/// Picks the lowest mean control delay; ties go to the earlier algorithm in
/// registration order.
pub fn select_controller(scored: &[ScoredJob], matched_demand: usize) -> Result<TwinSelection> {
    let best = scored
        .iter()
        .min_by(|a, b| a.mean_control_delay.total_cmp(&b.mean_control_delay).then(a.algorithm.cmp(&b.algorithm)))
        .ok_or(Error::EmptyResults)?;
    Ok(TwinSelection { scored: scored.to_vec(), chosen_algorithm: best.algorithm, matched_demand })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TwinConfig {
    pub period: f64,
    pub factors: Vec<f64>,
    pub estimate_window: f64,
    pub job_clock: SimClock,
    pub algorithms: Vec<Algorithm>,
    pub initial_algorithm: Algorithm,
    pub parallelism: usize,
}

impl Default for TwinConfig {
    fn default() -> Self {
        TwinConfig {
            period: 300.0,
            factors: vec![0.8, 1.0, 1.2],
            estimate_window: 300.0,
            job_clock: SimClock { dt: 1.0, horizon: 900.0, warmup: 300.0, cooldown: 0.0 },
            algorithms: Algorithm::ALL.to_vec(),
            initial_algorithm: Algorithm::Baseline,
            parallelism: 1,
        }
    }
}

impl TwinConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.period > 0.0) || !(self.estimate_window > 0.0) {
            return Err(Error::Config("twin period and estimate window must be positive".into()));
        }
        if self.algorithms.is_empty() {
            return Err(Error::Config("twin needs at least one algorithm".into()));
        }
        forecast_demands(&DemandEstimate { window_length: 1.0, vph: vec![] }, &self.factors)?;
        self.job_clock.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PeriodStatus {
    Ok,
    Degraded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobRecord {
    pub job: SimulationJob,
    pub mean_control_delay: Option<f64>,
    pub los: Option<Grade>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodRecord {
    pub index: usize,
    pub boundary: f64,
    pub estimate: DemandEstimate,
    pub candidates: Vec<Vec<f64>>,
    pub jobs: Vec<JobRecord>,
    pub matched_demand: Option<usize>,
    pub chosen_algorithm: Option<Algorithm>,
    pub status: PeriodStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwinManifest {
    pub dimensions: TwinDimensions,
    pub config: TwinConfig,
    pub root_seed: u64,
    pub periods: Vec<PeriodRecord>,
    pub swaps: Vec<SwapEvent>,
    pub final_algorithm: Algorithm,
}

impl TwinManifest {
    pub fn job_count(&self) -> usize {
        self.periods.iter().map(|p| p.jobs.len()).sum()
    }
}

pub struct TwinRun {
    pub manifest: TwinManifest,
    pub live: SimulationResult,
}

/// Seed shared by every job of one twin period.
pub fn period_seed(root: u64, period: usize) -> u64 {
    seed::derive_seed(root, &format!("twin/period/{period}"))
}

/// Drives the live simulation, re-evaluating the controller at every period
/// boundary. The swap requested at a boundary is applied by the live run at
/// its next green-stage decision point.
pub fn live_loop(
    network: Arc<Network>,
    live_config: SimConfig,
    live_plan: DemandPlan,
    twin: &TwinConfig,
    forecaster: &dyn Forecaster,
    runner: &dyn JobRunner,
    root_seed: u64,
    sinks: Option<LogSinks>,
) -> Result<TwinRun> {
    twin.validate()?;
    let mut sim = Simulation::new(network, live_config, live_plan, twin.initial_algorithm)?;
    if let Some(s) = sinks {
        sim.attach_sinks(s)?;
    }
    let horizon = sim.config().clock.horizon;
    let mut periods = Vec::new();
    let mut next_id = 0;
    let mut index = 0;
    loop {
        let boundary = (index + 1) as f64 * twin.period;
        if boundary >= horizon - 1e-9 {
            break;
        }
        sim.run_until(boundary)?;
        let estimate = estimate_demand(sim.plan(), boundary, twin.estimate_window)?;
        let candidates = forecaster.forecast(&estimate)?;
        let seed = period_seed(root_seed, index);
        let mut jobs = Vec::new();
        for (c, vph) in candidates.iter().enumerate() {
            for &algorithm in &twin.algorithms {
                jobs.push(SimulationJob { id: next_id, candidate: c, vph: vph.clone(), algorithm, seed, clock: twin.job_clock });
                next_id += 1;
            }
        }
        let results = run_parallel(&jobs, twin.parallelism, runner)?;
        let records: Vec<JobRecord> = results
            .iter()
            .map(|r| match &r.outcome {
                Ok(res) => JobRecord {
                    job: r.job.clone(),
                    mean_control_delay: Some(res.summary.mean_control_delay()),
                    los: Some(res.summary.control.los.grade),
                    error: None,
                },
                Err(e) => JobRecord { job: r.job.clone(), mean_control_delay: None, los: None, error: Some(e.clone()) },
            })
            .collect();
        let mut record = PeriodRecord {
            index,
            boundary,
            estimate,
            candidates,
            jobs: records,
            matched_demand: None,
            chosen_algorithm: None,
            status: PeriodStatus::Degraded,
        };
        if record.jobs.iter().all(|j| j.error.is_none()) {
            let matched = match_demand(&record.estimate.vph, &record.candidates)?;
            let scored: Vec<ScoredJob> = record
                .jobs
                .iter()
                .filter(|j| j.job.candidate == matched)
                .map(|j| ScoredJob {
                    job_id: j.job.id,
                    algorithm: j.job.algorithm,
                    mean_control_delay: j.mean_control_delay.unwrap(),
                    los: j.los.unwrap(),
                })
                .collect();
            let selection = select_controller(&scored, matched)?;
            sim.request_algorithm(selection.chosen_algorithm);
            record.matched_demand = Some(matched);
            record.chosen_algorithm = Some(selection.chosen_algorithm);
            record.status = PeriodStatus::Ok;
        }
        periods.push(record);
        index += 1;
    }
    sim.run()?;
    let live = sim.finish()?;
    let manifest = TwinManifest {
        dimensions: TwinDimensions::describe(),
        config: twin.clone(),
        root_seed,
        periods,
        swaps: live.swaps.clone(),
        final_algorithm: live.algorithm,
    };
    Ok(TwinRun { manifest, live })
}
