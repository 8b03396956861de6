mod common;

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use signaltwin::controllers::Algorithm;
use signaltwin::network::Network;
use signaltwin::signal::Stage;
use signaltwin::traffic::{DemandPlan, DemandScenario, DepartureMode, RatePiece, SimClock, SimConfig, SimulationResult, TemplateShares};
use signaltwin::twin::{
    live_loop, match_demand, run_parallel, JobRunner, PeriodStatus, ScalingForecaster, SimJobRunner, SimulationJob, TwinConfig, TwinRun,
};
use signaltwin::{Error, Result};

fn setup() -> (Arc<Network>, DemandScenario) {
    let net = common::grid(3, 3);
    let scenario = common::catalog(&net, TemplateShares::default(), 200.0, 2);
    (net, scenario)
}

fn runner(net: &Arc<Network>, scenario: &DemandScenario) -> SimJobRunner {
    SimJobRunner { network: net.clone(), flows: scenario.flows.clone(), config: SimConfig::default(), mode: DepartureMode::Poisson }
}

#[test]
fn parallel_results_match_serial_reruns() {
    let (net, scenario) = setup();
    let r = runner(&net, &scenario);
    let base = scenario.vph_vector();
    let clock = SimClock { dt: 1.0, horizon: 900.0, warmup: 300.0, cooldown: 0.0 };
    let mut jobs = Vec::new();
    for (c, factor) in [1.0, 1.5].into_iter().enumerate() {
        for algorithm in Algorithm::ALL {
            let id = jobs.len();
            jobs.push(SimulationJob { id, candidate: c, vph: base.iter().map(|v| v * factor).collect(), algorithm, seed: 77, clock });
        }
    }
    let serial = run_parallel(&jobs, 1, &r).unwrap();
    let wide = run_parallel(&jobs, 8, &r).unwrap();
    assert_eq!(serde_json::to_string(&serial).unwrap(), serde_json::to_string(&wide).unwrap());
    for (job, res) in jobs.iter().zip(&serial) {
        assert_eq!(res.job.id, job.id);
        let again = r.run(job).unwrap();
        assert_eq!(res.outcome.as_ref().unwrap().summary.mean_control_delay(), again.summary.mean_control_delay());
    }
}

#[test]
fn match_demand_agrees_with_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let dim = rng.gen_range(1..12);
        let measured: Vec<f64> = (0..dim).map(|_| rng.gen_range(0..50) as f64 * 10.0).collect();
        let mut candidates: Vec<Vec<f64>> = (0..rng.gen_range(1..6))
            .map(|_| (0..dim).map(|_| rng.gen_range(0..50) as f64 * 10.0).collect())
            .collect();
        if rng.gen_bool(0.3) {
            let dup = candidates[0].clone();
            candidates.push(dup);
        }
        let dist = |c: &Vec<f64>| c.iter().zip(&measured).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let best = candidates.iter().map(dist).fold(f64::INFINITY, f64::min);
        let want = candidates.iter().position(|c| dist(c) == best).unwrap();
        assert_eq!(match_demand(&measured, &candidates).unwrap(), want);
    }
    assert!(matches!(match_demand(&[1.0, 2.0], &[vec![1.0]]), Err(Error::DimensionMismatch { .. })));
}

/// Short real runs whose score is replaced by a rule of the job.
struct Scripted<'a, F: Fn(&SimulationJob) -> f64 + Sync> {
    inner: &'a SimJobRunner,
    score: F,
}

impl<F: Fn(&SimulationJob) -> f64 + Sync> JobRunner for Scripted<'_, F> {
    fn run(&self, job: &SimulationJob) -> Result<SimulationResult> {
        let mut r = self.inner.run(job)?;
        r.summary.control.mean_control_delay = (self.score)(job);
        Ok(r)
    }
}

struct Broken;
impl JobRunner for Broken {
    fn run(&self, _: &SimulationJob) -> Result<SimulationResult> {
        Err(Error::Argument("job failed".into()))
    }
}

fn live(net: &Arc<Network>, scenario: &DemandScenario, horizon: f64, step: Option<(f64, f64)>, job_runner: &dyn JobRunner) -> TwinRun {
    let pieces: Vec<Vec<RatePiece>> = scenario
        .flows
        .iter()
        .map(|f| match step {
            Some((at, k)) => vec![RatePiece { start: 0.0, end: at, vph: f.vph }, RatePiece { start: at, end: horizon, vph: f.vph * k }],
            None => vec![RatePiece { start: 0.0, end: horizon, vph: f.vph }],
        })
        .collect();
    let plan = DemandPlan::piecewise(net, &scenario.flows, &pieces, 21, DepartureMode::Poisson).unwrap();
    let config = SimConfig { clock: SimClock { dt: 1.0, horizon, warmup: 0.0, cooldown: 0.0 }, ..SimConfig::default() };
    let twin = TwinConfig { job_clock: SimClock { dt: 1.0, horizon: 60.0, warmup: 0.0, cooldown: 0.0 }, ..TwinConfig::default() };
    let forecaster = ScalingForecaster { factors: twin.factors.clone() };
    live_loop(net.clone(), config, plan, &twin, &forecaster, job_runner, 3, None).unwrap()
}

#[test]
fn constant_preference_swaps_once() {
    let (net, scenario) = setup();
    let inner = runner(&net, &scenario);
    let scripted = Scripted { inner: &inner, score: |j: &SimulationJob| if j.algorithm == Algorithm::Dt1 { 1.0 } else { 10.0 } };
    let run = live(&net, &scenario, 1800.0, None, &scripted);
    assert_eq!(run.manifest.periods.len(), 5);
    assert_eq!(run.manifest.swaps.len(), 1);
    let s = &run.manifest.swaps[0];
    assert_eq!((s.from, s.to), (Algorithm::Baseline, Algorithm::Dt1));
    assert!(s.t >= 300.0 && s.t < 600.0);
    assert_eq!(run.manifest.final_algorithm, Algorithm::Dt1);
}

#[test]
fn step_change_swaps_follow_selections() {
    let (net, scenario) = setup();
    let inner = runner(&net, &scenario);
    let base_total: f64 = scenario.vph_vector().iter().sum();
    let scripted = Scripted {
        inner: &inner,
        score: move |j: &SimulationJob| {
            let heavy = j.vph.iter().sum::<f64>() > 1.6 * base_total;
            match (heavy, j.algorithm) {
                (false, Algorithm::Dt1) | (true, Algorithm::Dt2) => 1.0,
                _ => 5.0,
            }
        },
    };
    let run = live(&net, &scenario, 2700.0, Some((1200.0, 3.0)), &scripted);
    let m = &run.manifest;
    let mut current = Algorithm::Baseline;
    let mut expected = Vec::new();
    for (k, p) in m.periods.iter().enumerate() {
        assert_eq!(p.status, PeriodStatus::Ok);
        let chosen = p.chosen_algorithm.unwrap();
        if chosen != current {
            let end = m.periods.get(k + 1).map_or(2700.0, |n| n.boundary);
            expected.push((p.boundary, end, current, chosen));
            current = chosen;
        }
    }
    assert!(expected.iter().any(|e| e.3 == Algorithm::Dt2), "step change never favoured dt2");
    assert_eq!(m.swaps.len(), expected.len());
    for (s, (start, end, from, to)) in m.swaps.iter().zip(&expected) {
        assert!(s.t >= *start && s.t < *end, "swap at {} outside [{start}, {end})", s.t);
        assert_eq!((s.from, s.to), (*from, *to));
        assert_eq!(s.stage, Stage::Green);
        assert!(s.green_elapsed > 5.0);
        assert_eq!(s.t % 5.0, 0.0);
    }
}

#[test]
fn failed_jobs_keep_the_controller() {
    let (net, scenario) = setup();
    let run = live(&net, &scenario, 900.0, None, &Broken);
    assert_eq!(run.manifest.periods.len(), 2);
    assert!(run.manifest.periods.iter().all(|p| p.status == PeriodStatus::Degraded && p.chosen_algorithm.is_none()));
    assert!(run.manifest.swaps.is_empty());
    assert_eq!(run.manifest.final_algorithm, Algorithm::Baseline);
    assert_eq!(run.live.algorithm, Algorithm::Baseline);
}
