//! Acceptance harness: one PASS/FAIL line per criterion, nonzero exit on
//! any failure.

mod common;

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use signaltwin::cli::{cmd_simulate, cmd_twin, CatalogSpec, RunConfig, ScenarioSpec, StepChange, TwinSettings};
use signaltwin::controllers::{decide, Algorithm, DecisionInput};
use signaltwin::metrics::{los_from_control_delay, reduction_percent, skewness, stopped_delays, Grade};
use signaltwin::network::{Movement, Network};
use signaltwin::signal::{Phase, Stage};
use signaltwin::traffic::{simulate, DepartureMode, LogSinks, SimClock, SimConfig, SimulationResult, TemplateShares};
use signaltwin::twin::{run_parallel, PeriodStatus, SimJobRunner, SimulationJob, TwinConfig, TwinManifest};

use common::{chain_oracle, replay, Sample};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn subject_name(net: &Network) -> String {
    net.node(net.subject_intersection()).name.clone()
}

fn run_logged(net: &Arc<Network>, shares: TemplateShares, id: u32, seed: u64, algorithm: Algorithm, dir: &Path) -> (SimulationResult, Duration) {
    let scenario = common::catalog(net, shares, 200.0, id);
    let started = Instant::now();
    let plan = common::plan(net, &scenario, 3600.0, seed);
    let sinks = LogSinks {
        trajectory: Some(Box::new(BufWriter::new(File::create(dir.join("trajectory.csv")).unwrap()))),
        signals: Some(Box::new(BufWriter::new(File::create(dir.join("signals.csv")).unwrap()))),
    };
    let r = simulate(net.clone(), SimConfig::default(), plan, algorithm, Some(sinks)).unwrap();
    (r, started.elapsed())
}

fn run_plain(net: &Arc<Network>, shares: TemplateShares, id: u32, seed: u64, algorithm: Algorithm) -> SimulationResult {
    let scenario = common::catalog(net, shares, 200.0, id);
    let plan = common::plan(net, &scenario, 3600.0, seed);
    simulate(net.clone(), SimConfig::default(), plan, algorithm, None).unwrap()
}

fn phase_machine() -> Outcome {
    let net = common::grid(3, 3);
    let dir = tempfile::tempdir().unwrap();
    let subject = subject_name(&net);
    let mut slowest = Duration::ZERO;
    let mut changes = 0;
    for id in [1, 6, 11] {
        for a in Algorithm::ALL {
            let (r, took) = run_logged(&net, TemplateShares::default(), id, 1, a, dir.path());
            slowest = slowest.max(took);
            ensure(took < Duration::from_secs(5), || format!("scenario {id} {a} took {took:?}"))?;
            let rows = common::signal_rows(&dir.path().join("signals.csv"), &subject);
            ensure(rows.len() == 3600, || format!("expected 3600 signal rows, got {}", rows.len()))?;
            let v = common::phase_machine_violations(&rows);
            ensure(v.is_empty(), || format!("scenario {id} {a}: {} violations, first {}", v.len(), v[0]))?;
            ensure(r.decisions.iter().all(|d| d.t % 5.0 == 0.0), || format!("scenario {id} {a}: decision off the 5 s grid"))?;
            changes += rows.iter().filter(|r| r.stage == "all_red").count();
        }
    }
    Ok(format!("9 runs, {changes} all-red seconds, 0 violations, slowest run {:.2} s", slowest.as_secs_f64()))
}

fn delay_semantics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for i in 0..10_000 {
        let dt = [1.0, 0.5, 0.25][i % 3];
        let trace: Vec<Sample> = (0..rng.gen_range(0..400))
            .map(|_| Sample {
                speed: match rng.gen_range(0..5) {
                    0 => 0.0,
                    1 => 0.1,
                    2 => rng.gen_range(0.0..0.2),
                    _ => rng.gen_range(0.0..15.0),
                },
                cross: rng.gen_bool(0.03),
            })
            .collect();
        let ledger = common::run(&trace, dt);
        let want = replay(&trace, dt);
        let stopped = trace.iter().filter(|s| s.speed < 0.1).count() as f64;
        ensure(ledger.accumulated == dt * stopped, || format!("trace {i}: accumulated {} != {}", ledger.accumulated, dt * stopped))?;
        ensure(ledger.waiting == want.waiting, || format!("trace {i}: waiting mismatch"))?;
        ensure(ledger.vehicle_delay_dt1().unwrap() == want.dt1, || format!("trace {i}: DT1 ledger mismatch"))?;
        ensure(ledger.vehicle_delay_dt2().unwrap() == want.dt2, || format!("trace {i}: DT2 ledger mismatch"))?;
    }
    Ok("10000 traces, exact".into())
}

fn controller_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let check = |values: [f64; 8]| -> Result<(), String> {
        let input = DecisionInput::new(values).unwrap();
        for a in Algorithm::ALL {
            let got = decide(a, &input).proposed_phase.map(Phase::index);
            ensure(got == chain_oracle(&values), || format!("{a} {values:?}: {got:?} vs {:?}", chain_oracle(&values)))?;
        }
        Ok(())
    };
    for i in 0..10_000 {
        let values: [f64; 8] = std::array::from_fn(|_| if i % 2 == 0 { rng.gen_range(0.0..100.0) } else { rng.gen_range(0..4) as f64 });
        check(values)?;
    }
    for mask in 1u32..256 {
        check(std::array::from_fn(|i| if mask & (1 << i) != 0 { 9.0 } else { 2.0 }))?;
    }
    Ok("10000 random inputs x 3 algorithms, 255 tie patterns".into())
}

fn los_table() -> Outcome {
    let table = [
        (0.0, Grade::A),
        (5.0, Grade::A),
        (10.0, Grade::A),
        (10.1, Grade::B),
        (15.0, Grade::B),
        (20.0, Grade::B),
        (20.1, Grade::C),
        (27.0, Grade::C),
        (35.0, Grade::C),
        (35.1, Grade::D),
        (45.0, Grade::D),
        (55.0, Grade::D),
        (55.1, Grade::E),
        (70.0, Grade::E),
        (80.0, Grade::E),
        (80.1, Grade::F),
        (200.0, Grade::F),
    ];
    for (d, g) in table {
        let got = los_from_control_delay(d).map_err(|e| e.to_string())?.grade;
        ensure(got == g, || format!("{d} s graded {got}, expected {g}"))?;
    }
    Ok(format!("{} points exact", table.len()))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for name in ["a", "b"] {
        let cfg = RunConfig { algorithms: vec![Algorithm::Dt2], seed: 5, out_dir: dir.path().join(name), ..RunConfig::default() };
        cmd_simulate(&cfg).map_err(|e| e.to_string())?;
        outputs.push(cfg.out_dir);
    }
    for f in ["trajectory.csv", "signals.csv", "summary.json", "result.json", "departures.csv"] {
        let (x, y) = (fs::read(outputs[0].join(f)).unwrap(), fs::read(outputs[1].join(f)).unwrap());
        ensure(x == y, || format!("{f} differs"))?;
    }
    let net = common::grid(3, 3);
    let scenario = common::catalog(&net, TemplateShares::default(), 200.0, 2);
    let runner = SimJobRunner { network: net, flows: scenario.flows.clone(), config: SimConfig::default(), mode: DepartureMode::Poisson };
    let clock = SimClock { dt: 1.0, horizon: 900.0, warmup: 300.0, cooldown: 0.0 };
    let jobs: Vec<SimulationJob> = (0..6)
        .map(|id| SimulationJob {
            id,
            candidate: id / 3,
            vph: scenario.vph_vector().iter().map(|v| v * (1.0 + (id / 3) as f64 * 0.5)).collect(),
            algorithm: Algorithm::ALL[id % 3],
            seed: 8,
            clock,
        })
        .collect();
    let reference = serde_json::to_string(&run_parallel(&jobs, 1, &runner).map_err(|e| e.to_string())?).unwrap();
    for p in [2, 4, 8] {
        let other = serde_json::to_string(&run_parallel(&jobs, p, &runner).map_err(|e| e.to_string())?).unwrap();
        ensure(other == reference, || format!("run_parallel output differs at parallelism {p}"))?;
    }
    Ok("simulate artifacts byte-identical; run_parallel identical at 1/2/4/8 threads".into())
}

struct Asymmetric {
    runs: BTreeMap<Algorithm, Vec<SimulationResult>>,
    elapsed: Duration,
}

fn asymmetric_runs() -> Asymmetric {
    let net = common::grid(3, 3);
    let started = Instant::now();
    let mut runs = BTreeMap::new();
    for a in Algorithm::ALL {
        runs.insert(a, (1..=5).map(|seed| run_plain(&net, TemplateShares::asymmetric(), 3, seed, a)).collect());
    }
    Asymmetric { runs, elapsed: started.elapsed() }
}

fn seed_averaged_aasd(results: &[SimulationResult]) -> [f64; 8] {
    std::array::from_fn(|i| results.iter().map(|r| r.summary.movements[i].aasd).sum::<f64>() / results.len() as f64)
}

fn delay_distribution(asym: &Asymmetric) -> Outcome {
    let mut out = Vec::new();
    let base = seed_averaged_aasd(&asym.runs[&Algorithm::Baseline]);
    let max = |v: &[f64; 8]| v.iter().copied().fold(0.0, f64::max);
    let spread = |v: &[f64; 8]| {
        let t: Vec<f64> = Movement::THROUGH.iter().map(|m| v[m.index()]).collect();
        t.iter().copied().fold(f64::MIN, f64::max) - t.iter().copied().fold(f64::MAX, f64::min)
    };
    out.push(format!("baseline max {:.1} spread {:.1}", max(&base), spread(&base)));
    for a in [Algorithm::Dt1, Algorithm::Dt2] {
        let v = seed_averaged_aasd(&asym.runs[&a]);
        out.push(format!("{a} max {:.1} spread {:.1}", max(&v), spread(&v)));
        ensure(max(&v) < max(&base), || format!("{a} max AASD {:.2} not below baseline {:.2}", max(&v), max(&base)))?;
        ensure(spread(&v) < 0.5 * spread(&base), || format!("{a} spread {:.2} not below half of baseline {:.2}", spread(&v), spread(&base)))?;
    }
    ensure(asym.elapsed < Duration::from_secs(120), || format!("15 runs took {:?}", asym.elapsed))?;
    Ok(format!("{}; 15 runs in {:.1} s", out.join(", "), asym.elapsed.as_secs_f64()))
}

fn low_demand() -> Outcome {
    let net = common::grid(3, 3);
    let mut wins = 0;
    let mut lines = Vec::new();
    for id in 1..=3 {
        for seed in 1..=5 {
            let base = run_plain(&net, TemplateShares::default(), id, seed, Algorithm::Baseline).summary.mean_control_delay();
            let dt2 = run_plain(&net, TemplateShares::default(), id, seed, Algorithm::Dt2).summary.mean_control_delay();
            if dt2 <= base {
                wins += 1;
            }
            lines.push(format!("s{id}/seed{seed} {:+.1}%", reduction_percent(base, dt2).unwrap_or(0.0)));
        }
    }
    println!("    DT2 control-delay reduction vs baseline: {}", lines.join(", "));
    ensure(wins >= 12, || format!("DT2 <= baseline in only {wins}/15 runs"))?;
    Ok(format!("DT2 <= baseline in {wins}/15 runs"))
}

fn right_skew(asym: &Asymmetric) -> Outcome {
    let mut out = Vec::new();
    for (a, results) in &asym.runs {
        let pooled: Vec<f64> = results.iter().flat_map(|r| stopped_delays(r, None)).collect();
        let s = skewness(&pooled).ok_or_else(|| format!("{a}: skewness undefined"))?;
        ensure(s > 0.0, || format!("{a}: skewness {s:.3}"))?;
        out.push(format!("{a} {s:.2}"));
    }
    Ok(format!("skewness {}", out.join(", ")))
}

fn twin_soundness() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig {
        scenario: ScenarioSpec::Catalog(CatalogSpec { id: 2, ..CatalogSpec::default() }),
        seed: 13,
        out_dir: dir.path().to_path_buf(),
        twin: TwinSettings { twin: TwinConfig::default(), step_change: Some(StepChange { at: 1800.0, factor: 2.5 }) },
        ..RunConfig::default()
    };
    cmd_twin(&cfg).map_err(|e| e.to_string())?;
    let manifest: TwinManifest = serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    ensure(!manifest.periods.is_empty(), || "no periods".into())?;
    for p in &manifest.periods {
        ensure(p.status == PeriodStatus::Ok, || format!("period {} degraded", p.index))?;
        let matched = p.matched_demand.unwrap();
        let chosen = p.chosen_algorithm.unwrap();
        let scores: Vec<(Algorithm, f64)> =
            p.jobs.iter().filter(|j| j.job.candidate == matched).map(|j| (j.job.algorithm, j.mean_control_delay.unwrap())).collect();
        let best = scores.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
        let chosen_score = scores.iter().find(|s| s.0 == chosen).unwrap().1;
        ensure(chosen_score == best, || format!("period {}: chose {chosen} at {chosen_score}, best {best}", p.index))?;
    }
    let net = cfg.inputs().map_err(|e| e.to_string())?.0;
    let rows = common::signal_rows(&dir.path().join("live/signals.csv"), &subject_name(&net));
    let live: SimulationResult = serde_json::from_str(&fs::read_to_string(dir.path().join("live/result.json")).unwrap()).unwrap();
    for s in &manifest.swaps {
        ensure(s.t % 5.0 == 0.0 && s.stage == Stage::Green && s.green_elapsed > 5.0, || format!("swap {s:?} off a decision point"))?;
        let before = rows.iter().find(|r| r.t == s.t - 1.0).ok_or_else(|| format!("no signal row before {}", s.t))?;
        ensure(before.stage == "green", || format!("signal log shows {} just before swap t={}", before.stage, s.t))?;
        ensure(live.decisions.iter().any(|d| d.t == s.t && d.algorithm == s.to), || format!("no {} decision at swap t={}", s.to, s.t))?;
    }
    let changes: Vec<String> = manifest.swaps.iter().map(|s| format!("{}->{}@{}", s.from, s.to, s.t)).collect();
    Ok(format!("{} periods, {} jobs, swaps [{}]", manifest.periods.len(), manifest.job_count(), changes.join(" ")))
}

fn main() {
    let started = Instant::now();
    let asym = std::cell::OnceCell::new();
    let asymmetric = || asym.get_or_init(asymmetric_runs);
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("phase machine exactness", Box::new(phase_machine)),
        ("delay semantics oracle", Box::new(delay_semantics)),
        ("controller oracle equivalence", Box::new(controller_oracle)),
        ("LOS table fidelity", Box::new(los_table)),
        ("determinism", Box::new(determinism)),
        ("asymmetric delay distribution", Box::new(|| delay_distribution(asymmetric()))),
        ("low-demand DT2 vs baseline", Box::new(low_demand)),
        ("stopped-delay right skew", Box::new(|| right_skew(asymmetric()))),
        ("twin loop soundness", Box::new(twin_soundness)),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panic".into()))
        });
        match outcome {
            Ok(detail) => println!("PASS criterion {}: {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {}: {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed in {:.1} s", criteria.len() - failed, started.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}
