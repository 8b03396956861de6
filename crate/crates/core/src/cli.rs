//! Command-line entry points and run configuration.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::controllers::Algorithm;
use crate::error::{Error, Result};
use crate::metrics::{compare, ComparisonReport, RunSummary, DEFAULT_BIN_WIDTH};
use crate::network::{build_grid, GridSpec, Network};
use crate::traffic::{
    grid_flow_template, scenario_catalog, simulate, DemandPlan, DemandScenario, DepartureMode, LogSinks, RatePiece,
    SimConfig, SimulationResult, TemplateShares,
};
use crate::twin::{live_loop, ScalingForecaster, SimJobRunner, TwinConfig, TwinManifest};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NetworkSpec {
    Grid(GridSpec),
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CatalogSpec {
    pub id: u32,
    pub base_vph: f64,
    pub ladder_factor: f64,
    pub shares: TemplateShares,
}

impl Default for CatalogSpec {
    fn default() -> Self {
        CatalogSpec { id: 3, base_vph: 200.0, ladder_factor: 0.5, shares: TemplateShares::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioSpec {
    Catalog(CatalogSpec),
    File(PathBuf),
}

/// Live demand multiplier applied from `at` onwards in twin runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepChange {
    pub at: f64,
    pub factor: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct TwinSettings {
    #[serde(flatten)]
    pub twin: TwinConfig,
    pub step_change: Option<StepChange>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub network: NetworkSpec,
    pub scenario: ScenarioSpec,
    pub algorithms: Vec<Algorithm>,
    pub seed: u64,
    pub departure_mode: DepartureMode,
    pub sim: SimConfig,
    pub out_dir: PathBuf,
    pub dsd_bin_width: f64,
    pub parallelism: usize,
    pub twin: TwinSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            network: NetworkSpec::Grid(GridSpec::default()),
            scenario: ScenarioSpec::Catalog(CatalogSpec::default()),
            algorithms: vec![Algorithm::Baseline],
            seed: 42,
            departure_mode: DepartureMode::Poisson,
            sim: SimConfig::default(),
            out_dir: PathBuf::from("out"),
            dsd_bin_width: DEFAULT_BIN_WIDTH,
            parallelism: 1,
            twin: TwinSettings::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        self.sim.clock.validate()?;
        if self.algorithms.is_empty() {
            return Err(Error::Config("at least one algorithm is required".into()));
        }
        if !(self.dsd_bin_width > 0.0) {
            return Err(Error::Config("dsd_bin_width must be positive".into()));
        }
        if self.parallelism == 0 {
            return Err(Error::Config("parallelism must be at least 1".into()));
        }
        if let ScenarioSpec::Catalog(c) = &self.scenario {
            if !(1..=11).contains(&c.id) {
                return Err(Error::Config(format!("scenario id {} must be in 1..=11", c.id)));
            }
        }
        Ok(())
    }

    /// Network and demand scenario described by this config.
    pub fn inputs(&self) -> Result<(Arc<Network>, DemandScenario)> {
        let network = match &self.network {
            NetworkSpec::Grid(g) => build_grid(g)?,
            NetworkSpec::File(p) => Network::load(p)?,
        };
        let scenario = match (&self.scenario, &self.network) {
            (ScenarioSpec::File(p), _) => DemandScenario::load(p)?,
            (ScenarioSpec::Catalog(c), NetworkSpec::Grid(g)) => {
                let template = grid_flow_template(&network, g.rows, g.cols, &c.shares)?;
                scenario_catalog(c.base_vph, c.ladder_factor, &template)?.swap_remove(c.id as usize - 1)
            }
            (ScenarioSpec::Catalog(_), NetworkSpec::File(_)) => {
                return Err(Error::Config("catalog scenarios need a grid network; give a scenario file".into()))
            }
        };
        for f in &scenario.flows {
            f.route(&network)?;
        }
        Ok((Arc::new(network), scenario))
    }

    pub fn plan(&self, network: &Network, scenario: &DemandScenario) -> Result<DemandPlan> {
        DemandPlan::constant(network, &scenario.flows, self.sim.clock.horizon, self.seed, self.departure_mode)
    }
}

#[derive(Parser, Debug)]
#[command(name = "signaltwin", version, about = "Signalized grid simulation with delay-based adaptive control")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON run configuration; missing fields take defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Root seed for all random streams.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Comma-separated controller tokens: baseline, dt1, dt2.
    #[arg(long, global = true)]
    pub algorithm: Option<String>,
    /// Catalog scenario id, 1 to 11.
    #[arg(long, global = true)]
    pub scenario: Option<u32>,
    /// Worker threads for compare and twin jobs.
    #[arg(long, global = true)]
    pub parallelism: Option<usize>,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    /// Run one controller on one scenario.
    Simulate,
    /// Run several controllers on the same demand and compare them.
    Compare,
    /// Run the live loop with parallel controller selection.
    Twin,
    /// Rebuild the comparison report from saved run results.
    Report,
}

pub fn parse_algorithms(list: &str) -> Result<Vec<Algorithm>> {
    list.split(',').map(|t| t.trim().parse()).collect()
}

impl Cli {
    pub fn resolve_config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.out_dir = o.clone();
        }
        if let Some(a) = &self.algorithm {
            cfg.algorithms = parse_algorithms(a)?;
        } else if self.config.is_none() && self.command != Command::Simulate {
            cfg.algorithms = Algorithm::ALL.to_vec();
        }
        if let Some(k) = self.scenario {
            match &mut cfg.scenario {
                ScenarioSpec::Catalog(c) => c.id = k,
                ScenarioSpec::File(_) => return Err(Error::Config("--scenario needs a catalog scenario".into())),
            }
        }
        if let Some(p) = self.parallelism {
            cfg.parallelism = p;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Per-run summary written as `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub scenario_id: u32,
    pub subject_intersection: String,
    pub summary: RunSummary,
    pub inserted: usize,
    pub arrived: usize,
    pub on_network_at_end: usize,
    pub not_inserted: usize,
    pub swaps: usize,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn file_sinks(dir: &Path) -> Result<LogSinks> {
    Ok(LogSinks {
        trajectory: Some(Box::new(BufWriter::new(File::create(dir.join("trajectory.csv"))?))),
        signals: Some(Box::new(BufWriter::new(File::create(dir.join("signals.csv"))?))),
    })
}

pub const DEPARTURES_HEADER: &str = "vehicle_id,flow,origin,destination,depart_time";

fn write_departures(dir: &Path, plan: &DemandPlan) -> Result<()> {
    let mut out = String::from(DEPARTURES_HEADER);
    out.push('\n');
    for (id, d) in plan.departures.iter().enumerate() {
        let f = &plan.flows[d.flow];
        out.push_str(&format!("{id},{},{},{},{}\n", d.flow, f.origin, f.destination, d.time));
    }
    fs::write(dir.join("departures.csv"), out)?;
    Ok(())
}

fn write_run(dir: &Path, cfg: &RunConfig, scenario_id: u32, result: &SimulationResult) -> Result<()> {
    let report = RunReport {
        algorithm: result.algorithm,
        seed: cfg.seed,
        scenario_id,
        subject_intersection: result.subject_intersection.clone(),
        summary: result.summary.clone(),
        inserted: result.inserted,
        arrived: result.arrived,
        on_network_at_end: result.on_network_at_end,
        not_inserted: result.not_inserted,
        swaps: result.swaps.len(),
    };
    write_json(&dir.join("summary.json"), &report)?;
    write_json(&dir.join("result.json"), result)
}

fn run_one(cfg: &RunConfig, network: &Arc<Network>, scenario: &DemandScenario, algorithm: Algorithm, dir: &Path) -> Result<SimulationResult> {
    fs::create_dir_all(dir)?;
    let plan = cfg.plan(network, scenario)?;
    write_departures(dir, &plan)?;
    let result = simulate(network.clone(), cfg.sim.clone(), plan, algorithm, Some(file_sinks(dir)?))?;
    write_run(dir, cfg, scenario.scenario_id, &result)?;
    Ok(result)
}

fn write_config(cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(&cfg.out_dir)?;
    write_json(&cfg.out_dir.join("config.json"), cfg)
}

/// Writes `config.json`, `departures.csv`, `trajectory.csv`, `signals.csv`,
/// `summary.json` and `result.json` into the output directory.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<SimulationResult> {
    if cfg.algorithms.len() != 1 {
        return Err(Error::Config("simulate takes exactly one algorithm".into()));
    }
    let (network, scenario) = cfg.inputs()?;
    write_config(cfg)?;
    run_one(cfg, &network, &scenario, cfg.algorithms[0], &cfg.out_dir)
}

/// Runs each algorithm into `<out>/<token>/` with the shared seed and
/// writes the comparison report into `<out>`.
pub fn cmd_compare(cfg: &RunConfig) -> Result<ComparisonReport> {
    if cfg.algorithms.len() < 2 {
        return Err(Error::Config("compare needs at least two algorithms".into()));
    }
    if !cfg.algorithms.contains(&Algorithm::Baseline) {
        return Err(Error::MissingBaseline);
    }
    let (network, scenario) = cfg.inputs()?;
    write_config(cfg)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.parallelism)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let runs: Vec<Result<(Algorithm, SimulationResult)>> = pool.install(|| {
        use rayon::prelude::*;
        cfg.algorithms
            .par_iter()
            .map(|&a| run_one(cfg, &network, &scenario, a, &cfg.out_dir.join(a.token())).map(|r| (a, r)))
            .collect()
    });
    let results: BTreeMap<Algorithm, SimulationResult> = runs.into_iter().collect::<Result<_>>()?;
    let report = compare(&results, cfg.dsd_bin_width)?;
    report.write(&cfg.out_dir)?;
    Ok(report)
}

/// Reads `<out>/<token>/result.json` for every algorithm present and
/// rewrites the comparison report.
pub fn cmd_report(cfg: &RunConfig) -> Result<ComparisonReport> {
    let mut results = BTreeMap::new();
    for a in Algorithm::ALL {
        let p = cfg.out_dir.join(a.token()).join("result.json");
        if p.exists() {
            let r: SimulationResult = serde_json::from_str(&fs::read_to_string(&p)?)?;
            results.insert(a, r);
        }
    }
    let report = compare(&results, cfg.dsd_bin_width)?;
    report.write(&cfg.out_dir)?;
    Ok(report)
}

/// Runs the live loop. Writes `config.json` and `manifest.json` into the
/// output directory and the live run's logs into `<out>/live/`.
pub fn cmd_twin(cfg: &RunConfig) -> Result<TwinManifest> {
    let (network, scenario) = cfg.inputs()?;
    let horizon = cfg.sim.clock.horizon;
    let pieces: Vec<Vec<RatePiece>> = scenario
        .flows
        .iter()
        .map(|f| match cfg.twin.step_change {
            Some(s) if s.at > 0.0 && s.at < horizon => vec![
                RatePiece { start: 0.0, end: s.at, vph: f.vph },
                RatePiece { start: s.at, end: horizon, vph: f.vph * s.factor },
            ],
            _ => vec![RatePiece { start: 0.0, end: horizon, vph: f.vph }],
        })
        .collect();
    let plan = DemandPlan::piecewise(&network, &scenario.flows, &pieces, cfg.seed, cfg.departure_mode)?;
    write_config(cfg)?;
    let live_dir = cfg.out_dir.join("live");
    fs::create_dir_all(&live_dir)?;
    write_departures(&live_dir, &plan)?;

    let twin = TwinConfig { parallelism: cfg.parallelism, ..cfg.twin.twin.clone() };
    let forecaster = ScalingForecaster { factors: twin.factors.clone() };
    let runner = SimJobRunner {
        network: network.clone(),
        flows: scenario.flows.clone(),
        config: cfg.sim.clone(),
        mode: cfg.departure_mode,
    };
    let run = live_loop(network, cfg.sim.clone(), plan, &twin, &forecaster, &runner, cfg.seed, Some(file_sinks(&live_dir)?))?;
    for p in &run.manifest.periods {
        if p.status == crate::twin::PeriodStatus::Degraded {
            eprintln!("warning: twin period {} at t={} degraded; controller kept", p.index, p.boundary);
        }
    }
    write_run(&live_dir, cfg, scenario.scenario_id, &run.live)?;
    write_json(&cfg.out_dir.join("manifest.json"), &run.manifest)?;
    Ok(run.manifest)
}

/// Exit code for a command line: 0 ok, 2 configuration error, 3 runtime
/// error.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let cfg = match cli.resolve_config() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return 2;
        }
    };
    let outcome = match cli.command {
        Command::Simulate => cmd_simulate(&cfg).map(|_| ()),
        Command::Compare => cmd_compare(&cfg).map(|_| ()),
        Command::Twin => cmd_twin(&cfg).map(|_| ()),
        Command::Report => cmd_report(&cfg).map(|_| ()),
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_)
                | Error::Schema(_)
                | Error::SchemaVersion { .. }
                | Error::UnknownAlgorithm(_)
                | Error::MissingBaseline
                | Error::UnknownId(_)
                | Error::NoPath { .. }
                | Error::NotPeripheral(_)
                | Error::InvalidDimension(_) => 2,
                _ => 3,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trips_through_json() {
        let cfg = RunConfig::default();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&text).unwrap(), cfg);
    }

    #[test]
    fn partial_config_uses_defaults() {
        let cfg: RunConfig = serde_json::from_str(r#"{"seed": 7, "scenario": {"catalog": {"id": 5}}}"#).unwrap();
        assert_eq!(cfg.seed, 7);
        assert!(matches!(cfg.scenario, ScenarioSpec::Catalog(CatalogSpec { id: 5, .. })));
        assert_eq!(cfg.sim.clock.horizon, 3600.0);
    }

    #[test]
    fn algorithm_lists() {
        assert_eq!(parse_algorithms("baseline, dt2").unwrap(), vec![Algorithm::Baseline, Algorithm::Dt2]);
        let e = parse_algorithms("dt3").unwrap_err().to_string();
        assert!(e.contains("baseline") && e.contains("dt1") && e.contains("dt2"));
    }

    #[test]
    fn bad_scenario_id_is_config_error() {
        let mut cfg = RunConfig::default();
        cfg.scenario = ScenarioSpec::Catalog(CatalogSpec { id: 12, ..Default::default() });
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }
}
