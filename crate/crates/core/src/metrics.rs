//! Level of service, approach stopped-delay statistics and cross-controller
//! comparison reports.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::controllers::Algorithm;
use crate::error::{Error, Result};
use crate::network::Movement;
use crate::traffic::{SimClock, SimulationResult, Traversal};

pub const DEFAULT_BIN_WIDTH: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Grade {
    A,
    B,
    C,
    D,
    E,
    F,
}

impl fmt::Display for Grade {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LosGrade {
    pub grade: Grade,
    pub control_delay: f64,
}

/// Upper bounds (inclusive) of grades A through E, in s/veh.
const LOS_BOUNDS: [(f64, Grade); 5] = [(10.0, Grade::A), (20.0, Grade::B), (35.0, Grade::C), (55.0, Grade::D), (80.0, Grade::E)];

pub fn los_from_control_delay(d: f64) -> Result<LosGrade> {
    if !(d >= 0.0) {
        return Err(Error::Argument(format!("control delay must be non-negative, got {d}")));
    }
    let grade = LOS_BOUNDS.iter().find(|(upper, _)| d <= *upper).map_or(Grade::F, |&(_, g)| g);
    Ok(LosGrade { grade, control_delay: d })
}

/// Mean of the stopped delays; 0 when empty.
pub fn aasd(delays: &[f64]) -> f64 {
    mean(delays)
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayHistogram {
    pub bin_width: f64,
    pub counts: Vec<usize>,
    pub movement: Option<Movement>,
    pub algorithm: Option<Algorithm>,
}

impl DelayHistogram {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

/// Bins delays into right-open bins `[k·w, (k+1)·w)`.
pub fn dsd_histogram(delays: &[f64], bin_width: f64) -> Result<DelayHistogram> {
    if !(bin_width > 0.0) || !bin_width.is_finite() {
        return Err(Error::Argument(format!("bin width must be positive, got {bin_width}")));
    }
    let mut counts = Vec::new();
    for &d in delays {
        if !(d >= 0.0) || !d.is_finite() {
            return Err(Error::Argument(format!("delay must be finite and non-negative, got {d}")));
        }
        let bin = (d / bin_width).floor() as usize;
        if counts.len() <= bin {
            counts.resize(bin + 1, 0);
        }
        counts[bin] += 1;
    }
    Ok(DelayHistogram { bin_width, counts, movement: None, algorithm: None })
}

/// Sample skewness `m3 / m2^1.5`. `None` for fewer than three samples or
/// zero variance.
pub fn skewness(xs: &[f64]) -> Option<f64> {
    if xs.len() < 3 {
        return None;
    }
    let m = mean(xs);
    let n = xs.len() as f64;
    let m2 = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    let m3 = xs.iter().map(|x| (x - m).powi(3)).sum::<f64>() / n;
    if m2 <= 0.0 {
        return None;
    }
    Some(m3 / m2.powf(1.5))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlDelaySummary {
    pub traversals: usize,
    pub mean_control_delay: f64,
    pub los: LosGrade,
}

pub fn control_delay_summary(segment_delays: &[f64]) -> Result<ControlDelaySummary> {
    let m = mean(segment_delays);
    Ok(ControlDelaySummary { traversals: segment_delays.len(), mean_control_delay: m, los: los_from_control_delay(m)? })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MovementStats {
    pub movement: Movement,
    pub traversals: usize,
    pub aasd: f64,
    pub mean_control_delay: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub window_start: f64,
    pub window_end: f64,
    pub control: ControlDelaySummary,
    /// One entry per subject movement, in `Movement::ALL` order.
    pub movements: Vec<MovementStats>,
}

impl RunSummary {
    pub fn mean_control_delay(&self) -> f64 {
        self.control.mean_control_delay
    }

    pub fn aasd(&self, movement: Movement) -> f64 {
        self.movements[movement.index()].aasd
    }

    pub fn max_aasd(&self) -> f64 {
        self.movements.iter().map(|m| m.aasd).fold(0.0, f64::max)
    }

    /// Max minus min AASD across the four through movements.
    pub fn through_spread(&self) -> f64 {
        let v: Vec<f64> = Movement::THROUGH.iter().map(|&m| self.aasd(m)).collect();
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        hi - lo
    }
}

/// Traversals whose crossing was observed inside the measured window.
pub fn window_traversals<'a>(traversals: &'a [Traversal], clock: &'a SimClock) -> impl Iterator<Item = &'a Traversal> + 'a {
    traversals.iter().filter(|t| clock.in_window(t.observed_at))
}

pub fn summarize(traversals: &[Traversal], clock: &SimClock) -> Result<RunSummary> {
    let (window_start, window_end) = clock.measured_window();
    let inside: Vec<&Traversal> = window_traversals(traversals, clock).collect();
    let control = control_delay_summary(&inside.iter().map(|t| t.segment_delay).collect::<Vec<_>>())?;
    let movements = Movement::ALL
        .iter()
        .map(|&m| {
            let of: Vec<&&Traversal> = inside.iter().filter(|t| t.movement == m).collect();
            let stopped: Vec<f64> = of.iter().map(|t| t.stopped_delay).collect();
            let seg: Vec<f64> = of.iter().map(|t| t.segment_delay).collect();
            MovementStats { movement: m, traversals: of.len(), aasd: aasd(&stopped), mean_control_delay: mean(&seg) }
        })
        .collect();
    Ok(RunSummary { window_start, window_end, control, movements })
}

/// Stopped delays inside the measured window, optionally for one movement.
pub fn stopped_delays(result: &SimulationResult, movement: Option<Movement>) -> Vec<f64> {
    window_traversals(&result.traversals, &result.clock)
        .filter(|t| movement.map_or(true, |m| t.movement == m))
        .map(|t| t.stopped_delay)
        .collect()
}

/// `(base - alt) / base * 100`; `None` when the base is not positive.
pub fn reduction_percent(base: f64, alt: f64) -> Option<f64> {
    if base > 0.0 {
        Some((base - alt) / base * 100.0)
    } else {
        None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmRow {
    pub algorithm: Algorithm,
    pub traversals: usize,
    pub mean_control_delay: f64,
    pub los: Grade,
    pub control_delay_reduction_pct: Option<f64>,
    /// AASD per movement, `Movement::ALL` order.
    pub aasd: Vec<f64>,
    pub aasd_reduction_pct: Vec<Option<f64>>,
    pub max_aasd: f64,
    pub through_spread: f64,
    pub dsd_skewness: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub bin_width: f64,
    pub rows: Vec<AlgorithmRow>,
    pub histograms: Vec<DelayHistogram>,
}

pub fn compare(results: &BTreeMap<Algorithm, SimulationResult>, bin_width: f64) -> Result<ComparisonReport> {
    let base = results.get(&Algorithm::Baseline).ok_or(Error::MissingBaseline)?;
    let mut rows = Vec::new();
    let mut histograms = Vec::new();
    for (&algorithm, r) in results {
        let s = &r.summary;
        let aasd: Vec<f64> = s.movements.iter().map(|m| m.aasd).collect();
        rows.push(AlgorithmRow {
            algorithm,
            traversals: s.control.traversals,
            mean_control_delay: s.mean_control_delay(),
            los: s.control.los.grade,
            control_delay_reduction_pct: reduction_percent(base.summary.mean_control_delay(), s.mean_control_delay()),
            aasd_reduction_pct: Movement::ALL.iter().map(|&m| reduction_percent(base.summary.aasd(m), s.aasd(m))).collect(),
            aasd,
            max_aasd: s.max_aasd(),
            through_spread: s.through_spread(),
            dsd_skewness: skewness(&stopped_delays(r, None)),
        });
        for &m in &Movement::ALL {
            let mut h = dsd_histogram(&stopped_delays(r, Some(m)), bin_width)?;
            h.movement = Some(m);
            h.algorithm = Some(algorithm);
            histograms.push(h);
        }
    }
    Ok(ComparisonReport { bin_width, rows, histograms })
}

pub fn comparison_csv_header() -> String {
    let mut cols = vec!["algorithm", "traversals", "mean_control_delay", "los", "control_delay_reduction_pct"]
        .into_iter()
        .map(String::from)
        .collect::<Vec<_>>();
    cols.extend(Movement::ALL.iter().map(|m| format!("aasd_{}", m.label())));
    cols.extend(["max_aasd", "through_spread", "dsd_skewness"].map(String::from));
    cols.join(",")
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl ComparisonReport {
    pub fn row(&self, algorithm: Algorithm) -> Option<&AlgorithmRow> {
        self.rows.iter().find(|r| r.algorithm == algorithm)
    }

    pub fn to_csv(&self) -> String {
        let mut out = comparison_csv_header();
        out.push('\n');
        for r in &self.rows {
            let mut cells = vec![
                r.algorithm.to_string(),
                r.traversals.to_string(),
                r.mean_control_delay.to_string(),
                r.los.to_string(),
                opt(r.control_delay_reduction_pct),
            ];
            cells.extend(r.aasd.iter().map(|x| x.to_string()));
            cells.extend([r.max_aasd.to_string(), r.through_spread.to_string(), opt(r.dsd_skewness)]);
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    /// One CSV per movement: `bin_start,bin_end,<algorithm>...`.
    pub fn dsd_csv(&self, movement: Movement) -> String {
        let hs: Vec<&DelayHistogram> = self.histograms.iter().filter(|h| h.movement == Some(movement)).collect();
        let bins = hs.iter().map(|h| h.counts.len()).max().unwrap_or(0);
        let mut out = String::from("bin_start,bin_end");
        for h in &hs {
            out.push(',');
            out.push_str(h.algorithm.map_or("all", |a| a.token()));
        }
        out.push('\n');
        for k in 0..bins {
            out.push_str(&format!("{},{}", k as f64 * self.bin_width, (k + 1) as f64 * self.bin_width));
            for h in &hs {
                out.push_str(&format!(",{}", h.counts.get(k).copied().unwrap_or(0)));
            }
            out.push('\n');
        }
        out
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("summary.json"), serde_json::to_string_pretty(self)?)?;
        fs::write(dir.join("comparison.csv"), self.to_csv())?;
        for &m in &Movement::ALL {
            fs::write(dir.join(format!("dsd_{}.csv", m.label())), self.dsd_csv(m))?;
        }
        Ok(())
    }
}
