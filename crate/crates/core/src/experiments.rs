//! Monte-Carlo harness for null calibration, empirical size and empirical power.
//!
//! A run is described by an [`ExperimentConfig`] (a flat TOML file) and
//! produces an [`ExperimentReport`]. Each `(K, r, n)` cell derives its own
//! stream from the master seed, and replication `m` of a cell uses the stream
//! derived from `m`, so the report is a function of the configuration alone.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::bootstrap::{run_bootstrap_test, BootstrapConfig};
use crate::community::{detect_pair, KMeansConfig};
use crate::error::{Error, Result};
use crate::generate::{
    balanced_blocks, planted_partition, sample_adjacency, sample_membership, two_level_block,
    PlantedPartitionSpec,
};
use crate::graph::{AdjacencyMatrix, MembershipLabel, SbmModel};
use crate::gumbel::{ks_distance, GumbelParams};
use crate::rng::RngSeed;
use crate::stat::two_sample_statistic;

pub const FORMAT_VERSION: u32 = 1;
pub const CSV_HEADER: &str = "scenario,K,r,n,statistic,rejection_rate,se,replications,alpha,seed";
pub const HISTOGRAM_HEADER: &str = "bin_left,bin_right,count,statistic";
pub const ECDF_HEADER: &str = "value,ecdf,statistic";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Both graphs from `r (1 + boost 1{u=v})` with multinomial labels; statistic samples are kept.
    NullCalibration,
    /// Both graphs from `r (1 + boost 1{u=v})` with equal fixed blocks.
    Size,
    /// Same labels; X within `3.5r` / between `0.5r`, Y within `8r` / between `3r`.
    PowerFirst,
    /// Same block matrix (within `3r` / between `r`); `gx` fixed blocks, `gy` multinomial.
    PowerSecond,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::NullCalibration => "null_calibration",
            Scenario::Size => "size",
            Scenario::PowerFirst => "power_first",
            Scenario::PowerSecond => "power_second",
        }
    }

    fn default_replications(self) -> usize {
        match self {
            Scenario::NullCalibration => 1000,
            _ => 200,
        }
    }

    fn default_boost(self) -> f64 {
        match self {
            Scenario::NullCalibration => 2.0,
            _ => 3.0,
        }
    }
}

/// Flat description of one experiment. Omitted optional keys take the
/// scenario's defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    /// Node counts. Ignored when `block_size` is set.
    #[serde(default)]
    pub n: Vec<usize>,
    /// Nodes per community; gives `n = K * block_size`.
    #[serde(default)]
    pub block_size: Option<usize>,
    pub k: Vec<usize>,
    pub r: Vec<f64>,
    /// Within-community boost of the null models.
    #[serde(default)]
    pub boost: Option<f64>,
    #[serde(default)]
    pub replications: Option<usize>,
    /// Bootstrap replicates `M`; 0 skips the corrected statistic.
    #[serde(default = "default_bootstrap")]
    pub bootstrap_replicates: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub use_true_labels: bool,
    #[serde(default = "default_restarts")]
    pub kmeans_restarts: usize,
    #[serde(default = "default_max_iterations")]
    pub kmeans_max_iterations: usize,
    #[serde(default = "default_tolerance")]
    pub kmeans_tolerance: f64,
    #[serde(default = "default_bins")]
    pub histogram_bins: usize,
    #[serde(default = "default_hist_min")]
    pub histogram_min: f64,
    #[serde(default = "default_hist_max")]
    pub histogram_max: f64,
}

fn default_bootstrap() -> usize {
    crate::bootstrap::DEFAULT_REPLICATES
}
fn default_alpha() -> f64 {
    0.05
}
fn default_restarts() -> usize {
    KMeansConfig::default().restarts
}
fn default_max_iterations() -> usize {
    KMeansConfig::default().max_iterations
}
fn default_tolerance() -> f64 {
    KMeansConfig::default().tolerance
}
fn default_bins() -> usize {
    40
}
fn default_hist_min() -> f64 {
    -6.0
}
fn default_hist_max() -> f64 {
    14.0
}

impl ExperimentConfig {
    /// A config with every optional key at its default.
    pub fn new(scenario: Scenario, k: Vec<usize>, r: Vec<f64>) -> Self {
        Self {
            scenario,
            n: Vec::new(),
            block_size: None,
            k,
            r,
            boost: None,
            replications: None,
            bootstrap_replicates: default_bootstrap(),
            alpha: default_alpha(),
            seed: 0,
            use_true_labels: false,
            kmeans_restarts: default_restarts(),
            kmeans_max_iterations: default_max_iterations(),
            kmeans_tolerance: default_tolerance(),
            histogram_bins: default_bins(),
            histogram_min: default_hist_min(),
            histogram_max: default_hist_max(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text)
            .map_err(|e| Error::InvalidArgument(format!("experiment config: {}", e.message())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn replications(&self) -> usize {
        self.replications
            .unwrap_or(self.scenario.default_replications())
    }

    pub fn boost(&self) -> f64 {
        self.boost.unwrap_or(self.scenario.default_boost())
    }

    fn detector(&self, seed: RngSeed) -> KMeansConfig {
        KMeansConfig {
            restarts: self.kmeans_restarts,
            max_iterations: self.kmeans_max_iterations,
            tolerance: self.kmeans_tolerance,
            seed,
        }
    }

    /// `(K, r, n)` for every cell, in report order.
    pub fn cells(&self) -> Vec<(usize, f64, usize)> {
        let mut out = Vec::new();
        for &k in &self.k {
            for &r in &self.r {
                match self.block_size {
                    Some(b) => out.push((k, r, k * b)),
                    None => out.extend(self.n.iter().map(|&n| (k, r, n))),
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.replications() == 0 {
            return bad("replications must be at least 1".into());
        }
        if self.k.is_empty() || self.r.is_empty() {
            return bad("k and r lists must be nonempty".into());
        }
        if self.block_size.is_none() && self.n.is_empty() {
            return bad("give either n or block_size".into());
        }
        if self.bootstrap_replicates == 1 {
            return bad("bootstrap_replicates must be 0 or at least 2".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if self.histogram_bins == 0 || !(self.histogram_max > self.histogram_min) {
            return bad("histogram needs bins >= 1 and max > min".into());
        }
        for (k, r, n) in self.cells() {
            if k == 0 || n < 2 * k {
                return bad(format!(
                    "cell K={k}, n={n} leaves fewer than two nodes per community"
                ));
            }
            let top = match self.scenario {
                Scenario::NullCalibration | Scenario::Size => r * (1.0 + self.boost()),
                Scenario::PowerFirst => 8.0 * r,
                Scenario::PowerSecond => 3.0 * r,
            };
            if !(r > 0.0) || top > 1.0 {
                return bad(format!(
                    "r = {r} gives edge probability {top} outside (0, 1]"
                ));
            }
        }
        Ok(())
    }
}

/// One simulated pair of graphs with the labels the test should use as truth.
pub struct SimulatedPair {
    pub x: AdjacencyMatrix,
    pub y: AdjacencyMatrix,
    pub gx: MembershipLabel,
    pub gy: MembershipLabel,
}

/// Statistics of one replication. `t_boot` is `None` when the bootstrap was skipped.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReplicationOutcome {
    pub t_n: f64,
    pub reject: bool,
    pub t_boot: Option<f64>,
    pub reject_boot: Option<bool>,
}

/// Generator for one cell of a scenario.
pub fn scenario_generator(
    scenario: Scenario,
    k: usize,
    r: f64,
    n: usize,
    boost: f64,
) -> Result<impl Fn(RngSeed) -> Result<SimulatedPair> + Sync> {
    let fixed = balanced_blocks(n, k)?;
    let uniform = vec![1.0 / k as f64; k];
    let (bx, by) = match scenario {
        Scenario::NullCalibration | Scenario::Size => {
            let b = planted_partition(&PlantedPartitionSpec::new(k, r, boost))?;
            (b.clone(), b)
        }
        Scenario::PowerFirst => (
            two_level_block(k, 3.5 * r, 0.5 * r)?,
            two_level_block(k, 8.0 * r, 3.0 * r)?,
        ),
        Scenario::PowerSecond => {
            let b = two_level_block(k, 3.0 * r, r)?;
            (b.clone(), b)
        }
    };
    Ok(move |seed: RngSeed| -> Result<SimulatedPair> {
        let (gx, gy) = match scenario {
            Scenario::NullCalibration => {
                let g = sample_membership(n, &uniform, seed.derive(0))?;
                (g.clone(), g)
            }
            Scenario::Size | Scenario::PowerFirst => (fixed.clone(), fixed.clone()),
            Scenario::PowerSecond => (
                fixed.clone(),
                sample_membership(n, &uniform, seed.derive(0))?,
            ),
        };
        let x = sample_adjacency(&SbmModel::new(gx.clone(), bx.clone())?, seed.derive(1));
        let y = sample_adjacency(&SbmModel::new(gy.clone(), by.clone())?, seed.derive(2));
        Ok(SimulatedPair { x, y, gx, gy })
    })
}

/// Runs the two-sample test (and the bootstrap when `bootstrap_replicates > 0`)
/// on `replications` draws of `generate`, in order of replication index.
pub fn run_replications<G>(
    generate: &G,
    config: &ExperimentConfig,
    k: usize,
    cell_seed: RngSeed,
) -> Vec<Result<ReplicationOutcome>>
where
    G: Fn(RngSeed) -> Result<SimulatedPair> + Sync,
{
    (0..config.replications())
        .into_par_iter()
        .map(|m| {
            let seed = cell_seed.derive(m as u64);
            let pair = generate(seed)?;
            let (gx, gy) = if config.use_true_labels {
                (pair.gx, pair.gy)
            } else {
                detect_pair(&pair.x, &pair.y, k, &config.detector(seed.derive(3)))?
            };
            if config.bootstrap_replicates == 0 {
                let out = two_sample_statistic(&pair.x, &pair.y, &gx, &gy, config.alpha)?;
                let r = out.report().expect("equal community counts");
                return Ok(ReplicationOutcome {
                    t_n: r.t_n,
                    reject: r.reject,
                    t_boot: None,
                    reject_boot: None,
                });
            }
            let boot = BootstrapConfig {
                detector: config.detector(seed.derive(5)),
                ..BootstrapConfig::new(config.bootstrap_replicates, seed.derive(4))
            };
            let b = run_bootstrap_test(&pair.x, &pair.y, &gx, &gy, config.alpha, &boot)?;
            Ok(ReplicationOutcome {
                t_n: b.observed.t_n,
                reject: b.observed.reject,
                t_boot: Some(b.t_boot),
                reject_boot: Some(b.reject),
            })
        })
        .collect()
}

/// Rejection rate of one statistic in one cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub scenario: Scenario,
    #[serde(rename = "K")]
    pub k: usize,
    pub r: f64,
    pub n: usize,
    /// `T_n` or `T_boot`.
    pub statistic: String,
    pub rejection_rate: f64,
    /// `sqrt(p (1 - p) / replications)`.
    pub se: f64,
    /// Replications that produced a statistic.
    pub replications: usize,
    pub alpha: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub bin_left: f64,
    pub bin_right: f64,
    pub count: usize,
}

/// Null samples of one statistic in one cell, with their distance to the reference law.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSeries {
    #[serde(rename = "K")]
    pub k: usize,
    pub r: f64,
    pub n: usize,
    pub statistic: String,
    /// In replication order.
    pub samples: Vec<f64>,
    pub ks_distance: f64,
    pub histogram: Vec<HistogramBin>,
}

impl CalibrationSeries {
    /// `(x, F_n(x))` at each sorted sample.
    pub fn ecdf(&self) -> Vec<(f64, f64)> {
        let mut sorted = self.samples.clone();
        sorted.sort_by(f64::total_cmp);
        let len = sorted.len() as f64;
        sorted
            .iter()
            .enumerate()
            .map(|(i, &x)| (x, (i + 1) as f64 / len))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub format_version: u32,
    pub artifact_version: String,
    pub config: ExperimentConfig,
    pub cells: Vec<CellResult>,
    pub calibration: Vec<CalibrationSeries>,
    /// Replications whose test could not be evaluated, per cell in `cells` order.
    pub failures: Vec<usize>,
    /// Kept out of emitted files so identical runs give identical bytes.
    #[serde(skip)]
    pub wall_clock_seconds: f64,
}

impl ExperimentReport {
    pub fn cell(&self, k: usize, r: f64, n: usize, statistic: &str) -> Option<&CellResult> {
        self.cells
            .iter()
            .find(|c| c.k == k && c.r == r && c.n == n && c.statistic == statistic)
    }

    pub fn series(
        &self,
        k: usize,
        r: f64,
        n: usize,
        statistic: &str,
    ) -> Option<&CalibrationSeries> {
        self.calibration
            .iter()
            .find(|c| c.k == k && c.r == r && c.n == n && c.statistic == statistic)
    }
}

pub const T_N: &str = "T_n";
pub const T_BOOT: &str = "T_boot";

fn cell_seed(master: u64, k: usize, r: f64, n: usize) -> RngSeed {
    RngSeed::new(master)
        .derive(k as u64)
        .derive(r.to_bits())
        .derive(n as u64)
}

fn rate_cell(
    config: &ExperimentConfig,
    k: usize,
    r: f64,
    n: usize,
    statistic: &str,
    hits: &[bool],
) -> CellResult {
    let reps = hits.len();
    let p = if reps == 0 {
        0.0
    } else {
        hits.iter().filter(|&&h| h).count() as f64 / reps as f64
    };
    CellResult {
        scenario: config.scenario,
        k,
        r,
        n,
        statistic: statistic.to_string(),
        rejection_rate: p,
        se: if reps == 0 {
            0.0
        } else {
            (p * (1.0 - p) / reps as f64).sqrt()
        },
        replications: reps,
        alpha: config.alpha,
        seed: config.seed,
    }
}

fn histogram(samples: &[f64], config: &ExperimentConfig) -> Vec<HistogramBin> {
    let bins = config.histogram_bins;
    let (lo, hi) = (config.histogram_min, config.histogram_max);
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &x in samples {
        // out-of-range values land in the edge bins
        let b = ((x - lo) / width).floor().clamp(0.0, (bins - 1) as f64) as usize;
        counts[b] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(b, count)| HistogramBin {
            bin_left: lo + b as f64 * width,
            bin_right: lo + (b + 1) as f64 * width,
            count,
        })
        .collect()
}

/// Runs every cell of `config`, with any scenario.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let start = Instant::now();
    let mut cells = Vec::new();
    let mut calibration = Vec::new();
    let mut failures = Vec::new();
    for (k, r, n) in config.cells() {
        let generate = scenario_generator(config.scenario, k, r, n, config.boost())?;
        let outcomes = run_replications(&generate, config, k, cell_seed(config.seed, k, r, n));
        let mut ok = Vec::new();
        let mut failed = 0;
        for o in outcomes {
            match o {
                Ok(o) => ok.push(o),
                Err(e) if e.is_numerical() => return Err(e),
                Err(_) => failed += 1,
            }
        }
        failures.push(failed);
        let raw: Vec<bool> = ok.iter().map(|o| o.reject).collect();
        cells.push(rate_cell(config, k, r, n, T_N, &raw));
        let boot: Vec<bool> = ok.iter().filter_map(|o| o.reject_boot).collect();
        if config.bootstrap_replicates > 0 {
            cells.push(rate_cell(config, k, r, n, T_BOOT, &boot));
        }
        if config.scenario == Scenario::NullCalibration {
            let reference = GumbelParams::reference();
            let mut series = vec![(T_N, ok.iter().map(|o| o.t_n).collect::<Vec<f64>>())];
            if config.bootstrap_replicates > 0 {
                series.push((T_BOOT, ok.iter().filter_map(|o| o.t_boot).collect()));
            }
            for (name, samples) in series {
                calibration.push(CalibrationSeries {
                    k,
                    r,
                    n,
                    statistic: name.to_string(),
                    ks_distance: ks_distance(&samples, &reference),
                    histogram: histogram(&samples, config),
                    samples,
                });
            }
        }
    }
    Ok(ExperimentReport {
        format_version: FORMAT_VERSION,
        artifact_version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.clone(),
        cells,
        calibration,
        failures,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    })
}

fn require(config: &ExperimentConfig, allowed: &[Scenario]) -> Result<()> {
    if allowed.contains(&config.scenario) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "scenario {} is not valid here",
            config.scenario.name()
        )))
    }
}

pub fn run_null_calibration(config: &ExperimentConfig) -> Result<ExperimentReport> {
    require(config, &[Scenario::NullCalibration])?;
    run_experiment(config)
}

pub fn run_size_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    require(config, &[Scenario::Size])?;
    run_experiment(config)
}

pub fn run_power_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    require(config, &[Scenario::PowerFirst, Scenario::PowerSecond])?;
    run_experiment(config)
}

/// Rounds to 6 significant digits.
pub fn round6(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.5e}").parse().expect("formatted float parses")
}

fn round_numbers(v: &mut Value) {
    match v {
        Value::Number(num) if num.is_f64() => {
            let x = round6(num.as_f64().expect("f64"));
            *v = serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number);
        }
        Value::Array(items) => items.iter_mut().for_each(round_numbers),
        Value::Object(map) => map.values_mut().for_each(round_numbers),
        _ => {}
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

/// JSON with sorted keys and every float at 6 significant digits.
pub fn report_json(report: &ExperimentReport) -> String {
    let mut value = serde_json::to_value(report).expect("report serializes");
    round_numbers(&mut value);
    let mut out = serde_json::to_string_pretty(&value).expect("value serializes");
    out.push('\n');
    out
}

pub fn report_csv(report: &ExperimentReport) -> String {
    let mut out = format!("{CSV_HEADER}\n");
    for c in &report.cells {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            c.scenario.name(),
            c.k,
            round6(c.r),
            c.n,
            c.statistic,
            round6(c.rejection_rate),
            round6(c.se),
            c.replications,
            round6(c.alpha),
            c.seed
        );
    }
    out
}

pub fn histogram_csv(report: &ExperimentReport) -> String {
    let mut out = format!("{HISTOGRAM_HEADER}\n");
    for s in &report.calibration {
        for b in &s.histogram {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                round6(b.bin_left),
                round6(b.bin_right),
                b.count,
                s.statistic
            );
        }
    }
    out
}

pub fn ecdf_csv(report: &ExperimentReport) -> String {
    let mut out = format!("{ECDF_HEADER}\n");
    for s in &report.calibration {
        for (x, f) in s.ecdf() {
            let _ = writeln!(out, "{},{},{}", round6(x), round6(f), s.statistic);
        }
    }
    out
}

pub fn emit_report(
    report: &ExperimentReport,
    path: impl AsRef<Path>,
    format: ReportFormat,
) -> Result<()> {
    let text = match format {
        ReportFormat::Csv => report_csv(report),
        ReportFormat::Json => report_json(report),
    };
    Ok(fs::write(path, text)?)
}

/// Parses the rate table written by [`report_csv`].
pub fn parse_report_csv(text: &str) -> Result<Vec<CellResult>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == CSV_HEADER => {}
        _ => {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected header {CSV_HEADER:?}"),
            })
        }
    }
    let mut out = Vec::new();
    for (idx, raw) in lines {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = raw.split(',').collect();
        if f.len() != 10 {
            return Err(Error::Parse {
                line,
                message: format!("expected 10 fields, got {}", f.len()),
            });
        }
        let num = |s: &str| -> Result<f64> {
            s.parse().map_err(|_| Error::Parse {
                line,
                message: format!("not a number: {s:?}"),
            })
        };
        let int = |s: &str| -> Result<u64> {
            s.parse().map_err(|_| Error::Parse {
                line,
                message: format!("not an integer: {s:?}"),
            })
        };
        let scenario: Scenario =
            serde_json::from_value(Value::String(f[0].to_string())).map_err(|_| Error::Parse {
                line,
                message: format!("unknown scenario {:?}", f[0]),
            })?;
        out.push(CellResult {
            scenario,
            k: int(f[1])? as usize,
            r: num(f[2])?,
            n: int(f[3])? as usize,
            statistic: f[4].to_string(),
            rejection_rate: num(f[5])?,
            se: num(f[6])?,
            replications: int(f[7])? as usize,
            alpha: num(f[8])?,
            seed: int(f[9])?,
        });
    }
    Ok(out)
}

pub fn read_report_csv(path: impl AsRef<Path>) -> Result<Vec<CellResult>> {
    parse_report_csv(&fs::read_to_string(path)?)
}
