//! Command-line front end of the `sbm2s` binary.
//!
//! Exit codes: 0 when the command ran to completion (whatever the test
//! decided), 1 for usage errors, 2 for invalid data, 3 for numerical failures.
//! Machine-readable reports go to files or stdout; summaries go to stderr.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::bootstrap::{run_bootstrap_test, BootstrapConfig};
use crate::community::{detect_communities, detect_pair, KMeansConfig};
use crate::error::Error;
use crate::experiments::{
    ecdf_csv, histogram_csv, report_csv, report_json, run_experiment, ExperimentConfig,
};
use crate::generate::{
    fixed_blocks, planted_partition, sample_adjacency, sample_membership, PlantedPartitionSpec,
};
use crate::graph::{AdjacencyMatrix, MembershipLabel, SbmModel};
use crate::ingest::{
    correlation_to_adjacency, degree_filter, parse_csv, read_graph, read_labels,
    read_similarity_csv, read_weights_csv, weights_to_adjacency_median, write_edge_list,
    write_labels, DegreeRule, WeightMatrix,
};
use crate::rng::RngSeed;
use crate::select::{estimate_k_with, KSelectionReport, SelectionConfig, SelectionRule};
use crate::stat::{two_sample_statistic, TwoSampleOutcome};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

const SEED_ENV: &str = "SBM2S_SEED";

#[derive(Debug, Parser)]
#[command(
    name = "sbm2s",
    version,
    about = "Two-sample testing of stochastic block models"
)]
pub struct Cli {
    /// Worker threads for replicate parallelism (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample one graph from a planted-partition block model.
    Generate(GenerateArgs),
    /// Test whether two graphs come from the same block model.
    Test(TestArgs),
    /// Estimate the number of communities of one graph.
    SelectK(SelectKArgs),
    /// Spectral community detection with a given number of communities.
    Detect(DetectArgs),
    /// Run a Monte-Carlo experiment described by a config file.
    Simulate(SimulateArgs),
    /// Turn correlation or trade-weight matrices into a filtered pair of graphs.
    Preprocess(PreprocessArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Node count; implied by --blocks when omitted.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub k: usize,
    /// Between-community edge probability.
    #[arg(long)]
    pub r: f64,
    /// Within-community probability is r (1 + boost).
    #[arg(long, default_value_t = 2.0)]
    pub boost: f64,
    /// Community proportions: `uniform` or comma-separated weights.
    #[arg(long, conflicts_with = "blocks")]
    pub pi: Option<String>,
    /// Comma-separated block sizes for contiguous fixed blocks.
    #[arg(long, value_delimiter = ',')]
    pub blocks: Option<Vec<usize>>,
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    pub seed: u64,
    /// Edge-list output.
    #[arg(long)]
    pub out: PathBuf,
    /// Label output (default: the edge-list path with extension `labels`).
    #[arg(long)]
    pub labels_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TestArgs {
    #[arg(long)]
    pub x: PathBuf,
    #[arg(long)]
    pub y: PathBuf,
    /// Labels of X; requires --gy.
    #[arg(long, requires = "gy", conflicts_with_all = ["k", "kmax"])]
    pub gx: Option<PathBuf>,
    #[arg(long, requires = "gx")]
    pub gy: Option<PathBuf>,
    /// Detect this many communities in each graph.
    #[arg(long, conflicts_with = "kmax")]
    pub k: Option<usize>,
    /// Estimate the community count of each graph, searching up to this value.
    #[arg(long)]
    pub kmax: Option<usize>,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Also compute the bootstrap-corrected statistic with this many replicates.
    #[arg(long)]
    pub bootstrap: Option<usize>,
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    pub seed: u64,
    /// JSON report path (default: stdout).
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum RuleArg {
    Plain,
    Refined,
}

#[derive(Debug, Args)]
pub struct SelectKArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub kmax: usize,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, value_enum, default_value_t = RuleArg::Refined)]
    pub rule: RuleArg,
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    pub seed: u64,
    /// JSON report path (default: stdout).
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub k: usize,
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    pub seed: u64,
    /// Label output, one 1-based id per line.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory for report.json, report.csv and, for calibration runs,
    /// histogram.csv and ecdf.csv.
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the seed of the config file.
    #[arg(long, env = SEED_ENV)]
    pub seed: Option<u64>,
    /// Overrides the replication count of the config file.
    #[arg(long)]
    pub replications: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PreprocessMode {
    /// Correlation matrices thresholded at `(1 + s) / 2 >= tau`.
    Corr,
    /// Trade weights thresholded at their lower median.
    Trade,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DegreeRuleArg {
    Total,
    Each,
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    #[arg(long, value_enum)]
    pub mode: PreprocessMode,
    #[arg(long, default_value_t = 0.72)]
    pub tau: f64,
    #[arg(long, default_value_t = 0)]
    pub min_total_degree: usize,
    #[arg(long, value_enum, default_value_t = DegreeRuleArg::Total)]
    pub degree_rule: DegreeRuleArg,
    /// Trade input holds directed flows; symmetrize as `T + T^T`.
    #[arg(long)]
    pub directed: bool,
    /// Two input CSV matrices.
    #[arg(long = "in", num_args = 2, required = true)]
    pub input: Vec<PathBuf>,
    /// Two output edge lists.
    #[arg(long, num_args = 2, required = true)]
    pub out: Vec<PathBuf>,
    /// Kept-node map output: original 1-based index per line.
    #[arg(long)]
    pub kept: Option<PathBuf>,
}

/// A failed command with its exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Lib(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Lib(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Lib(Error::Io(e))
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Lib(e) if e.is_numerical() => EXIT_NUMERICAL,
            CliError::Lib(_) => EXIT_DATA,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage: {m}"),
            CliError::Lib(e) => write!(f, "{e}"),
        }
    }
}

type CliResult = std::result::Result<(), CliError>;

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    if let Some(t) = cli.threads {
        if t == 0 {
            eprintln!("usage: --threads must be at least 1");
            return EXIT_USAGE;
        }
        // the global pool can be configured only once per process
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global();
    }
    match execute(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: Command) -> CliResult {
    match command {
        Command::Generate(a) => cmd_generate(a),
        Command::Test(a) => cmd_test(a),
        Command::SelectK(a) => cmd_select_k(a),
        Command::Detect(a) => cmd_detect(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Preprocess(a) => cmd_preprocess(a),
    }
}

fn write_json<T: Serialize>(value: &T, path: Option<&Path>) -> CliResult {
    let json = serde_json::to_value(value).expect("report serializes");
    let mut text = serde_json::to_string_pretty(&json).expect("value serializes");
    text.push('\n');
    match path {
        Some(p) => fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn parse_pi(spec: &str, k: usize) -> std::result::Result<Vec<f64>, CliError> {
    if spec == "uniform" {
        return Ok(vec![1.0 / k as f64; k]);
    }
    let pi = spec
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<std::result::Result<Vec<f64>, _>>()
        .map_err(|_| CliError::Usage(format!("--pi must be `uniform` or numbers, got {spec:?}")))?;
    if pi.len() != k {
        return Err(CliError::Usage(format!(
            "--pi has {} entries, expected {k}",
            pi.len()
        )));
    }
    Ok(pi)
}

pub fn cmd_generate(a: GenerateArgs) -> CliResult {
    let seed = RngSeed::new(a.seed);
    let label = match &a.blocks {
        Some(sizes) => {
            if sizes.len() != a.k {
                return Err(CliError::Usage(format!(
                    "--blocks has {} sizes, expected {}",
                    sizes.len(),
                    a.k
                )));
            }
            let total: usize = sizes.iter().sum();
            if a.n.is_some_and(|n| n != total) {
                return Err(CliError::Usage(format!("--blocks sum to {total}, not --n")));
            }
            fixed_blocks(sizes)?
        }
        None => {
            let n =
                a.n.ok_or_else(|| CliError::Usage("give --n or --blocks".into()))?;
            let pi = parse_pi(a.pi.as_deref().unwrap_or("uniform"), a.k)?;
            sample_membership(n, &pi, seed.derive(0))?
        }
    };
    let block = planted_partition(&PlantedPartitionSpec::new(a.k, a.r, a.boost))?;
    let model = SbmModel::new(label.clone(), block)?;
    let graph = sample_adjacency(&model, seed.derive(1));
    let labels_out = a
        .labels_out
        .unwrap_or_else(|| a.out.with_extension("labels"));
    write_edge_list(&graph, &a.out)?;
    write_labels(&label, &labels_out)?;
    eprintln!(
        "generated n={} K={} edges={} density={:.4} -> {}, {}",
        graph.n(),
        a.k,
        graph.edge_count(),
        graph.density(),
        a.out.display(),
        labels_out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct BootstrapSummary {
    replicates: usize,
    t_boot: f64,
    p_value: f64,
    reject: bool,
    fitted_mu: f64,
    fitted_beta: f64,
}

#[derive(Serialize)]
struct TestOutput {
    artifact_version: &'static str,
    seed: u64,
    labels: &'static str,
    test: TwoSampleOutcome,
    bootstrap: Option<BootstrapSummary>,
    k_selection: Option<[KSelectionReport; 2]>,
}

fn load_pair(
    x: &Path,
    y: &Path,
) -> std::result::Result<(AdjacencyMatrix, AdjacencyMatrix), CliError> {
    let x = read_graph(x)?;
    let y = read_graph(y)?;
    if x.n() != y.n() {
        return Err(Error::SizeMismatch {
            left: x.n(),
            right: y.n(),
        }
        .into());
    }
    Ok((x, y))
}

pub fn cmd_test(a: TestArgs) -> CliResult {
    let (x, y) = load_pair(&a.x, &a.y)?;
    let seed = RngSeed::new(a.seed);
    let detector = KMeansConfig::with_seed(seed.derive(0));
    let mut k_selection = None;
    let (labels, pair): (&'static str, Option<(MembershipLabel, MembershipLabel)>) =
        match (&a.gx, &a.gy, a.k, a.kmax) {
            (Some(px), Some(py), _, _) => ("given", Some((read_labels(px)?, read_labels(py)?))),
            (_, _, Some(k), _) => ("detected", Some(detect_pair(&x, &y, k, &detector)?)),
            (_, _, None, Some(kmax)) => {
                let config = SelectionConfig {
                    detector,
                    ..Default::default()
                };
                let sx = estimate_k_with(&x, kmax, a.alpha, &config)?;
                let sy = estimate_k_with(
                    &y,
                    kmax,
                    a.alpha,
                    &SelectionConfig {
                        detector: KMeansConfig::with_seed(seed.derive(1)),
                        ..config
                    },
                )?;
                let pair = (sx.k_hat == sy.k_hat)
                    .then(|| detect_pair(&x, &y, sx.k_hat, &detector))
                    .transpose()?;
                k_selection = Some([sx, sy]);
                ("selected", pair)
            }
            _ => return Err(CliError::Usage("give --gx and --gy, --k, or --kmax".into())),
        };
    let (test, bootstrap) = match &pair {
        None => {
            let [sx, sy] = k_selection.as_ref().expect("selection ran");
            (
                TwoSampleOutcome::CommunityCountMismatch {
                    kx: sx.k_hat,
                    ky: sy.k_hat,
                    alpha: a.alpha,
                    p_value: 0.0,
                    reject: true,
                },
                None,
            )
        }
        Some((gx, gy)) => {
            let test = two_sample_statistic(&x, &y, gx, gy, a.alpha)?;
            let bootstrap = match (a.bootstrap, &test) {
                (Some(m), TwoSampleOutcome::Tested(_)) => {
                    let config = BootstrapConfig::new(m, seed.derive(2));
                    let b = run_bootstrap_test(&x, &y, gx, gy, a.alpha, &config)?;
                    Some(BootstrapSummary {
                        replicates: m,
                        t_boot: b.t_boot,
                        p_value: b.p_value,
                        reject: b.reject,
                        fitted_mu: b.fitted.mu,
                        fitted_beta: b.fitted.beta,
                    })
                }
                _ => None,
            };
            (test, bootstrap)
        }
    };
    let decision = |r: bool| if r { "reject" } else { "fail to reject" };
    match &test {
        TwoSampleOutcome::Tested(r) => eprintln!(
            "T_n = {:.4} (critical {:.4}), p = {:.4}: {}",
            r.t_n,
            r.critical_value,
            r.p_value,
            decision(r.reject)
        ),
        TwoSampleOutcome::CommunityCountMismatch { kx, ky, .. } => {
            eprintln!("community counts differ ({kx} vs {ky}), p = 0: reject")
        }
    }
    if let Some(b) = &bootstrap {
        eprintln!(
            "T_boot = {:.4}, p = {:.4}: {}",
            b.t_boot,
            b.p_value,
            decision(b.reject)
        );
    }
    let output = TestOutput {
        artifact_version: env!("CARGO_PKG_VERSION"),
        seed: a.seed,
        labels,
        test,
        bootstrap,
        k_selection,
    };
    write_json(&output, a.report.as_deref())
}

pub fn cmd_select_k(a: SelectKArgs) -> CliResult {
    let graph = read_graph(&a.input)?;
    let config = SelectionConfig {
        rule: match a.rule {
            RuleArg::Plain => SelectionRule::Plain,
            RuleArg::Refined => SelectionRule::Refined,
        },
        detector: KMeansConfig::with_seed(RngSeed::new(a.seed)),
        ..Default::default()
    };
    let report = estimate_k_with(&graph, a.kmax, a.alpha, &config)?;
    eprintln!("K_hat = {}", report.k_hat);
    write_json(&report, a.report.as_deref())
}

pub fn cmd_detect(a: DetectArgs) -> CliResult {
    let graph = read_graph(&a.input)?;
    let label = detect_communities(&graph, a.k, &KMeansConfig::with_seed(RngSeed::new(a.seed)))?;
    write_labels(&label, &a.out)?;
    eprintln!(
        "community sizes {:?} -> {}",
        label.block_sizes(),
        a.out.display()
    );
    Ok(())
}

pub fn cmd_simulate(a: SimulateArgs) -> CliResult {
    let mut config = ExperimentConfig::load(&a.config)?;
    if let Some(seed) = a.seed {
        config.seed = seed;
    }
    if a.replications.is_some() {
        config.replications = a.replications;
    }
    let report = run_experiment(&config)?;
    fs::create_dir_all(&a.out)?;
    fs::write(a.out.join("report.json"), report_json(&report))?;
    fs::write(a.out.join("report.csv"), report_csv(&report))?;
    if !report.calibration.is_empty() {
        fs::write(a.out.join("histogram.csv"), histogram_csv(&report))?;
        fs::write(a.out.join("ecdf.csv"), ecdf_csv(&report))?;
    }
    for c in &report.cells {
        eprintln!(
            "{} K={} r={} n={} {}: rate {:.3} (se {:.3}, {} reps)",
            c.scenario.name(),
            c.k,
            c.r,
            c.n,
            c.statistic,
            c.rejection_rate,
            c.se,
            c.replications
        );
    }
    for s in &report.calibration {
        eprintln!(
            "K={} n={} {}: KS distance {:.4}",
            s.k, s.n, s.statistic, s.ks_distance
        );
    }
    eprintln!(
        "finished in {:.1} s -> {}",
        report.wall_clock_seconds,
        a.out.display()
    );
    Ok(())
}

pub fn cmd_preprocess(a: PreprocessArgs) -> CliResult {
    let graphs = a
        .input
        .iter()
        .map(|path| -> std::result::Result<AdjacencyMatrix, Error> {
            match a.mode {
                PreprocessMode::Corr => {
                    correlation_to_adjacency(&read_similarity_csv(path)?, a.tau)
                }
                PreprocessMode::Trade => {
                    let w = if a.directed {
                        WeightMatrix::from_directed(&parse_csv(&fs::read_to_string(path)?)?)?
                    } else {
                        read_weights_csv(path)?
                    };
                    Ok(weights_to_adjacency_median(&w))
                }
            }
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let rule = match a.degree_rule {
        DegreeRuleArg::Total => DegreeRule::Total,
        DegreeRuleArg::Each => DegreeRule::Each,
    };
    let filtered = degree_filter(&graphs[0], &graphs[1], a.min_total_degree, rule)?;
    write_edge_list(&filtered.x, &a.out[0])?;
    write_edge_list(&filtered.y, &a.out[1])?;
    if let Some(path) = &a.kept {
        let text: String = filtered
            .kept
            .iter()
            .map(|i| format!("{}\n", i + 1))
            .collect();
        fs::write(path, text)?;
    }
    eprintln!(
        "kept {} of {} nodes; edges {} and {}",
        filtered.kept.len(),
        graphs[0].n(),
        filtered.x.edge_count(),
        filtered.y.edge_count()
    );
    Ok(())
}
