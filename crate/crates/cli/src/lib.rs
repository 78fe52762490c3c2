//! Command-line front end: fitting, simulation, model selection,
//! benchmarking and plot-data export.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rhlp_core::io::{
    load_fit_report, load_signal_csv, save_fit_report, write_benchmark_csv, write_fitted_csv,
    write_plot_data_csv, write_selection_csv, write_signal_csv, PiecewiseMethod, PiecewiseReport,
    Report,
};
use rhlp_core::piecewise::{fisher_dp, multi_start_iterative, IterativeOptions, PiecewiseConfig};
use rhlp_core::regression::uniform_times;
use rhlp_core::rhlp::{em_fit, select_model, EmConfig, InitStrategy, IrlsOptions};
use rhlp_core::simulation::{
    run_benchmark, simulate_piecewise, simulate_rhlp, BenchmarkConfig, Method, PiecewiseScenario,
};
use rhlp_core::{Error, Signal};

/// Span of the time axis used by the simulation scenarios, in seconds.
const SCENARIO_SPAN: f64 = 5.0;

#[derive(Debug, Parser)]
#[command(
    name = "rhlp",
    version,
    about = "Signal segmentation with a hidden logistic process"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the hidden-logistic-process regression model by EM.
    FitRhlp(FitRhlpArgs),
    /// Fit a piecewise polynomial regression with Fisher's exact algorithm.
    FitDp(FitDpArgs),
    /// Fit a piecewise polynomial regression with the iterative variant.
    FitDpIter(FitDpIterArgs),
    /// Simulate a signal with ground-truth labels.
    Simulate(SimulateArgs),
    /// Sweep (K, p) with BIC and report the best model.
    SelectModel(SelectArgs),
    /// Run the simulation study and write the criteria table.
    Benchmark(BenchmarkArgs),
    /// Convert a report into long-format CSV series for plotting.
    PlotData(PlotDataArgs),
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Signal CSV with header `t,x`.
    #[arg(long)]
    pub input: PathBuf,
    /// Report JSON to write.
    #[arg(long)]
    pub output: PathBuf,
    /// Also write `t,x,denoised,label` to this CSV.
    #[arg(long)]
    pub fitted: Option<PathBuf>,
    /// Rescale time linearly onto [0, 5] before fitting.
    #[arg(long)]
    pub normalize_time: bool,
    #[arg(long, default_value_t = 1e-8)]
    pub variance_floor: f64,
}

#[derive(Debug, Args)]
pub struct FitRhlpArgs {
    #[command(flatten)]
    pub io: InputArgs,
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    #[arg(long, default_value_t = 2)]
    pub p: usize,
    #[arg(long, default_value_t = 1)]
    pub q: usize,
    /// EM stops when the log-likelihood increases by less than this.
    #[arg(long, default_value_t = 1e-6)]
    pub epsilon: f64,
    /// IRLS stops when `Q_1` increases by no more than this.
    #[arg(long, default_value_t = 1e-6)]
    pub delta: f64,
    #[arg(long, default_value_t = 1000)]
    pub max_iter: usize,
    /// Extra EM runs from jittered uniform splits (0: uniform start only).
    #[arg(long, default_value_t = 0)]
    pub restarts: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct FitDpArgs {
    #[command(flatten)]
    pub io: InputArgs,
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    #[arg(long, default_value_t = 2)]
    pub p: usize,
    /// Minimum samples per segment (default p + 2).
    #[arg(long)]
    pub min_segment_length: Option<usize>,
}

#[derive(Debug, Args)]
pub struct FitDpIterArgs {
    #[command(flatten)]
    pub io: InputArgs,
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    #[arg(long, default_value_t = 2)]
    pub p: usize,
    #[arg(long)]
    pub min_segment_length: Option<usize>,
    /// Stop when `J` decreases by less than this.
    #[arg(long, default_value_t = 1e-6)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 1000)]
    pub max_iter: usize,
    /// Random starts in addition to the uniform one.
    #[arg(long, default_value_t = 10)]
    pub restarts: usize,
    #[arg(long)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// `situation1` or `situation2`.
    #[arg(long, conflicts_with = "params", required_unless_present = "params")]
    pub scenario: Option<String>,
    /// RHLP report JSON whose parameters generate the signal.
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long)]
    pub seed: u64,
    /// CSV with columns `t,x,label`.
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// BIC table CSV.
    #[arg(long)]
    pub output: PathBuf,
    /// Optional JSON report of the best model.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
    pub k: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,3")]
    pub p: Vec<usize>,
    #[arg(long, default_value_t = 1)]
    pub q: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub delta: f64,
    #[arg(long, default_value_t = 1000)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub normalize_time: bool,
    #[arg(long, default_value_t = 1e-8)]
    pub variance_floor: f64,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    #[arg(
        long,
        alias = "scenario",
        value_delimiter = ',',
        default_value = "situation1,situation2"
    )]
    pub scenarios: Vec<String>,
    /// Sample sizes (default 100,500,1000).
    #[arg(long, value_delimiter = ',', conflicts_with = "full_grid")]
    pub n: Vec<usize>,
    /// Use n = 100, 200, …, 1000.
    #[arg(long)]
    pub full_grid: bool,
    #[arg(long, default_value_t = 20)]
    pub replicates: usize,
    #[arg(long, value_delimiter = ',', default_value = "rhlp,dp,dp-iter")]
    pub methods: Vec<String>,
    #[arg(long)]
    pub seed: u64,
    /// Criteria table CSV.
    #[arg(long)]
    pub output: PathBuf,
    /// Random starts of the iterative piecewise fit.
    #[arg(long, default_value_t = 10)]
    pub restarts: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub delta: f64,
    #[arg(long, default_value_t = 1000)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 1e-8)]
    pub variance_floor: f64,
    /// Report every runtime as 0 so repeated runs give identical files.
    #[arg(long)]
    pub no_timing: bool,
    /// Run replicates one after another instead of on the thread pool.
    #[arg(long)]
    pub sequential: bool,
}

#[derive(Debug, Args)]
pub struct PlotDataArgs {
    /// Signal CSV the report was fitted on.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Must match the flag used when fitting.
    #[arg(long)]
    pub normalize_time: bool,
}

/// A failure with the process exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = if e.is_numerical() { 2 } else { 1 };
        let kind = match &e {
            Error::Parse { .. } => "parse",
            Error::Schema(_) => "schema",
            Error::Io(_) => "io",
            Error::RankDeficient { .. } | Error::EmptyComponent { .. } => "numerical",
            _ => "data",
        };
        Self {
            code,
            message: format!("{kind}: {e}"),
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        // keep it on one line whatever the underlying message contains
        write!(f, "error: {}", self.message.replace('\n', " "))
    }
}

type CliResult<T = ()> = Result<T, CliError>;

fn read_signal(path: &Path, normalize: bool) -> CliResult<Signal<f64>> {
    let signal = load_signal_csv(path)?;
    Ok(if normalize {
        signal.rescale_time(0.0, SCENARIO_SPAN)?
    } else {
        signal
    })
}

fn irls(delta: f64) -> IrlsOptions<f64> {
    IrlsOptions {
        delta,
        ..IrlsOptions::default()
    }
}

fn write_outputs(io: &InputArgs, signal: &Signal<f64>, report: &Report<f64>) -> CliResult {
    save_fit_report(report, &io.output)?;
    if let Some(path) = &io.fitted {
        write_fitted_csv(path, signal, report)?;
    }
    Ok(())
}

fn fit_rhlp(args: &FitRhlpArgs) -> CliResult {
    let signal = read_signal(&args.io.input, args.io.normalize_time)?;
    let config = EmConfig {
        epsilon: args.epsilon,
        max_iter: args.max_iter,
        irls: irls(args.delta),
        variance_floor: args.io.variance_floor,
        init: if args.restarts == 0 {
            InitStrategy::Uniform
        } else {
            InitStrategy::Randomized {
                starts: args.restarts,
            }
        },
        ..EmConfig::new(args.k, args.p, args.q)
    };
    let report = em_fit(&signal, &config, args.seed)?;
    write_outputs(&args.io, &signal, &Report::Rhlp(report))
}

fn piecewise_config(p: usize, min_len: Option<usize>, floor: f64) -> PiecewiseConfig<f64> {
    PiecewiseConfig {
        min_segment_length: min_len,
        ..PiecewiseConfig::new(p).with_variance_floor(floor)
    }
}

fn fit_dp(args: &FitDpArgs) -> CliResult {
    let signal = read_signal(&args.io.input, args.io.normalize_time)?;
    let config = piecewise_config(args.p, args.min_segment_length, args.io.variance_floor);
    let start = Instant::now();
    let fit = fisher_dp(&signal, args.k, &config)?;
    let runtime = start.elapsed().as_secs_f64();
    let report = PiecewiseReport::new(PiecewiseMethod::Exact, fit, signal.t(), runtime, None);
    write_outputs(&args.io, &signal, &Report::Piecewise(report))
}

fn fit_dp_iter(args: &FitDpIterArgs) -> CliResult {
    let signal = read_signal(&args.io.input, args.io.normalize_time)?;
    let config = piecewise_config(args.p, args.min_segment_length, args.io.variance_floor);
    let options = IterativeOptions {
        max_iter: args.max_iter,
        tol: args.epsilon,
        random_starts: args.restarts,
    };
    let start = Instant::now();
    let fit = multi_start_iterative(&signal, args.k, &config, &options, args.seed)?;
    let runtime = start.elapsed().as_secs_f64();
    let report = PiecewiseReport::new(
        PiecewiseMethod::Iterative,
        fit.best,
        signal.t(),
        runtime,
        Some(args.seed),
    );
    write_outputs(&args.io, &signal, &Report::Piecewise(report))
}

fn scenario(name: &str) -> CliResult<PiecewiseScenario<f64>> {
    PiecewiseScenario::by_name(name).ok_or_else(|| {
        CliError::usage(format!(
            "unknown scenario `{name}` (expected situation1 or situation2)"
        ))
    })
}

fn simulate(args: &SimulateArgs) -> CliResult {
    let (signal, labels) = match (&args.scenario, &args.params) {
        (Some(name), _) => simulate_piecewise(&scenario(name)?, args.n, args.seed)?,
        (None, Some(path)) => match load_fit_report::<f64>(path)? {
            Report::Rhlp(report) => {
                if args.n == 0 {
                    return Err(CliError::usage("--n must be positive"));
                }
                simulate_rhlp(
                    &report.params,
                    &uniform_times(SCENARIO_SPAN, args.n),
                    args.seed,
                )?
            }
            Report::Piecewise(_) => {
                return Err(CliError::usage("--params must point to an rhlp report"));
            }
        },
        (None, None) => return Err(CliError::usage("either --scenario or --params is required")),
    };
    write_signal_csv(&args.output, &signal, Some(&labels))?;
    Ok(())
}

fn select(args: &SelectArgs) -> CliResult {
    let signal = read_signal(&args.input, args.normalize_time)?;
    let base = EmConfig {
        epsilon: args.epsilon,
        max_iter: args.max_iter,
        irls: irls(args.delta),
        variance_floor: args.variance_floor,
        ..EmConfig::new(1, 0, args.q)
    };
    let selection = select_model(&signal, &args.k, &args.p, args.q, &base, args.seed);
    write_selection_csv(&args.output, &selection.table)?;
    let best = selection
        .best
        .ok_or_else(|| CliError::usage("every model in the grid failed to fit"))?;
    if let Some(path) = &args.report {
        save_fit_report(&Report::Rhlp(best), path)?;
    }
    Ok(())
}

fn benchmark(args: &BenchmarkArgs) -> CliResult {
    let scenarios = args
        .scenarios
        .iter()
        .map(|s| scenario(s))
        .collect::<CliResult<Vec<_>>>()?;
    let methods = args
        .methods
        .iter()
        .map(|m| m.parse::<Method>())
        .collect::<Result<Vec<_>, _>>()?;
    let n_grid = if args.full_grid {
        BenchmarkConfig::<f64>::full_grid()
    } else if args.n.is_empty() {
        BenchmarkConfig::<f64>::desk_grid()
    } else {
        args.n.clone()
    };
    let mut config = BenchmarkConfig::new(scenarios, n_grid, args.replicates, args.seed);
    config.methods = methods;
    config.em.epsilon = args.epsilon;
    config.em.max_iter = args.max_iter;
    config.em.irls = irls(args.delta);
    config.em.variance_floor = args.variance_floor;
    config.piecewise = config.piecewise.with_variance_floor(args.variance_floor);
    config.iterative.random_starts = args.restarts;
    config.record_timing = !args.no_timing;
    config.parallel = !args.sequential;
    let output = run_benchmark(&config)?;
    write_benchmark_csv(&args.output, &output.rows)?;
    Ok(())
}

fn plot_data(args: &PlotDataArgs) -> CliResult {
    let signal = read_signal(&args.input, args.normalize_time)?;
    let report = load_fit_report::<f64>(&args.report)?;
    write_plot_data_csv(&args.output, &signal, &report)?;
    Ok(())
}

/// Executes one parsed command line.
pub fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::FitRhlp(a) => fit_rhlp(a),
        Command::FitDp(a) => fit_dp(a),
        Command::FitDpIter(a) => fit_dp_iter(a),
        Command::Simulate(a) => simulate(a),
        Command::SelectModel(a) => select(a),
        Command::Benchmark(a) => benchmark(a),
        Command::PlotData(a) => plot_data(a),
    }
}
