use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;

use super::{
    denoising_error, misclassification_rate, simulate_piecewise, transition_times,
    PiecewiseScenario,
};
use crate::error::{Error, Result};
use crate::piecewise::{fisher_dp, multi_start_iterative, IterativeOptions, PiecewiseConfig};
use crate::regression::Signal;
use crate::rhlp::{em_fit, EmConfig};
use crate::scalar::Real;

/// Fitting method compared by the benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Rhlp,
    FisherDp,
    IterativeDp,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Rhlp, Method::FisherDp, Method::IterativeDp];

    pub fn name(self) -> &'static str {
        match self {
            Method::Rhlp => "rhlp",
            Method::FisherDp => "dp",
            Method::IterativeDp => "dp-iter",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rhlp" => Ok(Method::Rhlp),
            "dp" | "fisher" | "fisher-dp" => Ok(Method::FisherDp),
            "dp-iter" | "iterative" => Ok(Method::IterativeDp),
            other => Err(Error::InvalidArgument(format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchmarkConfig<T> {
    pub scenarios: Vec<PiecewiseScenario<T>>,
    pub n_grid: Vec<usize>,
    pub replicates: usize,
    pub methods: Vec<Method>,
    pub seed: u64,
    /// Number of segments / regression components fitted.
    pub segments: usize,
    pub degree: usize,
    pub logistic_degree: usize,
    /// EM settings; `k`, `p`, `q` are overridden by the fields above.
    pub em: EmConfig<T>,
    pub piecewise: PiecewiseConfig<T>,
    pub iterative: IterativeOptions<T>,
    /// Evaluate replicates on the rayon pool.
    pub parallel: bool,
    /// When false every runtime is reported as zero, which makes the output
    /// reproducible bit for bit.
    pub record_timing: bool,
}

impl<T: Real> BenchmarkConfig<T> {
    /// `K = 3`, `p = 2`, `q = 1`, all three methods.
    pub fn new(
        scenarios: Vec<PiecewiseScenario<T>>,
        n_grid: Vec<usize>,
        replicates: usize,
        seed: u64,
    ) -> Self {
        Self {
            scenarios,
            n_grid,
            replicates,
            methods: Method::ALL.to_vec(),
            seed,
            segments: 3,
            degree: 2,
            logistic_degree: 1,
            em: EmConfig::new(3, 2, 1),
            piecewise: PiecewiseConfig::new(2),
            iterative: IterativeOptions::default(),
            parallel: true,
            record_timing: true,
        }
    }

    /// `n ∈ {100, 500, 1000}`.
    pub fn desk_grid() -> Vec<usize> {
        vec![100, 500, 1000]
    }

    /// `n ∈ {100, 200, …, 1000}`.
    pub fn full_grid() -> Vec<usize> {
        (1..=10).map(|i| i * 100).collect()
    }
}

/// Outcome of one method on one simulated replicate.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkRecord {
    pub scenario: String,
    pub n: usize,
    pub replicate: usize,
    pub method: Method,
    pub misclassification: f64,
    pub denoising_mse: f64,
    pub runtime_seconds: f64,
    /// Times at which the estimated label sequence switches.
    pub transitions: Vec<f64>,
    pub error: Option<String>,
}

/// Criteria averaged over the successful replicates of one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkRow {
    pub scenario: String,
    pub n: usize,
    pub method: Method,
    pub misclassification: f64,
    pub denoising_mse: f64,
    pub runtime_seconds: f64,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkOutput {
    pub records: Vec<BenchmarkRecord>,
    pub rows: Vec<BenchmarkRow>,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable per-replicate seed derived from the master seed and the cell key.
pub fn cell_seed(seed: u64, scenario: &str, n: usize, replicate: usize) -> u64 {
    // FNV-1a over the scenario name
    let mut name_hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in scenario.bytes() {
        name_hash ^= u64::from(b);
        name_hash = name_hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    [name_hash, n as u64, replicate as u64]
        .iter()
        .fold(splitmix64(seed), |acc, &v| splitmix64(acc ^ v))
}

struct Estimate<T> {
    labels: Vec<usize>,
    curve: Vec<T>,
    runtime: f64,
}

fn fit_one<T: Real>(
    method: Method,
    signal: &Signal<T>,
    config: &BenchmarkConfig<T>,
    seed: u64,
) -> Result<Estimate<T>> {
    let piecewise = PiecewiseConfig {
        degree: config.degree,
        ..config.piecewise
    };
    match method {
        Method::Rhlp => {
            let em = EmConfig {
                k: config.segments,
                p: config.degree,
                q: config.logistic_degree,
                ..config.em
            };
            let report = em_fit(signal, &em, seed)?;
            Ok(Estimate {
                runtime: report.runtime_seconds,
                labels: report.labels,
                curve: report.denoised,
            })
        }
        Method::FisherDp => {
            let start = Instant::now();
            let fit = fisher_dp(signal, config.segments, &piecewise)?;
            let runtime = start.elapsed().as_secs_f64();
            Ok(Estimate {
                labels: fit.labels(),
                curve: fit.denoise(signal.t()),
                runtime,
            })
        }
        Method::IterativeDp => {
            let start = Instant::now();
            let fit = multi_start_iterative(
                signal,
                config.segments,
                &piecewise,
                &config.iterative,
                splitmix64(seed),
            )?;
            let runtime = start.elapsed().as_secs_f64();
            Ok(Estimate {
                labels: fit.best.labels(),
                curve: fit.best.denoise(signal.t()),
                runtime,
            })
        }
    }
}

fn run_replicate<T: Real>(
    config: &BenchmarkConfig<T>,
    scenario: &PiecewiseScenario<T>,
    n: usize,
    replicate: usize,
) -> Vec<BenchmarkRecord> {
    let seed = cell_seed(config.seed, &scenario.name, n, replicate);
    let record = |method, outcome: Result<(f64, f64, f64, Vec<f64>)>| {
        let (misclassification, denoising_mse, runtime_seconds, transitions, error) = match outcome
        {
            Ok((m, d, r, tr)) => (m, d, r, tr, None),
            Err(e) => (
                f64::NAN,
                f64::NAN,
                f64::NAN,
                Vec::new(),
                Some(e.to_string()),
            ),
        };
        BenchmarkRecord {
            scenario: scenario.name.clone(),
            n,
            replicate,
            method,
            misclassification,
            denoising_mse,
            runtime_seconds,
            transitions,
            error,
        }
    };
    let (signal, truth) = match simulate_piecewise(scenario, n, seed) {
        Ok(v) => v,
        Err(e) => {
            let msg = e.to_string();
            return config
                .methods
                .iter()
                .map(|&m| record(m, Err(Error::InvalidArgument(msg.clone()))))
                .collect();
        }
    };
    config
        .methods
        .iter()
        .map(|&method| {
            let outcome = fit_one(method, &signal, config, seed).and_then(|est| {
                let miss = misclassification_rate(&truth, &est.labels)?;
                let mse = denoising_error(scenario, &est.curve[..], signal.t()).widen();
                let tr = transition_times(&est.labels, signal.t())
                    .into_iter()
                    .map(Real::widen)
                    .collect();
                let runtime = if config.record_timing {
                    est.runtime
                } else {
                    0.0
                };
                Ok((miss, mse, runtime, tr))
            });
            record(method, outcome)
        })
        .collect()
}

/// Runs every `(scenario, n, replicate)` cell with every method and averages
/// the criteria over replicates. Failed fits are kept as records with an
/// error message and excluded from the averages.
pub fn run_benchmark<T: Real>(config: &BenchmarkConfig<T>) -> Result<BenchmarkOutput> {
    if config.scenarios.is_empty() || config.n_grid.is_empty() || config.methods.is_empty() {
        return Err(Error::InvalidArgument(
            "benchmark needs at least one scenario, sample size and method".into(),
        ));
    }
    if config.replicates == 0 {
        return Err(Error::InvalidArgument("replicates must be positive".into()));
    }
    let jobs: Vec<(usize, usize, usize)> = (0..config.scenarios.len())
        .flat_map(|s| {
            config
                .n_grid
                .iter()
                .flat_map(move |&n| (0..config.replicates).map(move |r| (s, n, r)))
        })
        .collect();
    let run =
        |&(s, n, r): &(usize, usize, usize)| run_replicate(config, &config.scenarios[s], n, r);
    let per_job: Vec<Vec<BenchmarkRecord>> = if config.parallel {
        jobs.par_iter().map(run).collect()
    } else {
        jobs.iter().map(run).collect()
    };
    let records: Vec<BenchmarkRecord> = per_job.into_iter().flatten().collect();

    let mut rows = Vec::new();
    for scenario in &config.scenarios {
        for &n in &config.n_grid {
            for &method in &config.methods {
                let cell: Vec<&BenchmarkRecord> = records
                    .iter()
                    .filter(|r| r.scenario == scenario.name && r.n == n && r.method == method)
                    .collect();
                let ok: Vec<&&BenchmarkRecord> =
                    cell.iter().filter(|r| r.error.is_none()).collect();
                let mean = |f: fn(&BenchmarkRecord) -> f64| {
                    if ok.is_empty() {
                        f64::NAN
                    } else {
                        ok.iter().map(|r| f(r)).sum::<f64>() / ok.len() as f64
                    }
                };
                rows.push(BenchmarkRow {
                    scenario: scenario.name.clone(),
                    n,
                    method,
                    misclassification: mean(|r| r.misclassification),
                    denoising_mse: mean(|r| r.denoising_mse),
                    runtime_seconds: mean(|r| r.runtime_seconds),
                    failures: cell.len() - ok.len(),
                });
            }
        }
    }
    Ok(BenchmarkOutput { records, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_cell_single_replicate() {
        let mut cfg =
            BenchmarkConfig::<f64>::new(vec![PiecewiseScenario::situation1()], vec![100], 1, 7);
        cfg.methods = vec![Method::FisherDp];
        let out = run_benchmark(&cfg).unwrap();
        assert_eq!(out.rows.len(), 1);
        assert_eq!(out.records.len(), 1);
        let (row, rec) = (&out.rows[0], &out.records[0]);
        assert_eq!(row.misclassification, rec.misclassification);
        assert_eq!(row.denoising_mse, rec.denoising_mse);
        assert_eq!(row.failures, 0);
    }

    #[test]
    fn same_seed_same_criteria() {
        let mut cfg = BenchmarkConfig::<f64>::new(
            vec![
                PiecewiseScenario::situation1(),
                PiecewiseScenario::situation2(),
            ],
            vec![100],
            2,
            42,
        );
        cfg.iterative.random_starts = 2;
        let a = run_benchmark(&cfg).unwrap();
        let b = run_benchmark(&cfg).unwrap();
        let strip = |o: &BenchmarkOutput| {
            o.rows
                .iter()
                .map(|r| {
                    (
                        r.scenario.clone(),
                        r.n,
                        r.method,
                        r.misclassification.to_bits(),
                        r.denoising_mse.to_bits(),
                    )
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(strip(&a), strip(&b));
    }

    #[test]
    fn untimed_runs_are_identical() {
        let mut cfg =
            BenchmarkConfig::<f64>::new(vec![PiecewiseScenario::situation2()], vec![100], 2, 3);
        cfg.iterative.random_starts = 2;
        cfg.record_timing = false;
        let a = run_benchmark(&cfg).unwrap();
        let b = run_benchmark(&cfg).unwrap();
        assert!(a.records.iter().all(|r| r.runtime_seconds == 0.0));
        assert_eq!(format!("{:?}", a.rows), format!("{:?}", b.rows));
    }

    #[test]
    fn failures_are_recorded_not_fatal() {
        let mut cfg =
            BenchmarkConfig::<f64>::new(vec![PiecewiseScenario::situation1()], vec![100], 1, 1);
        cfg.methods = vec![Method::FisherDp];
        cfg.segments = 60;
        let out = run_benchmark(&cfg).unwrap();
        assert_eq!(out.rows[0].failures, 1);
        assert!(out.rows[0].misclassification.is_nan());
        assert!(out.records[0].error.is_some());
    }

    #[test]
    fn cell_seeds_are_distinct_and_stable() {
        let a = cell_seed(42, "situation1", 100, 0);
        assert_eq!(a, cell_seed(42, "situation1", 100, 0));
        assert_ne!(a, cell_seed(42, "situation2", 100, 0));
        assert_ne!(a, cell_seed(42, "situation1", 200, 0));
        assert_ne!(a, cell_seed(42, "situation1", 100, 1));
        assert_ne!(a, cell_seed(43, "situation1", 100, 0));
    }

    #[test]
    fn methods_parse_and_print() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("bogus".parse::<Method>().is_err());
    }
}
