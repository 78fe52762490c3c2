//! Reading signals and persisting fit artifacts.
//!
//! Tabular data is CSV, model artifacts are JSON. Floats are written with the
//! shortest representation that parses back to the same value, so every
//! artifact round-trips bit-exactly.
//!
//! # Report schema
//!
//! ```json
//! {
//!   "model": "rhlp" | "piecewise_dp" | "piecewise_iterative",
//!   "K": 3, "p": 2, "q": 1,
//!   "w": [[...], ...],           // K rows of length q+1, last row zero (rhlp only)
//!   "beta": [[...], ...],        // K rows of length p+1
//!   "sigma2": [...],             // K values
//!   "gamma": [...],              // K+1 boundaries (piecewise only)
//!   "log_likelihood": -1234.5,
//!   "bic": -1290.1,              // rhlp only
//!   "criterion_j": 2345.6,       // piecewise only
//!   "labels": [...], "denoised": [...],
//!   "runtime_seconds": 0.01, "converged": true, "seed": 7,
//!   "trace": [...],              // log-likelihood (rhlp) or J (piecewise) per iteration
//!   "iterations": 42,
//!   "degenerate_components": false
//! }
//! ```
//!
//! Fields that do not apply to a model are written as `null`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::piecewise::{Partition, PiecewiseFit};
use crate::regression::{GaussianComponent, Signal};
use crate::rhlp::{logistic_proportions, FitReport, LogisticProcess, RhlpParams, SelectionRow};
use crate::scalar::Real;
use crate::simulation::BenchmarkRow;

/// Reads a two-column CSV with header `t,x`.
pub fn load_signal_csv<T: Real>(path: impl AsRef<Path>) -> Result<Signal<T>> {
    read_signal_csv(BufReader::new(File::open(path)?))
}

/// [`load_signal_csv`] on any reader.
pub fn read_signal_csv<T: Real, R: Read>(reader: R) -> Result<Signal<T>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut records = rdr.records();
    let parse_err = |line: usize, message: String| Error::Parse { line, message };

    match records.next() {
        Some(Ok(header)) if header.len() == 2 && &header[0] == "t" && &header[1] == "x" => {}
        Some(Ok(header)) => {
            return Err(parse_err(
                1,
                format!(
                    "expected header `t,x`, found `{}`",
                    header.iter().collect::<Vec<_>>().join(",")
                ),
            ))
        }
        Some(Err(e)) => return Err(parse_err(1, e.to_string())),
        None => return Err(parse_err(1, "empty file; expected header `t,x`".into())),
    }

    let mut t = Vec::new();
    let mut x = Vec::new();
    for record in records {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != 2 {
            return Err(parse_err(
                line,
                format!("expected 2 fields, found {}", record.len()),
            ));
        }
        let field = |i: usize| -> Result<T> {
            record[i]
                .parse::<f64>()
                .map(T::lit)
                .map_err(|e| parse_err(line, format!("`{}`: {e}", &record[i])))
        };
        t.push(field(0)?);
        x.push(field(1)?);
    }
    Signal::new(t, x)
}

/// Writes `t,x` and, when given, a `label` column.
pub fn write_signal_csv<T: Real>(
    path: impl AsRef<Path>,
    signal: &Signal<T>,
    labels: Option<&[usize]>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    if labels.is_some() {
        w.write_record(["t", "x", "label"]).map_err(csv_err)?;
    } else {
        w.write_record(["t", "x"]).map_err(csv_err)?;
    }
    for i in 0..signal.len() {
        let mut row = vec![num(signal.t()[i]), num(signal.x()[i])];
        if let Some(l) = labels {
            row.push(l[i].to_string());
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `t,x,denoised,label` for a fitted signal.
pub fn write_fitted_csv<T: Real>(
    path: impl AsRef<Path>,
    signal: &Signal<T>,
    report: &Report<T>,
) -> Result<()> {
    let labels = report.labels();
    let denoised = report.denoised();
    if labels.len() != signal.len() || denoised.len() != signal.len() {
        return Err(Error::LengthMismatch {
            times: signal.len(),
            values: denoised.len(),
        });
    }
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    w.write_record(["t", "x", "denoised", "label"])
        .map_err(csv_err)?;
    for i in 0..signal.len() {
        w.write_record([
            num(signal.t()[i]),
            num(signal.x()[i]),
            num(denoised[i]),
            labels[i].to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Which dynamic-programming fit produced a [`PiecewiseReport`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PiecewiseMethod {
    Exact,
    Iterative,
}

/// A piecewise fit together with the run metadata that gets persisted.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseReport<T> {
    pub method: PiecewiseMethod,
    pub fit: PiecewiseFit<T>,
    pub denoised: Vec<T>,
    pub runtime_seconds: f64,
    /// Seed of the random restarts; `None` for the exact fit.
    pub seed: Option<u64>,
}

impl<T: Real> PiecewiseReport<T> {
    pub fn new(
        method: PiecewiseMethod,
        fit: PiecewiseFit<T>,
        t: &[T],
        runtime_seconds: f64,
        seed: Option<u64>,
    ) -> Self {
        let denoised = fit.denoise(t);
        Self {
            method,
            fit,
            denoised,
            runtime_seconds,
            seed,
        }
    }
}

/// Any persisted fit.
#[derive(Debug, Clone, PartialEq)]
pub enum Report<T> {
    Rhlp(FitReport<T>),
    Piecewise(PiecewiseReport<T>),
}

impl<T: Real> Report<T> {
    pub fn model_tag(&self) -> &'static str {
        match self {
            Report::Rhlp(_) => "rhlp",
            Report::Piecewise(r) if r.method == PiecewiseMethod::Exact => "piecewise_dp",
            Report::Piecewise(_) => "piecewise_iterative",
        }
    }

    pub fn labels(&self) -> Vec<usize> {
        match self {
            Report::Rhlp(r) => r.labels.clone(),
            Report::Piecewise(r) => r.fit.labels(),
        }
    }

    pub fn denoised(&self) -> &[T] {
        match self {
            Report::Rhlp(r) => &r.denoised,
            Report::Piecewise(r) => &r.denoised,
        }
    }

    pub fn components(&self) -> &[GaussianComponent<T>] {
        match self {
            Report::Rhlp(r) => &r.params.components,
            Report::Piecewise(r) => &r.fit.components,
        }
    }

    pub fn log_likelihood(&self) -> T {
        match self {
            Report::Rhlp(r) => r.log_likelihood,
            Report::Piecewise(r) => r.fit.log_likelihood,
        }
    }

    /// `n × K` mixing weights: the logistic proportions for RHLP and segment
    /// indicators for a piecewise fit.
    pub fn proportions(&self, t: &[T]) -> Array2<T> {
        match self {
            Report::Rhlp(r) => logistic_proportions(&r.params.logistic, t).0,
            Report::Piecewise(r) => {
                let k = r.fit.segments();
                let mut m = Array2::zeros((t.len(), k));
                for (i, l) in r.fit.labels().into_iter().enumerate().take(t.len()) {
                    m[[i, l]] = T::one();
                }
                m
            }
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ReportDocument {
    model: String,
    #[serde(rename = "K")]
    k: usize,
    p: usize,
    #[serde(default)]
    q: Option<usize>,
    #[serde(default)]
    w: Option<Vec<Vec<f64>>>,
    beta: Vec<Vec<f64>>,
    sigma2: Vec<f64>,
    #[serde(default)]
    gamma: Option<Vec<usize>>,
    log_likelihood: f64,
    #[serde(default)]
    bic: Option<f64>,
    #[serde(default)]
    criterion_j: Option<f64>,
    labels: Vec<usize>,
    denoised: Vec<f64>,
    #[serde(default)]
    runtime_seconds: Option<f64>,
    #[serde(default)]
    converged: Option<bool>,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    trace: Option<Vec<f64>>,
    #[serde(default)]
    iterations: Option<usize>,
    #[serde(default)]
    degenerate_components: Option<bool>,
}

fn widen_all<T: Real>(v: &[T]) -> Vec<f64> {
    v.iter().map(|x| x.widen()).collect()
}

fn narrow_all<T: Real>(v: &[f64]) -> Vec<T> {
    v.iter().map(|&x| T::lit(x)).collect()
}

fn component_rows<T: Real>(components: &[GaussianComponent<T>]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let beta = components
        .iter()
        .map(|c| widen_all(c.beta.as_slice().expect("contiguous")))
        .collect();
    let sigma2 = components.iter().map(|c| c.sigma2.widen()).collect();
    (beta, sigma2)
}

impl ReportDocument {
    fn from_report<T: Real>(report: &Report<T>) -> Self {
        let (beta, sigma2) = component_rows(report.components());
        let p = report.components().first().map_or(0, |c| c.degree());
        match report {
            Report::Rhlp(r) => Self {
                model: report.model_tag().into(),
                k: r.params.k(),
                p,
                q: Some(r.params.q()),
                w: Some(
                    r.params
                        .logistic
                        .weights()
                        .rows()
                        .into_iter()
                        .map(|row| widen_all(&row.to_vec()))
                        .collect(),
                ),
                beta,
                sigma2,
                gamma: None,
                log_likelihood: r.log_likelihood.widen(),
                bic: Some(r.bic.widen()),
                criterion_j: None,
                labels: r.labels.clone(),
                denoised: widen_all(&r.denoised),
                runtime_seconds: Some(r.runtime_seconds),
                converged: Some(r.converged),
                seed: Some(r.seed),
                trace: Some(widen_all(&r.log_likelihood_trace)),
                iterations: Some(r.em_iterations),
                degenerate_components: Some(r.degenerate_components),
            },
            Report::Piecewise(r) => Self {
                model: report.model_tag().into(),
                k: r.fit.segments(),
                p,
                q: None,
                w: None,
                beta,
                sigma2,
                gamma: Some(r.fit.partition.gamma().to_vec()),
                log_likelihood: r.fit.log_likelihood.widen(),
                bic: None,
                criterion_j: Some(r.fit.criterion_j.widen()),
                labels: r.fit.labels(),
                denoised: widen_all(&r.denoised),
                runtime_seconds: Some(r.runtime_seconds),
                converged: None,
                seed: r.seed,
                trace: Some(widen_all(&r.fit.criterion_trace)),
                iterations: Some(r.fit.iterations),
                degenerate_components: None,
            },
        }
    }

    fn components<T: Real>(&self) -> Result<Vec<GaussianComponent<T>>> {
        if self.beta.len() != self.k || self.sigma2.len() != self.k {
            return Err(Error::Schema(format!(
                "expected {} rows in beta and sigma2, found {} and {}",
                self.k,
                self.beta.len(),
                self.sigma2.len()
            )));
        }
        if let Some(row) = self.beta.iter().find(|row| row.len() != self.p + 1) {
            return Err(Error::Schema(format!(
                "beta rows must have length p+1 = {}, found {}",
                self.p + 1,
                row.len()
            )));
        }
        if let Some(s) = self.sigma2.iter().find(|s| !(**s > 0.0) || !s.is_finite()) {
            return Err(Error::Schema(format!("variance {s} is not positive")));
        }
        Ok(self
            .beta
            .iter()
            .zip(&self.sigma2)
            .map(|(b, &s)| GaussianComponent::new(Array1::from(narrow_all::<T>(b)), T::lit(s)))
            .collect())
    }

    fn check_lengths(&self) -> Result<()> {
        if self.labels.len() != self.denoised.len() {
            return Err(Error::Schema(format!(
                "{} labels but {} denoised values",
                self.labels.len(),
                self.denoised.len()
            )));
        }
        if let Some(l) = self.labels.iter().find(|&&l| l >= self.k) {
            return Err(Error::Schema(format!(
                "label {l} out of range for K = {}",
                self.k
            )));
        }
        Ok(())
    }

    fn required<U: Copy>(value: Option<U>, name: &str, model: &str) -> Result<U> {
        value.ok_or_else(|| Error::Schema(format!("`{name}` is required for model `{model}`")))
    }

    fn into_report<T: Real>(self) -> Result<Report<T>> {
        self.check_lengths()?;
        let components = self.components::<T>()?;
        let model = self.model.as_str();
        match model {
            "rhlp" => {
                let q = Self::required(self.q, "q", model)?;
                let w = self
                    .w
                    .as_ref()
                    .ok_or_else(|| Error::Schema("`w` is required for model `rhlp`".into()))?;
                if w.len() != self.k || w.iter().any(|row| row.len() != q + 1) {
                    return Err(Error::Schema(format!(
                        "w must be {} rows of length q+1 = {}",
                        self.k,
                        q + 1
                    )));
                }
                if w.last().is_some_and(|row| row.iter().any(|&v| v != 0.0)) {
                    return Err(Error::Schema("the last row of w must be zero".into()));
                }
                let flat: Vec<T> = w.iter().flat_map(|row| narrow_all::<T>(row)).collect();
                let weights = Array2::from_shape_vec((self.k, q + 1), flat).expect("shape checked");
                let logistic = LogisticProcess::from_weights(weights)
                    .map_err(|e| Error::Schema(e.to_string()))?;
                let params = RhlpParams::new(logistic, components)
                    .map_err(|e| Error::Schema(e.to_string()))?;
                let trace = self
                    .trace
                    .as_deref()
                    .map(narrow_all::<T>)
                    .unwrap_or_default();
                Ok(Report::Rhlp(FitReport {
                    params,
                    log_likelihood_trace: trace,
                    log_likelihood: T::lit(self.log_likelihood),
                    bic: T::lit(Self::required(self.bic, "bic", model)?),
                    labels: self.labels,
                    denoised: narrow_all(&self.denoised),
                    runtime_seconds: self.runtime_seconds.unwrap_or(0.0),
                    converged: self.converged.unwrap_or(false),
                    em_iterations: self.iterations.unwrap_or(0),
                    degenerate_components: self.degenerate_components.unwrap_or(false),
                    seed: self.seed.unwrap_or(0),
                }))
            }
            "piecewise_dp" | "piecewise_iterative" => {
                let gamma = self.gamma.clone().ok_or_else(|| {
                    Error::Schema(format!("`gamma` is required for model `{model}`"))
                })?;
                if gamma.len() != self.k + 1 {
                    return Err(Error::Schema(format!(
                        "gamma must have K+1 = {} entries",
                        self.k + 1
                    )));
                }
                let n = *gamma.last().unwrap_or(&0);
                if n != self.labels.len() {
                    return Err(Error::Schema(format!(
                        "gamma ends at {n} but there are {} labels",
                        self.labels.len()
                    )));
                }
                let partition =
                    Partition::new(gamma, n, 1).map_err(|e| Error::Schema(e.to_string()))?;
                let criterion_j = T::lit(Self::required(self.criterion_j, "criterion_j", model)?);
                let method = if model == "piecewise_dp" {
                    PiecewiseMethod::Exact
                } else {
                    PiecewiseMethod::Iterative
                };
                let fit = PiecewiseFit {
                    partition,
                    components,
                    criterion_j,
                    log_likelihood: T::lit(self.log_likelihood),
                    criterion_trace: self
                        .trace
                        .as_deref()
                        .map(narrow_all::<T>)
                        .unwrap_or_default(),
                    iterations: self.iterations.unwrap_or(0),
                };
                Ok(Report::Piecewise(PiecewiseReport {
                    method,
                    fit,
                    denoised: narrow_all(&self.denoised),
                    runtime_seconds: self.runtime_seconds.unwrap_or(0.0),
                    seed: self.seed,
                }))
            }
            other => Err(Error::Schema(format!("unknown model tag `{other}`"))),
        }
    }
}

fn json_err(e: serde_json::Error) -> Error {
    use serde_json::error::Category;
    match e.classify() {
        Category::Io => Error::Io(e.into()),
        Category::Syntax | Category::Eof => Error::Parse {
            line: e.line(),
            message: e.to_string(),
        },
        Category::Data => Error::Schema(e.to_string()),
    }
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Schema(format!("{other:?}")),
    }
}

/// Serializes a report to the JSON schema described in the module docs.
pub fn report_to_json<T: Real>(report: &Report<T>) -> String {
    serde_json::to_string_pretty(&ReportDocument::from_report(report)).expect("report serializes")
}

/// Parses a report from JSON.
pub fn report_from_json<T: Real>(text: &str) -> Result<Report<T>> {
    let doc: ReportDocument = serde_json::from_str(text).map_err(json_err)?;
    doc.into_report()
}

pub fn save_fit_report<T: Real>(report: &Report<T>, path: impl AsRef<Path>) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    f.write_all(report_to_json(report).as_bytes())?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}

pub fn load_fit_report<T: Real>(path: impl AsRef<Path>) -> Result<Report<T>> {
    let mut text = String::new();
    File::open(path)?.read_to_string(&mut text)?;
    report_from_json(&text)
}

/// Writes the per-cell benchmark table.
pub fn write_benchmark_csv(path: impl AsRef<Path>, rows: &[BenchmarkRow]) -> Result<()> {
    let file = File::create(path)?;
    write_benchmark_rows(BufWriter::new(file), rows)
}

/// [`write_benchmark_csv`] on any writer.
pub fn write_benchmark_rows<W: Write>(writer: W, rows: &[BenchmarkRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "scenario",
        "n",
        "method",
        "misclassification",
        "denoising_mse",
        "runtime_s",
        "failures",
    ])
    .map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.scenario.clone(),
            r.n.to_string(),
            r.method.to_string(),
            num(r.misclassification),
            num(r.denoising_mse),
            num(r.runtime_seconds),
            r.failures.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the BIC table of a model-selection sweep.
pub fn write_selection_csv<T: Real>(
    path: impl AsRef<Path>,
    table: &[SelectionRow<T>],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    w.write_record(["K", "p", "q", "log_likelihood", "bic", "error"])
        .map_err(csv_err)?;
    let opt = |v: Option<T>| v.map(num).unwrap_or_default();
    for r in table {
        w.write_record([
            r.k.to_string(),
            r.p.to_string(),
            r.q.to_string(),
            opt(r.log_likelihood),
            opt(r.bic),
            r.error.clone().unwrap_or_default(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Long-format plotting data: one row per `(series, component, sample)`.
///
/// Series are `original`, `denoised`, `component` (the curve `β_kᵀ r_i`) and
/// `proportion` (`π_ik`, or segment indicators for piecewise fits). The
/// `component` column is empty for the first two.
pub fn write_plot_data_csv<T: Real>(
    path: impl AsRef<Path>,
    signal: &Signal<T>,
    report: &Report<T>,
) -> Result<()> {
    let file = File::create(path)?;
    write_plot_data(BufWriter::new(file), signal, report)
}

/// [`write_plot_data_csv`] on any writer.
pub fn write_plot_data<T: Real, W: Write>(
    writer: W,
    signal: &Signal<T>,
    report: &Report<T>,
) -> Result<()> {
    let n = signal.len();
    if report.denoised().len() != n {
        return Err(Error::LengthMismatch {
            times: n,
            values: report.denoised().len(),
        });
    }
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["series", "component", "i", "t", "value"])
        .map_err(csv_err)?;
    let t = signal.t();
    let mut row = |series: &str, k: Option<usize>, i: usize, value: T| {
        w.write_record([
            series.to_string(),
            k.map(|k| k.to_string()).unwrap_or_default(),
            i.to_string(),
            num(t[i]),
            num(value),
        ])
        .map_err(csv_err)
    };
    for (i, &x) in signal.x().iter().enumerate() {
        row("original", None, i, x)?;
    }
    for (i, &x) in report.denoised().iter().enumerate() {
        row("denoised", None, i, x)?;
    }
    for (k, c) in report.components().iter().enumerate() {
        for (i, &ti) in t.iter().enumerate() {
            row("component", Some(k), i, c.mean_at(ti))?;
        }
    }
    let pi = report.proportions(t);
    for k in 0..pi.ncols() {
        for i in 0..n {
            row("proportion", Some(k), i, pi[[i, k]])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn num<T: Real>(v: T) -> String {
    // f64 Display is the shortest string that parses back to the same value
    format!("{}", v.widen())
}
