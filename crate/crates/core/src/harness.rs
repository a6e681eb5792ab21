//! Monte Carlo experiment runner and CSV/JSON plumbing.
//!
//! Every replication draws its sample from a stream keyed by
//! `(seed, n, replication)`, so results do not depend on the worker count.
//! All experiments share one per-replication CSV schema ([`ROW_COLUMNS`]);
//! columns that an experiment does not compute are left empty. Wall-clock
//! times only go to `summary.json` so that the CSVs are reproducible
//! byte for byte.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::estimator::{fit, EstimatorConfig, SieveEstimate};
use crate::inference::{confidence_set, profile_quantities, Calibration};
use crate::model::{simulate, stream_seed, truncate, Dataset, ModelSpec};
use crate::pursuit::{fit_pursuit, DEFAULT_VAR_THRESHOLD};
use crate::sphere::{angular_distance, SphereAngles};
use crate::wavelet::{build_table, Basis, DEFAULT_DEPTH};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    WilksCalibration,
    RootNRate,
    FisherResidual,
    Coverage,
    PursuitRecovery,
    SingleFit,
}

fn default_s_x() -> f64 {
    1.0
}
fn default_depth() -> u32 {
    DEFAULT_DEPTH
}
fn default_level() -> f64 {
    0.9
}
fn default_components() -> usize {
    2
}
fn default_var_threshold() -> Option<f64> {
    Some(DEFAULT_VAR_THRESHOLD)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub model: ModelSpec,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    pub n_grid: Vec<usize>,
    pub replications: usize,
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Basis scale and truncation radius `s_X`.
    #[serde(default = "default_s_x")]
    pub s_x: f64,
    #[serde(default = "default_depth")]
    pub depth: u32,
    /// Confidence level for coverage.
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default = "default_components")]
    pub pursuit_components: usize,
    #[serde(default = "default_var_threshold")]
    pub var_threshold: Option<f64>,
    /// Worker threads; `None` uses the global pool.
    #[serde(default)]
    pub workers: Option<usize>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::Config("replications must be at least 1".into()));
        }
        if self.n_grid.is_empty() || self.n_grid.contains(&0) {
            return Err(Error::Config("n_grid must be a nonempty list of positive sizes".into()));
        }
        if !(self.s_x > 0.0) {
            return Err(Error::Config("s_x must be positive".into()));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::Config("level must lie in (0, 1)".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be positive".into()));
        }
        self.estimator.validate()?;
        self.model.validate(None).or_else(|e| match e {
            // sieve links are checked once the basis exists
            Error::Config(msg) if msg.contains("requires a basis") => Ok(()),
            other => Err(other),
        })
    }

    pub fn basis(&self) -> Result<Basis> {
        let table = Arc::new(build_table(self.depth)?);
        let basis = Basis::new(table, self.s_x, self.estimator.m)?;
        self.model.validate(Some(&basis))?;
        Ok(basis)
    }
}

/// Columns of `replications.csv`, in order.
pub const ROW_COLUMNS: [&str; 20] = [
    "replication",
    "n",
    "seed",
    "status",
    "n_kept",
    "theta_hat",
    "angle_error",
    "loglik",
    "iterations",
    "converged",
    "jitter",
    "sigma2",
    "wilks",
    "wilks_scaled",
    "fisher_residual",
    "score_norm",
    "rho",
    "covered",
    "residual_variance",
    "max_component_error",
];

/// One replication. Vectors are `;`-joined; angles are in radians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ReplicationRow {
    pub replication: usize,
    pub n: usize,
    pub seed: u64,
    /// `ok` or the error message of the failed step.
    pub status: String,
    pub n_kept: Option<usize>,
    pub theta_hat: Option<String>,
    pub angle_error: Option<f64>,
    pub loglik: Option<f64>,
    pub iterations: Option<usize>,
    pub converged: Option<bool>,
    pub jitter: Option<f64>,
    pub sigma2: Option<f64>,
    pub wilks: Option<f64>,
    pub wilks_scaled: Option<f64>,
    pub fisher_residual: Option<f64>,
    pub score_norm: Option<f64>,
    pub rho: Option<f64>,
    pub covered: Option<bool>,
    pub residual_variance: Option<String>,
    pub max_component_error: Option<f64>,
}

impl ReplicationRow {
    pub fn ok(&self) -> bool {
        self.status == "ok"
    }
}

fn join(values: impl IntoIterator<Item = f64>) -> String {
    values.into_iter().map(|v| v.to_string()).collect::<Vec<_>>().join(";")
}

/// Parses a `;`-joined vector column.
pub fn split(text: &str) -> Vec<f64> {
    text.split(';').filter_map(|s| s.parse().ok()).collect()
}

/// Per-sample-size summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeSummary {
    pub n: usize,
    pub ok: usize,
    pub failed: usize,
    pub median_angle_error: Option<f64>,
    pub mean_wilks_scaled: Option<f64>,
    pub ks_chart_df: Option<f64>,
    pub ks_ambient_df: Option<f64>,
    pub coverage: Option<f64>,
    pub median_fisher_residual: Option<f64>,
    pub median_score_norm: Option<f64>,
    pub fisher_ratio: Option<f64>,
    pub median_rho: Option<f64>,
    pub recovery_rate: Option<f64>,
    pub decreasing_variance_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub experiment: ExperimentKind,
    pub replications: usize,
    pub seed: u64,
    pub sizes: Vec<SizeSummary>,
    /// Log-log slope of the median angular error over `n_grid`.
    pub loglog_slope: Option<f64>,
    /// Wilks statistics are divided by `RSS / (|kept| - (p - 1 + m))`.
    pub sigma2_scaling: String,
    pub level: f64,
    pub runtime_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct Report {
    pub rows: Vec<ReplicationRow>,
    pub summary: Summary,
}

/// Angular tolerance for pursuit recovery, radians.
pub const RECOVERY_TOLERANCE: f64 = 10.0 * std::f64::consts::PI / 180.0;

fn single_index_row(
    config: &ExperimentConfig,
    basis: &Basis,
    data: &Dataset,
    row: &mut ReplicationRow,
) -> Result<()> {
    let truth = DVector::from_vec(config.model.components[0].theta.clone());
    let est: SieveEstimate = fit(data, basis, &config.estimator)?;
    row.theta_hat = Some(join(est.theta.iter().copied()));
    row.angle_error = Some(angular_distance(&est.theta, &truth));
    row.loglik = Some(est.loglik);
    row.iterations = Some(est.trace.iterations_used);
    row.converged = Some(est.trace.converged);
    row.jitter = Some(est.jitter);
    if config.experiment == ExperimentKind::SingleFit || config.experiment == ExperimentKind::RootNRate {
        return Ok(());
    }
    let reference = SphereAngles::from_theta(&truth);
    let q = profile_quantities(data, basis, &est, &reference)?;
    let set = confidence_set(data, basis, &est, config.level, Calibration::Chart)?;
    row.sigma2 = Some(q.sigma2);
    row.wilks = Some(q.wilks);
    row.wilks_scaled = Some(q.wilks / q.sigma2);
    row.fisher_residual = Some(q.fisher_residual);
    row.score_norm = Some(q.score_norm);
    row.rho = Some(q.rho);
    row.covered = Some(set.contains(&reference)?);
    Ok(())
}

/// Largest angular error after greedily matching each true direction to its
/// nearest unused fitted one; infinite when fewer components were fitted.
pub fn greedy_match_error(truths: &[DVector<f64>], fitted: &[DVector<f64>]) -> f64 {
    let mut used = vec![false; fitted.len()];
    let mut worst: f64 = 0.0;
    for t in truths {
        let best = fitted
            .iter()
            .enumerate()
            .filter(|(j, _)| !used[*j])
            .map(|(j, f)| (j, angular_distance(t, f)))
            .min_by(|a, b| a.1.total_cmp(&b.1));
        match best {
            Some((j, e)) => {
                used[j] = true;
                worst = worst.max(e);
            }
            None => return f64::INFINITY,
        }
    }
    worst
}

fn pursuit_row(config: &ExperimentConfig, basis: &Basis, data: &Dataset, row: &mut ReplicationRow) -> Result<()> {
    let model = fit_pursuit(data, basis, &config.estimator, config.pursuit_components, config.var_threshold)?;
    if let Some(msg) = &model.failure {
        return Err(Error::Initialization(msg.clone()));
    }
    let fitted: Vec<DVector<f64>> = model.components.iter().map(|c| c.theta.clone()).collect();
    row.theta_hat = Some(
        fitted
            .iter()
            .map(|t| join(t.iter().copied()))
            .collect::<Vec<_>>()
            .join("|"),
    );
    row.residual_variance = Some(join(model.residual_variance.iter().copied()));
    row.max_component_error = Some(greedy_match_error(&config.model.thetas(), &fitted));
    Ok(())
}

/// One replication; failures become rows with a non-`ok` status.
pub fn run_replication(config: &ExperimentConfig, basis: &Basis, n: usize, replication: usize) -> ReplicationRow {
    let seed = stream_seed(config.seed, n as u64, replication as u64);
    let mut row = ReplicationRow {
        replication,
        n,
        seed,
        status: "ok".into(),
        ..Default::default()
    };
    let outcome = simulate(&config.model, Some(basis), n, seed)
        .and_then(|raw| truncate(&raw, config.s_x))
        .and_then(|data| {
            row.n_kept = Some(data.n_kept());
            match config.experiment {
                ExperimentKind::PursuitRecovery => pursuit_row(config, basis, &data, &mut row),
                _ => single_index_row(config, basis, &data, &mut row),
            }
        });
    if let Err(e) = outcome {
        row.status = e.to_string();
    }
    row
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let k = values.len();
    Some(if k % 2 == 1 {
        values[k / 2]
    } else {
        0.5 * (values[k / 2 - 1] + values[k / 2])
    })
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// One-sample Kolmogorov-Smirnov distance to the chi-square law with `df`
/// degrees of freedom.
pub fn ks_distance(samples: &[f64], df: f64) -> Result<f64> {
    if samples.len() < 20 {
        return Err(Error::Statistics(format!("need at least 20 samples, got {}", samples.len())));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::Statistics("non-finite sample".into()));
    }
    let dist = ChiSquared::new(df).map_err(|e| Error::Statistics(e.to_string()))?;
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let k = sorted.len() as f64;
    let d = sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let c = dist.cdf(x);
            (c - i as f64 / k).max((i + 1) as f64 / k - c)
        })
        .fold(0.0, f64::max);
    Ok(d)
}

/// Least-squares slope of `log(err)` on `log(n)`.
pub fn loglog_slope(pairs: &[(f64, f64)]) -> Result<f64> {
    if pairs.len() < 3 {
        return Err(Error::Statistics(format!("need at least 3 pairs, got {}", pairs.len())));
    }
    if pairs.iter().any(|&(n, e)| !(n > 0.0 && e > 0.0 && n.is_finite() && e.is_finite())) {
        return Err(Error::Statistics("log-log slope needs positive finite pairs".into()));
    }
    let xs: Vec<f64> = pairs.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.1.ln()).collect();
    let (mx, my) = (mean(&xs).unwrap(), mean(&ys).unwrap());
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Statistics("all sample sizes are equal".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    Ok(sxy / sxx)
}

fn summarize_size(config: &ExperimentConfig, n: usize, rows: &[&ReplicationRow]) -> SizeSummary {
    let ok: Vec<&&ReplicationRow> = rows.iter().filter(|r| r.ok()).collect();
    let collect = |f: fn(&ReplicationRow) -> Option<f64>| -> Vec<f64> { ok.iter().filter_map(|r| f(r)).collect() };
    let mut errors = collect(|r| r.angle_error);
    let wilks = collect(|r| r.wilks_scaled);
    let mut fisher = collect(|r| r.fisher_residual);
    let mut scores = collect(|r| r.score_norm);
    let mut rho = collect(|r| r.rho);
    let covered: Vec<bool> = ok.iter().filter_map(|r| r.covered).collect();
    let p = config.model.p;
    let median_fisher = median(&mut fisher);
    let median_score = median(&mut scores);
    let pursuit: Vec<&&ReplicationRow> = ok.iter().filter(|r| r.max_component_error.is_some()).copied().collect();
    let rate = |hits: usize, total: usize| (total > 0).then(|| hits as f64 / total as f64);
    SizeSummary {
        n,
        ok: ok.len(),
        failed: rows.len() - ok.len(),
        median_angle_error: median(&mut errors),
        mean_wilks_scaled: mean(&wilks),
        ks_chart_df: ks_distance(&wilks, Calibration::Chart.df(p)).ok(),
        ks_ambient_df: ks_distance(&wilks, Calibration::Ambient.df(p)).ok(),
        coverage: rate(covered.iter().filter(|c| **c).count(), covered.len()),
        median_fisher_residual: median_fisher,
        median_score_norm: median_score,
        fisher_ratio: median_fisher.zip(median_score).map(|(a, b)| a / b),
        median_rho: median(&mut rho),
        recovery_rate: rate(
            pursuit.iter().filter(|r| r.max_component_error.unwrap() <= RECOVERY_TOLERANCE).count(),
            pursuit.len(),
        ),
        decreasing_variance_rate: rate(
            pursuit
                .iter()
                .filter(|r| {
                    let v = split(r.residual_variance.as_deref().unwrap_or(""));
                    v.windows(2).all(|w| w[1] < w[0])
                })
                .count(),
            pursuit.len(),
        ),
    }
}

/// Runs every `(n, replication)` pair and summarizes; writes nothing.
pub fn run(config: &ExperimentConfig) -> Result<Report> {
    config.validate()?;
    let start = Instant::now();
    let basis = config.basis()?;
    let jobs: Vec<(usize, usize)> = config
        .n_grid
        .iter()
        .flat_map(|&n| (0..config.replications).map(move |r| (n, r)))
        .collect();
    let work = || -> Vec<ReplicationRow> {
        jobs.par_iter().map(|&(n, r)| run_replication(config, &basis, n, r)).collect()
    };
    let rows = match config.workers {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| Error::Resource(e.to_string()))?
            .install(work),
        None => work(),
    };
    let sizes: Vec<SizeSummary> = config
        .n_grid
        .iter()
        .map(|&n| {
            let subset: Vec<&ReplicationRow> = rows.iter().filter(|r| r.n == n).collect();
            summarize_size(config, n, &subset)
        })
        .collect();
    let pairs: Vec<(f64, f64)> = sizes
        .iter()
        .filter_map(|s| s.median_angle_error.map(|e| (s.n as f64, e)))
        .collect();
    let summary = Summary {
        experiment: config.experiment,
        replications: config.replications,
        seed: config.seed,
        loglog_slope: loglog_slope(&pairs).ok(),
        sizes,
        sigma2_scaling: "residual SS / (kept - (p - 1 + m))".into(),
        level: config.level,
        runtime_seconds: start.elapsed().as_secs_f64(),
    };
    Ok(Report { rows, summary })
}

/// Writes `replications.csv` and `summary.json` into `dir`.
pub fn write_report(report: &Report, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut writer = csv::Writer::from_path(dir.join("replications.csv"))
        .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    for row in &report.rows {
        writer.serialize(row).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    }
    writer.flush()?;
    let json = serde_json::to_string_pretty(&report.summary).expect("summary serializes");
    fs::write(dir.join("summary.json"), json)?;
    Ok(())
}

/// Runs the experiment and writes its report to `out` (or the configured
/// output directory).
pub fn run_experiment(config: &ExperimentConfig, out: Option<&Path>) -> Result<Report> {
    let report = run(config)?;
    let dir = out
        .map(Path::to_path_buf)
        .or_else(|| config.output_dir.clone())
        .ok_or_else(|| Error::Config("no output directory given".into()))?;
    write_report(&report, &dir)?;
    Ok(report)
}

/// Reads a `x1,...,xp,y` CSV; every row is kept.
pub fn read_data(path: &Path) -> Result<Dataset> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let headers = reader.headers().map_err(|e| Error::Data(e.to_string()))?.clone();
    let p = headers.len().saturating_sub(1);
    let expected: Vec<String> = (1..=p).map(|j| format!("x{j}")).chain(["y".to_string()]).collect();
    if p < 2 || headers.iter().ne(expected.iter().map(String::as_str)) {
        return Err(Error::Data(format!("expected header {}", expected.join(","))));
    }
    let mut values = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Data(e.to_string()))?;
        for field in record.iter() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| Error::Data(format!("row {}: '{field}' is not a number", line + 1)))?;
            if !v.is_finite() {
                return Err(Error::Data(format!("row {}: non-finite value", line + 1)));
            }
            values.push(v);
        }
    }
    let n = values.len() / (p + 1);
    if n == 0 {
        return Err(Error::Data("no data rows".into()));
    }
    let all = DMatrix::from_row_slice(n, p + 1, &values);
    Dataset::new(all.columns(0, p).into_owned(), all.column(p).into_owned(), 0)
}

/// Writes every row of `data` as a `x1,...,xp,y` CSV.
pub fn write_data(data: &Dataset, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    let header: Vec<String> = (1..=data.p()).map(|j| format!("x{j}")).chain(["y".to_string()]).collect();
    writer.write_record(&header).map_err(io)?;
    for i in 0..data.n() {
        let record: Vec<String> = data.row(i).iter().chain([data.y[i]].iter()).map(|v| v.to_string()).collect();
        writer.write_record(&record).map_err(io)?;
    }
    writer.flush()?;
    Ok(())
}
