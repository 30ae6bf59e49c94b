//! Monte Carlo experiment grid, rate studies and the file-based fit.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{cv_select, gcv_select};
use crate::error::{FlrError, Result};
use crate::estimator::{
    beta_hat, max_dimension, select_dimension, Method, SelectionConfig, DEFAULT_DELTA,
    DEFAULT_THETA_KNOWN, DEFAULT_THETA_UNKNOWN,
};
use crate::fda::{center_sample, dot, load_sample_csv, write_curve_csv, Curve, FunctionalSample};
use crate::fpca::{fit_fpca, FpcaResult};
use crate::metrics::{
    aggregate, oracle_dimension, rate_fit, risk_report, CellLabel, MonteCarloSummary,
    ReplicateRecord, RiskReport,
};
use crate::simulator::{stream_rng, Decay, ScenarioSpec, Simulator, Slope};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const DEFAULT_REPLICATES: usize = 200;
pub const DEFAULT_CV_REPLICATE_CAP: usize = 50;

/// Penalty settings shared by every cell. The known-variance rule is given
/// the scenario's true noise variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionSettings {
    #[serde(default = "default_theta_kv")]
    pub theta_kv: f64,
    #[serde(default = "default_theta_uv")]
    pub theta_uv: f64,
    #[serde(default = "default_delta")]
    pub delta_uv: f64,
    #[serde(default)]
    pub max_dim_cap: Option<usize>,
}

fn default_theta_kv() -> f64 {
    DEFAULT_THETA_KNOWN
}
fn default_theta_uv() -> f64 {
    DEFAULT_THETA_UNKNOWN
}
fn default_delta() -> f64 {
    DEFAULT_DELTA
}

impl Default for SelectionSettings {
    fn default() -> Self {
        SelectionSettings {
            theta_kv: DEFAULT_THETA_KNOWN,
            theta_uv: DEFAULT_THETA_UNKNOWN,
            delta_uv: DEFAULT_DELTA,
            max_dim_cap: None,
        }
    }
}

impl SelectionSettings {
    pub fn known(&self, sigma2: f64) -> Result<SelectionConfig> {
        SelectionConfig::known_with(sigma2, self.theta_kv)?.with_max_dim_cap(self.max_dim_cap)
    }

    pub fn unknown(&self) -> Result<SelectionConfig> {
        SelectionConfig::unknown_with(self.theta_uv, self.delta_uv)?.with_max_dim_cap(self.max_dim_cap)
    }

    pub fn validate(&self) -> Result<()> {
        self.known(1.0)?;
        self.unknown()?;
        Ok(())
    }
}

/// A grid of simulation cells run with common settings.
///
/// Each cell's random streams come from `master_seed` and the cell's
/// position in `scenarios`; the `seed` field of the scenarios is not used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenarios: Vec<ScenarioSpec>,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub selection: SelectionSettings,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub master_seed: u64,
    /// Worker threads; `None` uses the global pool.
    #[serde(default)]
    pub threads: Option<usize>,
    /// CV runs only on the first this-many replicates of each cell.
    #[serde(default = "default_cv_cap")]
    pub cv_replicate_cap: Option<usize>,
    #[serde(default)]
    pub record_replicates: bool,
}

fn default_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}
fn default_replicates() -> usize {
    DEFAULT_REPLICATES
}
fn default_cv_cap() -> Option<usize> {
    Some(DEFAULT_CV_REPLICATE_CAP)
}

/// Decays {P1, P2, E} x slopes {beta1, beta2} x n in {200, 500, 1000}.
pub fn table1_scenarios() -> Vec<ScenarioSpec> {
    let mut out = Vec::new();
    for decay in [Decay::P1, Decay::P2, Decay::E] {
        for slope in [Slope::Beta1, Slope::Beta2] {
            for n in [200, 500, 1000] {
                out.push(ScenarioSpec::new(decay, slope, n, 0));
            }
        }
    }
    out
}

impl ExperimentConfig {
    pub fn new(scenarios: Vec<ScenarioSpec>, methods: Vec<Method>, replicates: usize) -> Self {
        ExperimentConfig {
            scenarios,
            methods,
            replicates,
            selection: SelectionSettings::default(),
            output_dir: None,
            master_seed: 0,
            threads: None,
            cv_replicate_cap: default_cv_cap(),
            record_replicates: false,
        }
    }

    pub fn table1(replicates: usize) -> Self {
        Self::new(table1_scenarios(), default_methods(), replicates)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| FlrError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| FlrError::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            FlrError::Config(m) => FlrError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates < 2 {
            return Err(FlrError::Config(format!(
                "replicates must be at least 2, got {}",
                self.replicates
            )));
        }
        if self.methods.is_empty() {
            return Err(FlrError::Config("at least one method is required".into()));
        }
        if self.scenarios.is_empty() {
            return Err(FlrError::Config("at least one scenario is required".into()));
        }
        if self.threads == Some(0) {
            return Err(FlrError::Config("threads must be positive".into()));
        }
        for (i, sc) in self.scenarios.iter().enumerate() {
            sc.validate()
                .map_err(|e| FlrError::Config(format!("scenario {i}: {e}")))?;
        }
        self.selection
            .validate()
            .map_err(|e| FlrError::Config(format!("selection: {e}")))
    }

    fn runs_method(&self, method: Method, replicate: usize) -> bool {
        if !self.methods.contains(&method) {
            return false;
        }
        method != Method::Cv || self.cv_replicate_cap.is_none_or(|cap| replicate < cap)
    }
}

/// SplitMix64 finalizer over `master_seed` and the cell index.
pub fn cell_seed(master_seed: u64, cell: usize) -> u64 {
    let mut z = master_seed.wrapping_add((cell as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateFailure {
    pub cell: usize,
    pub replicate: usize,
    /// `None` when the replicate failed before any method ran.
    pub method: Option<Method>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellInfo {
    pub label: CellLabel,
    pub scenario: ScenarioSpec,
    pub seed: u64,
    /// Summed worker time spent on this cell.
    pub elapsed_seconds: f64,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub version: String,
    pub config: ExperimentConfig,
    pub cells: Vec<CellInfo>,
    pub summary: MonteCarloSummary,
    pub failures: Vec<ReplicateFailure>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replicates: Option<Vec<ReplicateRecord>>,
}

struct ReplicateOutcome {
    records: Vec<ReplicateRecord>,
    failures: Vec<ReplicateFailure>,
    seconds: f64,
}

fn run_method(
    method: Method,
    sample: &FunctionalSample,
    fit: &FpcaResult,
    kv: &SelectionConfig,
    uv: &SelectionConfig,
    baseline_max: usize,
) -> Result<(usize, Curve)> {
    match method {
        Method::Kv => select_dimension(sample, fit, kv).map(|s| (s.selected_m, s.beta_hat)),
        Method::Uv => select_dimension(sample, fit, uv).map(|s| (s.selected_m, s.beta_hat)),
        Method::Gcv => {
            let t = gcv_select(sample, fit, baseline_max)?;
            Ok((t.selected_m, beta_hat(fit, t.selected_m)?))
        }
        Method::Cv => {
            let t = cv_select(sample, baseline_max)?;
            Ok((t.selected_m, beta_hat(fit, t.selected_m)?))
        }
    }
}

fn run_replicate(cfg: &ExperimentConfig, cell: usize, sim: &Simulator, replicate: usize) -> ReplicateOutcome {
    let start = Instant::now();
    let mut out = ReplicateOutcome {
        records: Vec::new(),
        failures: Vec::new(),
        seconds: 0.0,
    };
    let fail = |method, e: FlrError| ReplicateFailure {
        cell,
        replicate,
        method,
        message: e.to_string(),
    };
    let prepared = (|| {
        let sample = sim.sample(replicate as u64)?;
        let fit = fit_fpca(&sample)?;
        let kv = cfg.selection.known(sim.scenario().sigma2)?;
        let uv = cfg.selection.unknown()?;
        // baselines and the oracle search the known-variance collection
        let max_dim = max_dimension(&fit, &kv, sample.n())?.min(fit.rank());
        let proc = sim.process();
        let oracle = oracle_dimension(&fit, sim.beta(), proc.eigenvalues(), proc.eigenfunctions(), max_dim)?;
        Ok::<_, FlrError>((sample, fit, kv, uv, max_dim, oracle))
    })();
    let (sample, fit, kv, uv, max_dim, oracle) = match prepared {
        Ok(v) => v,
        Err(e) => {
            out.failures.push(fail(None, e));
            out.seconds = start.elapsed().as_secs_f64();
            return out;
        }
    };
    let proc = sim.process();
    for &method in &Method::ALL {
        if !cfg.runs_method(method, replicate) {
            continue;
        }
        let result = run_method(method, &sample, &fit, &kv, &uv, max_dim).and_then(|(m, b)| {
            risk_report(&b, m, sim.beta(), &sample, proc.eigenvalues(), proc.eigenfunctions(), oracle)
        });
        match result {
            Ok(report) => out.records.push(ReplicateRecord {
                cell,
                replicate,
                method,
                report,
            }),
            Err(e) => out.failures.push(fail(Some(method), e)),
        }
    }
    out.seconds = start.elapsed().as_secs_f64();
    out
}

fn in_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(k) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(k)
                .build()
                .map_err(|e| FlrError::Config(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Runs every cell and replicate, aggregates, and writes the output files
/// when `output_dir` is set. The result does not depend on the number of
/// worker threads.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let mut cells = Vec::with_capacity(cfg.scenarios.len());
    let mut sims = Vec::with_capacity(cfg.scenarios.len());
    for (i, sc) in cfg.scenarios.iter().enumerate() {
        let seed = cell_seed(cfg.master_seed, i);
        let scenario = ScenarioSpec { seed, ..*sc };
        sims.push(Simulator::new(&scenario)?);
        cells.push(CellInfo {
            label: CellLabel {
                decay: sc.decay.label(),
                slope: sc.slope.label(),
                n: sc.n,
            },
            scenario,
            seed,
            elapsed_seconds: 0.0,
            failures: 0,
        });
    }
    let tasks: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..cfg.replicates).map(move |r| (c, r)))
        .collect();
    let outcomes: Vec<ReplicateOutcome> = in_pool(cfg.threads, || {
        tasks
            .par_iter()
            .map(|&(c, r)| run_replicate(cfg, c, &sims[c], r))
            .collect()
    })?;

    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (&(c, _), o) in tasks.iter().zip(outcomes) {
        cells[c].elapsed_seconds += o.seconds;
        cells[c].failures += o.failures.len();
        records.extend(o.records);
        failures.extend(o.failures);
    }
    if !failures.is_empty() {
        log::warn!("{} replicate failures excluded from aggregation", failures.len());
    }
    let labels: Vec<CellLabel> = cells.iter().map(|c| c.label.clone()).collect();
    let summary = aggregate(&records, &labels)?;
    let report = ExperimentReport {
        version: VERSION.to_string(),
        config: cfg.clone(),
        cells,
        summary,
        failures,
        replicates: cfg.record_replicates.then_some(records),
    };
    if let Some(dir) = &cfg.output_dir {
        write_report(&report, dir)?;
    }
    Ok(report)
}

/// Runs the grid and keeps per-replicate records regardless of the
/// `record_replicates` flag.
pub fn run_experiment_records(cfg: &ExperimentConfig) -> Result<(ExperimentReport, Vec<ReplicateRecord>)> {
    let mut c = cfg.clone();
    c.record_replicates = true;
    c.output_dir = None;
    let mut report = run_experiment(&c)?;
    let records = report.replicates.take().unwrap_or_default();
    report.config.record_replicates = cfg.record_replicates;
    report.config.output_dir = cfg.output_dir.clone();
    if cfg.record_replicates {
        report.replicates = Some(records.clone());
    }
    if let Some(dir) = &cfg.output_dir {
        write_report(&report, dir)?;
    }
    Ok((report, records))
}

/// Formats with nine significant digits.
pub fn sig9(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let e = x.abs().log10().floor() as i32;
    if (-5..=15).contains(&e) {
        let decimals = (8 - e).max(0) as usize;
        let s = format!("{x:.decimals$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        format!("{x:.8e}")
    }
}

fn opt9(x: Option<f64>) -> String {
    x.map(sig9).unwrap_or_default()
}

pub fn summary_csv(summary: &MonteCarloSummary, scale: f64) -> String {
    let mut out = String::from("decay,slope,n,method,mean_risk,ci_halfwidth,replicates,agreement_kv_uv\n");
    for r in &summary.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.decay,
            r.slope,
            r.n,
            r.method,
            sig9(r.mean_risk * scale),
            sig9(r.ci_halfwidth * scale),
            r.replicate_count,
            opt9(r.agreement_rate_kv_uv)
        );
    }
    out
}

pub fn replicates_csv(records: &[ReplicateRecord], cells: &[CellInfo]) -> String {
    let mut out = String::from(
        "decay,slope,n,replicate,method,selected_m,prediction_error,empirical_error,l2_error,oracle_m,oracle_risk\n",
    );
    for r in records {
        let l = &cells[r.cell].label;
        let p = &r.report;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            l.decay,
            l.slope,
            l.n,
            r.replicate,
            r.method,
            p.selected_m,
            sig9(p.prediction_error),
            sig9(p.empirical_error),
            sig9(p.l2_error),
            p.oracle_m,
            sig9(p.oracle_risk)
        );
    }
    out
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    fs::write(path, content).map_err(|e| FlrError::io(path, e))
}

/// Writes `summary.csv`, `table.csv` (risks x 1e4), `report.json` and,
/// when present, `replicates.csv`.
pub fn write_report(report: &ExperimentReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| FlrError::io(dir, e))?;
    write_file(&dir.join("summary.csv"), &summary_csv(&report.summary, 1.0))?;
    write_file(&dir.join("table.csv"), &summary_csv(&report.summary, 1e4))?;
    write_file(&dir.join("report.json"), &serde_json::to_string_pretty(report)?)?;
    if let Some(records) = &report.replicates {
        write_file(&dir.join("replicates.csv"), &replicates_csv(records, &report.cells))?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateConfig {
    pub base: ScenarioSpec,
    pub n_list: Vec<usize>,
    #[serde(default = "default_rate_method")]
    pub method: Method,
    #[serde(default = "default_rate_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub selection: SelectionSettings,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn default_rate_method() -> Method {
    Method::Kv
}
fn default_rate_replicates() -> usize {
    100
}

impl RateConfig {
    pub fn new(base: ScenarioSpec, n_list: Vec<usize>, method: Method, replicates: usize) -> Self {
        RateConfig {
            base,
            n_list,
            method,
            replicates,
            selection: SelectionSettings::default(),
            master_seed: 0,
            threads: None,
            output_dir: None,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| FlrError::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text)
            .map_err(|e| FlrError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_list.len() < 3 {
            return Err(FlrError::Config(format!(
                "rate study needs at least 3 sample sizes, got {}",
                self.n_list.len()
            )));
        }
        if let Some(n) = self.n_list.iter().find(|&&n| n < 6) {
            return Err(FlrError::Config(format!("sample size {n} is below 6")));
        }
        self.experiment().validate()
    }

    /// The experiment grid behind the study: one cell per sample size.
    pub fn experiment(&self) -> ExperimentConfig {
        let scenarios = self.n_list.iter().map(|&n| ScenarioSpec { n, ..self.base }).collect();
        ExperimentConfig {
            selection: self.selection,
            master_seed: self.master_seed,
            threads: self.threads,
            cv_replicate_cap: None,
            ..ExperimentConfig::new(scenarios, vec![self.method], self.replicates)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub n: usize,
    pub mean_risk: f64,
    pub ci_halfwidth: f64,
    pub replicates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateStudy {
    pub method: Method,
    pub slope: f64,
    pub intercept: f64,
    pub points: Vec<RatePoint>,
}

impl RateStudy {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,mean_risk,ci_halfwidth,replicates\n");
        for p in &self.points {
            let _ = writeln!(out, "{},{},{},{}", p.n, sig9(p.mean_risk), sig9(p.ci_halfwidth), p.replicates);
        }
        out
    }
}

/// Fits the log-log slope to per-n mean risks.
pub fn rate_from_points(method: Method, points: Vec<RatePoint>) -> Result<RateStudy> {
    let xy: Vec<(f64, f64)> = points.iter().map(|p| (p.n as f64, p.mean_risk)).collect();
    let (slope, intercept) = rate_fit(&xy)?;
    Ok(RateStudy {
        method,
        slope,
        intercept,
        points,
    })
}

/// Rate study with a caller-supplied risk per (sample size, replicate).
pub fn rate_study_with(
    n_list: &[usize],
    replicates: usize,
    method: Method,
    risk: impl Fn(usize, usize) -> Result<f64>,
) -> Result<RateStudy> {
    let mut points = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let values = (0..replicates).map(|r| risk(n, r)).collect::<Result<Vec<f64>>>()?;
        let (mean_risk, ci_halfwidth) = crate::metrics::mean_and_halfwidth(&values).ok_or_else(|| {
            FlrError::Precondition("rate study needs at least 2 replicates".into())
        })?;
        points.push(RatePoint {
            n,
            mean_risk,
            ci_halfwidth,
            replicates,
        });
    }
    rate_from_points(method, points)
}

pub fn run_rate_study(cfg: &RateConfig) -> Result<(RateStudy, ExperimentReport)> {
    cfg.validate()?;
    let report = run_experiment(&cfg.experiment())?;
    let mut points = Vec::with_capacity(cfg.n_list.len());
    for (cell, &n) in cfg.n_list.iter().enumerate() {
        let row = report.summary.row(cell, cfg.method).ok_or_else(|| {
            FlrError::Numeric(format!("no usable replicates at n = {n}"))
        })?;
        points.push(RatePoint {
            n,
            mean_risk: row.mean_risk,
            ci_halfwidth: row.ci_halfwidth,
            replicates: row.replicate_count,
        });
    }
    let study = rate_from_points(cfg.method, points)?;
    if let Some(dir) = &cfg.output_dir {
        write_report(&report, dir)?;
        write_file(&dir.join("rate.csv"), &study.to_csv())?;
        write_file(&dir.join("rate.json"), &serde_json::to_string_pretty(&study)?)?;
    }
    Ok((study, report))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeldOut {
    pub n_train: usize,
    pub n_test: usize,
    /// Mean squared prediction error on the held-out observations.
    pub risk: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub m: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub method: Method,
    pub n: usize,
    pub selected_m: usize,
    pub max_dim: usize,
    pub grid: Vec<f64>,
    pub beta_hat: Vec<f64>,
    pub intercept: f64,
    pub table: Vec<TableRow>,
    pub held_out: Option<HeldOut>,
}

impl FitReport {
    pub fn beta_curve(&self, grid: &std::sync::Arc<crate::fda::Grid>) -> Result<Curve> {
        Curve::new(grid.clone(), self.beta_hat.clone())
    }
}

struct Fitted {
    selected_m: usize,
    max_dim: usize,
    beta: Curve,
    table: Vec<TableRow>,
    x_mean: Vec<f64>,
    y_mean: f64,
}

fn fit_sample(raw: &FunctionalSample, method: Method, selection: &SelectionConfig) -> Result<Fitted> {
    if raw.n() < 6 {
        return Err(FlrError::SampleTooSmall(raw.n()));
    }
    let (x_mean, y_mean) = if raw.is_centred() {
        (vec![0.0; raw.grid().len()], 0.0)
    } else {
        raw.means()
    };
    let s = if raw.is_centred() { raw.clone() } else { center_sample(raw)? };
    let fit = fit_fpca(&s)?;
    let (selected_m, max_dim, table) = match method {
        Method::Kv | Method::Uv => {
            let sel = select_dimension(&s, &fit, selection)?;
            let rows = sel.table.iter().map(|r| TableRow { m: r.m, score: r.criterion }).collect();
            (sel.selected_m, sel.max_dim, rows)
        }
        Method::Gcv | Method::Cv => {
            let max_dim = max_dimension(&fit, selection, s.n())?.min(fit.rank());
            let t = if method == Method::Gcv {
                gcv_select(&s, &fit, max_dim)?
            } else {
                cv_select(&s, max_dim)?
            };
            let rows = t.rows.iter().map(|r| TableRow { m: r.m, score: r.score }).collect();
            (t.selected_m, max_dim, rows)
        }
    };
    Ok(Fitted {
        selected_m,
        max_dim,
        beta: beta_hat(&fit, selected_m)?,
        table,
        x_mean,
        y_mean,
    })
}

/// Fits one method to a sample. For `kv`/`uv` the penalty comes from
/// `selection`, which must match `method`; for `gcv`/`cv` it only sets the
/// candidate range. With at least 8 observations a seeded 80/20 split also
/// yields a held-out prediction error.
pub fn fit_sample_report(
    raw: &FunctionalSample,
    method: Method,
    selection: &SelectionConfig,
    holdout_seed: u64,
) -> Result<FitReport> {
    if matches!(method, Method::Kv | Method::Uv) && selection.method() != method {
        return Err(FlrError::Config(format!(
            "method {method} does not match the selection settings ({})",
            selection.method()
        )));
    }
    let full = fit_sample(raw, method, selection)?;
    let intercept = full.y_mean - dot(&full.x_mean, full.beta.values()) * raw.grid().weight();

    let n = raw.n();
    let n_test = ((n as f64) * 0.2).round() as usize;
    let held_out = if n_test >= 1 && n - n_test >= 6 {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut stream_rng(holdout_seed, 0));
        let (test, train) = idx.split_at(n_test);
        let mut train = train.to_vec();
        train.sort_unstable();
        let fitted = fit_sample(&raw.select(&train)?, method, selection);
        match fitted {
            Ok(f) => {
                let w = raw.grid().weight();
                let mut sse = 0.0;
                for &i in test {
                    let x: Vec<f64> = raw
                        .curves()
                        .row(i)
                        .iter()
                        .zip(&f.x_mean)
                        .map(|(a, b)| a - b)
                        .collect();
                    let pred = f.y_mean + w * dot(&x, f.beta.values());
                    sse += (raw.responses()[i] - pred).powi(2);
                }
                Some(HeldOut {
                    n_train: train.len(),
                    n_test,
                    risk: sse / n_test as f64,
                })
            }
            Err(e) => {
                log::warn!("held-out fit failed: {e}");
                None
            }
        }
    } else {
        None
    };

    Ok(FitReport {
        method,
        n,
        selected_m: full.selected_m,
        max_dim: full.max_dim,
        grid: raw.grid().points().to_vec(),
        beta_hat: full.beta.values().to_vec(),
        intercept,
        table: full.table,
        held_out,
    })
}

/// Loads curves and responses from CSV and runs [`fit_sample_report`].
pub fn fit_file(
    curves: &Path,
    responses: &Path,
    method: Method,
    selection: &SelectionConfig,
    holdout_seed: u64,
) -> Result<FitReport> {
    let raw = load_sample_csv(curves, responses)?;
    fit_sample_report(&raw, method, selection, holdout_seed)
}

/// Writes `beta_hat.csv`, `criterion.csv` and `fit.json`.
pub fn write_fit(report: &FitReport, grid: &std::sync::Arc<crate::fda::Grid>, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| FlrError::io(dir, e))?;
    write_curve_csv(&report.beta_curve(grid)?, &dir.join("beta_hat.csv"))?;
    let mut table = String::from("m,score\n");
    for r in &report.table {
        let _ = writeln!(table, "{},{}", r.m, sig9(r.score));
    }
    write_file(&dir.join("criterion.csv"), &table)?;
    write_file(&dir.join("fit.json"), &serde_json::to_string_pretty(report)?)
}

/// Per-replicate risk records of one method, in replicate order.
pub fn method_risks(records: &[ReplicateRecord], cell: usize, method: Method) -> Vec<RiskReport> {
    let mut v: Vec<&ReplicateRecord> = records
        .iter()
        .filter(|r| r.cell == cell && r.method == method)
        .collect();
    v.sort_by_key(|r| r.replicate);
    v.into_iter().map(|r| r.report).collect()
}
