use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use flr_core::error::ErrorKind;
use flr_core::estimator::{Method, SelectionConfig, DEFAULT_DELTA, DEFAULT_THETA_KNOWN, DEFAULT_THETA_UNKNOWN};
use flr_core::experiment::{
    fit_file, run_experiment, run_rate_study, write_fit, ExperimentConfig, RateConfig,
};
use flr_core::fda::{write_curve_csv, write_sample_csv};
use flr_core::simulator::{Decay, ScenarioSpec, Simulator, Slope};
use flr_core::{FlrError, Result};

#[derive(Parser)]
#[command(name = "flr", version, about = "Functional linear regression with adaptive dimension selection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw one sample and write it as CSV.
    Simulate(SimulateArgs),
    /// Fit a sample stored as CSV.
    Fit(FitArgs),
    /// Run a Monte Carlo grid (the default grid when no config is given).
    Experiment(ExperimentArgs),
    /// Fit the log-log convergence slope over several sample sizes.
    Rate(RateArgs),
}

#[derive(Args)]
struct Common {
    /// JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed; overrides the one in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "flr-out")]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    /// Eigenvalue decay (P1, P2 or E) when no config is given.
    #[arg(long, default_value = "P1")]
    decay: String,
    /// Slope (beta1 or beta2) when no config is given.
    #[arg(long, default_value = "beta1")]
    slope: String,
    #[arg(long, default_value_t = 200)]
    n: usize,
}

#[derive(Args)]
struct FitArgs {
    /// Curve file: grid header row, then one row per curve.
    #[arg(long)]
    curves: PathBuf,
    /// Response file: one value per row.
    #[arg(long)]
    responses: PathBuf,
    #[arg(long, default_value = "uv")]
    method: String,
    /// Noise variance for the known-variance rule (and for the candidate
    /// range of gcv/cv when given).
    #[arg(long)]
    sigma2: Option<f64>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    delta: f64,
    /// Seed of the held-out split.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "flr-out")]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    replicates: Option<usize>,
    /// Comma-separated subset of kv,uv,gcv,cv.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    #[arg(long, env = "FLR_THREADS")]
    threads: Option<usize>,
}

#[derive(Args)]
struct ExperimentArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Also write replicates.csv.
    #[arg(long)]
    record_replicates: bool,
    /// Run CV on at most this many replicates per cell (0 = no cap).
    #[arg(long)]
    cv_cap: Option<usize>,
}

#[derive(Args)]
struct RateArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Eigenvalue decay when no config is given.
    #[arg(long, default_value = "P1")]
    decay: String,
    /// Sample sizes when no config is given.
    #[arg(long, value_delimiter = ',', default_value = "200,500,1000,2000")]
    n_list: Vec<usize>,
}

fn parse_json_str<T: serde::de::DeserializeOwned>(what: &str, s: &str) -> Result<T> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| FlrError::Config(format!("unknown {what} '{s}'")))
}

fn parse_methods(list: &[String]) -> Result<Vec<Method>> {
    let mut out = Vec::new();
    for m in list {
        let m = Method::parse(m.trim())?;
        if !out.contains(&m) {
            out.push(m);
        }
    }
    Ok(out)
}

fn load_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| FlrError::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| FlrError::Config(format!("{}: {e}", path.display())))
}

/// A config file that cannot be read is a configuration error.
fn config_io(e: FlrError) -> FlrError {
    match e {
        FlrError::Io { path, source } => FlrError::Config(format!("{}: {source}", path.display())),
        other => other,
    }
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let mut sc: ScenarioSpec = match &a.common.config {
        Some(p) => load_json(p)?,
        None => ScenarioSpec::new(
            parse_json_str::<Decay>("decay", &a.decay)?,
            parse_json_str::<Slope>("slope", &a.slope)?,
            a.n,
            0,
        ),
    };
    if let Some(seed) = a.common.seed {
        sc.seed = seed;
    }
    sc.validate().map_err(|e| FlrError::Config(e.to_string()))?;
    let data = Simulator::new(&sc)?.generate(0)?;
    let out = &a.common.out;
    std::fs::create_dir_all(out).map_err(|e| FlrError::Io { path: out.clone(), source: e })?;
    write_sample_csv(&data.sample, &out.join("curves.csv"), &out.join("responses.csv"))?;
    write_curve_csv(&data.beta, &out.join("beta.csv"))?;
    std::fs::write(out.join("scenario.json"), serde_json::to_string_pretty(&sc)?)
        .map_err(|e| FlrError::Io { path: out.join("scenario.json"), source: e })?;
    println!("wrote {} curves to {}", sc.n, out.display());
    Ok(())
}

fn fit(a: FitArgs) -> Result<()> {
    let method = Method::parse(&a.method)?;
    let selection = match (method, a.sigma2) {
        (Method::Kv, None) => {
            return Err(FlrError::Config("method kv needs --sigma2".into()));
        }
        (Method::Uv, _) => {
            SelectionConfig::unknown_with(a.theta.unwrap_or(DEFAULT_THETA_UNKNOWN), a.delta)?
        }
        (_, Some(s2)) => SelectionConfig::known_with(s2, a.theta.unwrap_or(DEFAULT_THETA_KNOWN))?,
        (_, None) => SelectionConfig::unknown(),
    };
    let report = fit_file(&a.curves, &a.responses, method, &selection, a.seed)?;
    let grid = std::sync::Arc::new(flr_core::fda::Grid::new(report.grid.clone())?);
    write_fit(&report, &grid, &a.out)?;
    match report.held_out {
        Some(h) => println!(
            "{}: selected m = {} of {}; held-out error {} ({} of {} observations)",
            method,
            report.selected_m,
            report.max_dim,
            flr_core::experiment::sig9(h.risk),
            h.n_test,
            report.n
        ),
        None => println!("{}: selected m = {} of {}", method, report.selected_m, report.max_dim),
    }
    Ok(())
}

fn experiment(a: ExperimentArgs) -> Result<()> {
    let mut cfg = match &a.run.common.config {
        Some(p) => ExperimentConfig::load(p).map_err(config_io)?,
        None => ExperimentConfig::table1(flr_core::experiment::DEFAULT_REPLICATES),
    };
    if let Some(seed) = a.run.common.seed {
        cfg.master_seed = seed;
    }
    if let Some(r) = a.run.replicates {
        cfg.replicates = r;
    }
    if let Some(m) = &a.run.methods {
        cfg.methods = parse_methods(m)?;
    }
    if a.run.threads.is_some() {
        cfg.threads = a.run.threads;
    }
    if let Some(cap) = a.cv_cap {
        cfg.cv_replicate_cap = (cap > 0).then_some(cap);
    }
    cfg.record_replicates |= a.record_replicates;
    cfg.output_dir = Some(a.run.common.out.clone());
    cfg.validate()?;
    let report = run_experiment(&cfg)?;
    print!("{}", flr_core::experiment::summary_csv(&report.summary, 1.0));
    if !report.failures.is_empty() {
        eprintln!("{} replicate failures excluded", report.failures.len());
    }
    Ok(())
}

fn rate(a: RateArgs) -> Result<()> {
    let mut cfg = match &a.run.common.config {
        Some(p) => RateConfig::load(p).map_err(config_io)?,
        None => {
            let decay = parse_json_str::<Decay>("decay", &a.decay)?;
            let base = ScenarioSpec::new(decay, Slope::Ellipsoid { r: 2.0, radius: 1.0 }, a.n_list[0], 0);
            RateConfig::new(base, a.n_list.clone(), Method::Kv, 100)
        }
    };
    if let Some(seed) = a.run.common.seed {
        cfg.master_seed = seed;
    }
    if let Some(r) = a.run.replicates {
        cfg.replicates = r;
    }
    if let Some(m) = &a.run.methods {
        let methods = parse_methods(m)?;
        if methods.len() != 1 {
            return Err(FlrError::Config("rate takes exactly one method".into()));
        }
        cfg.method = methods[0];
    }
    if a.run.threads.is_some() {
        cfg.threads = a.run.threads;
    }
    cfg.output_dir = Some(a.run.common.out.clone());
    cfg.validate()?;
    let (study, _) = run_rate_study(&cfg)?;
    print!("{}", study.to_csv());
    println!("slope {}", flr_core::experiment::sig9(study.slope));
    Ok(())
}

fn exit_code(e: &FlrError) -> u8 {
    match e.kind() {
        ErrorKind::Config => 1,
        ErrorKind::Data | ErrorKind::Io => 2,
        ErrorKind::Numeric => 3,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return if usage { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Fit(a) => fit(a),
        Command::Experiment(a) => experiment(a),
        Command::Rate(a) => rate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::debug!("{e:?}");
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
