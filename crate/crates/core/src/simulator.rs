//! Synthetic functional regression data.
//!
//! Predictors follow a truncated Karhunen-Loeve expansion
//! `X = sum_{j<=J} sqrt(lambda_j) xi_j psi_j` with `psi_j(x) = sqrt(2) sin(pi (j - 1/2) x)`
//! and i.i.d. standard normal scores, sampled on the grid `t_k = (k-1)/p`.
//! Responses are `Y = <beta, X> + eps`.
//!
//! Randomness comes from ChaCha8 streams: one seed per scenario, one stream
//! per replicate, so draws do not depend on thread scheduling.

use std::f64::consts::{PI, SQRT_2};
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::error::{FlrError, Result};
use crate::fda::{Curve, FunctionalSample, Grid};

pub const DEFAULT_TRUNCATION: usize = 150;
pub const DEFAULT_GRID_SIZE: usize = 100;
pub const DEFAULT_NOISE_VARIANCE: f64 = 0.01;

/// The random stream for `(seed, stream)`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayKind {
    /// `lambda_j = j^-a`
    Polynomial,
    /// `lambda_j = exp(-j^a)`
    Exponential,
}

/// Eigenvalue sequence of the predictor covariance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Decay {
    /// `j^-2`
    P1,
    /// `j^-3`
    P2,
    /// `e^-j`
    E,
    #[serde(rename = "custom")]
    Custom { a: f64, kind: DecayKind },
}

impl Decay {
    pub fn eigenvalue(&self, j: usize) -> f64 {
        let jf = j as f64;
        match *self {
            Decay::P1 => jf.powi(-2),
            Decay::P2 => jf.powi(-3),
            Decay::E => (-jf).exp(),
            Decay::Custom { a, kind: DecayKind::Polynomial } => jf.powf(-a),
            Decay::Custom { a, kind: DecayKind::Exponential } => (-jf.powf(a)).exp(),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Decay::P1 => "P1".into(),
            Decay::P2 => "P2".into(),
            Decay::E => "E".into(),
            Decay::Custom { a, kind: DecayKind::Polynomial } => format!("poly({a})"),
            Decay::Custom { a, kind: DecayKind::Exponential } => format!("exp({a})"),
        }
    }

    fn validate(&self) -> Result<()> {
        if let Decay::Custom { a, .. } = self {
            if !(a.is_finite() && *a > 0.0) {
                return Err(FlrError::Config(format!("decay exponent must be positive, got {a}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessSpec {
    pub decay: Decay,
    #[serde(rename = "J", default = "default_truncation")]
    pub truncation: usize,
    #[serde(rename = "p", default = "default_grid_size")]
    pub grid_size: usize,
}

fn default_truncation() -> usize {
    DEFAULT_TRUNCATION
}

fn default_grid_size() -> usize {
    DEFAULT_GRID_SIZE
}

impl ProcessSpec {
    pub fn new(decay: Decay) -> Self {
        Self {
            decay,
            truncation: DEFAULT_TRUNCATION,
            grid_size: DEFAULT_GRID_SIZE,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.decay.validate()?;
        if self.truncation == 0 {
            return Err(FlrError::Config("truncation J must be at least 1".into()));
        }
        if self.grid_size < 2 {
            return Err(FlrError::Config("grid size p must be at least 2".into()));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Arc<Grid>> {
        Ok(Arc::new(Grid::equispaced(self.grid_size)?))
    }
}

/// `psi_j(x) = sqrt(2) sin(pi (j - 1/2) x)`, `j >= 1`.
pub fn basis_function(j: usize, x: f64) -> f64 {
    SQRT_2 * (PI * (j as f64 - 0.5) * x).sin()
}

/// Eigenvalues `lambda_1..lambda_J` and grid-sampled eigenfunctions.
pub fn eigen_basis(spec: &ProcessSpec) -> Result<(Vec<f64>, Vec<Curve>)> {
    spec.validate()?;
    let grid = spec.grid()?;
    eigen_basis_on(spec, &grid)
}

fn eigen_basis_on(spec: &ProcessSpec, grid: &Arc<Grid>) -> Result<(Vec<f64>, Vec<Curve>)> {
    let lambdas = (1..=spec.truncation).map(|j| spec.decay.eigenvalue(j)).collect();
    let curves = (1..=spec.truncation)
        .map(|j| Curve::from_fn(grid.clone(), |x| basis_function(j, x)))
        .collect::<Result<Vec<_>>>()?;
    Ok((lambdas, curves))
}

/// Precomputed Karhunen-Loeve sampler.
#[derive(Debug, Clone)]
pub struct KlProcess {
    grid: Arc<Grid>,
    eigenvalues: Vec<f64>,
    eigenfunctions: Vec<Curve>,
    /// `J x p`, row `j` holds `sqrt(lambda_j) psi_j`.
    weighted_basis: DMatrix<f64>,
}

impl KlProcess {
    pub fn new(spec: &ProcessSpec) -> Result<Self> {
        spec.validate()?;
        let grid = spec.grid()?;
        let (eigenvalues, eigenfunctions) = eigen_basis_on(spec, &grid)?;
        let weighted_basis = DMatrix::from_fn(spec.truncation, grid.len(), |j, k| {
            eigenvalues[j].sqrt() * eigenfunctions[j].values()[k]
        });
        Ok(Self {
            grid,
            eigenvalues,
            eigenfunctions,
            weighted_basis,
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenfunctions(&self) -> &[Curve] {
        &self.eigenfunctions
    }

    /// The curve with prescribed scores `xi` (missing trailing scores are zero).
    pub fn curve_from_scores(&self, xi: &[f64]) -> Curve {
        let p = self.grid.len();
        let mut values = vec![0.0; p];
        for (j, &x) in xi.iter().enumerate().take(self.eigenvalues.len()) {
            for (k, v) in values.iter_mut().enumerate() {
                *v += x * self.weighted_basis[(j, k)];
            }
        }
        Curve::new(self.grid.clone(), values).expect("finite scores give finite values")
    }

    pub fn draw(&self, rng: &mut ChaCha8Rng) -> Curve {
        let xi: Vec<f64> = (0..self.eigenvalues.len())
            .map(|_| StandardNormal.sample(rng))
            .collect();
        self.curve_from_scores(&xi)
    }

    /// `n` curves as the rows of an `n x p` matrix. Scores are drawn
    /// curve by curve in the same order as repeated [`KlProcess::draw`].
    pub fn draw_matrix(&self, n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let j = self.eigenvalues.len();
        let mut scores = DMatrix::zeros(n, j);
        for i in 0..n {
            for c in 0..j {
                scores[(i, c)] = StandardNormal.sample(rng);
            }
        }
        scores * &self.weighted_basis
    }
}

/// One draw of `X` for the given process.
pub fn draw_curve(spec: &ProcessSpec, rng: &mut ChaCha8Rng) -> Result<Curve> {
    Ok(KlProcess::new(spec)?.draw(rng))
}

/// Slope function of the linear model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Slope {
    /// `ln(15 x^2 + 10) + cos(4 pi x)`
    Beta1,
    /// `exp(s (x - 0.3)^2 / 0.05) cos(4 pi x)` with sign `s` (default -1)
    Beta2,
    /// Boundary point of the ellipsoid `sum_j j^r <f, psi_j>^2 <= R^2`.
    Ellipsoid {
        r: f64,
        #[serde(rename = "R")]
        radius: f64,
    },
}

impl Slope {
    pub fn label(&self) -> String {
        match self {
            Slope::Beta1 => "beta1".into(),
            Slope::Beta2 => "beta2".into(),
            Slope::Ellipsoid { r, radius } => format!("ellipsoid(r={r},R={radius})"),
        }
    }

    fn validate(&self) -> Result<()> {
        if let Slope::Ellipsoid { r, radius } = self {
            if !(r.is_finite() && *r >= 0.0 && radius.is_finite() && *radius > 0.0) {
                return Err(FlrError::Config(format!(
                    "ellipsoid needs r >= 0 and R > 0, got r = {r}, R = {radius}"
                )));
            }
        }
        Ok(())
    }
}

pub fn beta1(x: f64) -> f64 {
    (15.0 * x * x + 10.0).ln() + (4.0 * PI * x).cos()
}

pub fn beta2(x: f64, exponent_sign: f64) -> f64 {
    (exponent_sign * (x - 0.3).powi(2) / 0.05).exp() * (4.0 * PI * x).cos()
}

/// Basis coefficients `c j^{-(r+1)/2 - 0.05}`, `j = 1..J`, scaled so that
/// `sum_j j^r c_j^2 = R^2`.
pub fn ellipsoid_coefficients(r: f64, radius: f64, truncation: usize) -> Vec<f64> {
    let raw: Vec<f64> = (1..=truncation)
        .map(|j| (j as f64).powf(-(r + 1.0) / 2.0 - 0.05))
        .collect();
    let weighted: f64 = raw
        .iter()
        .enumerate()
        .map(|(i, c)| ((i + 1) as f64).powf(r) * c * c)
        .sum();
    let scale = radius / weighted.sqrt();
    raw.into_iter().map(|c| c * scale).collect()
}

/// Knobs for the slope functions that are not part of the slope itself.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeOptions {
    pub truncation: usize,
    pub beta2_exponent_sign: f64,
}

impl Default for SlopeOptions {
    fn default() -> Self {
        Self {
            truncation: DEFAULT_TRUNCATION,
            beta2_exponent_sign: -1.0,
        }
    }
}

pub fn slope_curve(slope: &Slope, grid: &Arc<Grid>) -> Result<Curve> {
    slope_curve_with(slope, grid, &SlopeOptions::default())
}

pub fn slope_curve_with(slope: &Slope, grid: &Arc<Grid>, opts: &SlopeOptions) -> Result<Curve> {
    slope.validate()?;
    match *slope {
        Slope::Beta1 => Curve::from_fn(grid.clone(), beta1),
        Slope::Beta2 => Curve::from_fn(grid.clone(), |x| beta2(x, opts.beta2_exponent_sign)),
        Slope::Ellipsoid { r, radius } => {
            let coef = ellipsoid_coefficients(r, radius, opts.truncation);
            Curve::from_fn(grid.clone(), |x| {
                coef.iter()
                    .enumerate()
                    .map(|(i, c)| c * basis_function(i + 1, x))
                    .sum()
            })
        }
    }
}

/// Noise law; both variants have variance `sigma2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Noise {
    #[default]
    Gaussian,
    /// Student t with `df > 2` degrees of freedom, rescaled to variance `sigma2`.
    StudentT { df: f64 },
}

fn default_sigma2() -> f64 {
    DEFAULT_NOISE_VARIANCE
}

fn default_beta2_sign() -> f64 {
    -1.0
}

fn is_default_sign(s: &f64) -> bool {
    *s == -1.0
}

fn is_gaussian(n: &Noise) -> bool {
    *n == Noise::Gaussian
}

/// One simulation cell: process, slope, noise, sample size and seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub decay: Decay,
    #[serde(rename = "J", default = "default_truncation")]
    pub truncation: usize,
    #[serde(rename = "p", default = "default_grid_size")]
    pub grid_size: usize,
    pub slope: Slope,
    #[serde(default = "default_sigma2")]
    pub sigma2: f64,
    pub n: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_beta2_sign", skip_serializing_if = "is_default_sign")]
    pub beta2_exponent_sign: f64,
    #[serde(default, skip_serializing_if = "is_gaussian")]
    pub noise: Noise,
}

impl ScenarioSpec {
    pub fn new(decay: Decay, slope: Slope, n: usize, seed: u64) -> Self {
        Self {
            decay,
            truncation: DEFAULT_TRUNCATION,
            grid_size: DEFAULT_GRID_SIZE,
            slope,
            sigma2: DEFAULT_NOISE_VARIANCE,
            n,
            seed,
            beta2_exponent_sign: -1.0,
            noise: Noise::Gaussian,
        }
    }

    pub fn process(&self) -> ProcessSpec {
        ProcessSpec {
            decay: self.decay,
            truncation: self.truncation,
            grid_size: self.grid_size,
        }
    }

    pub fn slope_options(&self) -> SlopeOptions {
        SlopeOptions {
            truncation: self.truncation,
            beta2_exponent_sign: self.beta2_exponent_sign,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.process().validate()?;
        self.slope.validate()?;
        if !(self.sigma2.is_finite() && self.sigma2 > 0.0) {
            return Err(FlrError::Config(format!("sigma2 must be positive, got {}", self.sigma2)));
        }
        if self.n < 6 {
            return Err(FlrError::Config(format!("n must be at least 6, got {}", self.n)));
        }
        if self.beta2_exponent_sign != 1.0 && self.beta2_exponent_sign != -1.0 {
            return Err(FlrError::Config("beta2_exponent_sign must be +1 or -1".into()));
        }
        if let Noise::StudentT { df } = self.noise {
            if df.is_nan() || df <= 2.0 {
                return Err(FlrError::Config(format!("Student t noise needs df > 2, got {df}")));
            }
        }
        Ok(())
    }
}

/// A generated dataset with the ground truth needed for risk evaluation.
#[derive(Debug, Clone)]
pub struct SimulatedData {
    pub sample: FunctionalSample,
    pub beta: Curve,
    pub eigenvalues: Vec<f64>,
    pub eigenfunctions: Vec<Curve>,
}

/// Reusable generator for one scenario; replicate `k` reads stream `k`.
#[derive(Debug, Clone)]
pub struct Simulator {
    scenario: ScenarioSpec,
    process: KlProcess,
    beta: Curve,
}

impl Simulator {
    pub fn new(scenario: &ScenarioSpec) -> Result<Self> {
        scenario.validate()?;
        let process = KlProcess::new(&scenario.process())?;
        let beta = slope_curve_with(&scenario.slope, process.grid(), &scenario.slope_options())?;
        Ok(Self {
            scenario: *scenario,
            process,
            beta,
        })
    }

    pub fn scenario(&self) -> &ScenarioSpec {
        &self.scenario
    }

    pub fn process(&self) -> &KlProcess {
        &self.process
    }

    pub fn beta(&self) -> &Curve {
        &self.beta
    }

    pub fn sample(&self, stream: u64) -> Result<FunctionalSample> {
        let mut rng = stream_rng(self.scenario.seed, stream);
        let n = self.scenario.n;
        let curves = self.process.draw_matrix(n, &mut rng);
        let w = self.process.grid().weight();
        let signal = (&curves * nalgebra::DVector::from_column_slice(self.beta.values())) * w;
        let sd = self.scenario.sigma2.sqrt();
        let responses = match self.scenario.noise {
            Noise::Gaussian => signal
                .iter()
                .map(|s| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    s + sd * z
                })
                .collect(),
            Noise::StudentT { df } => {
                let t = StudentT::new(df).map_err(|e| FlrError::Config(e.to_string()))?;
                let unit = ((df - 2.0) / df).sqrt();
                signal
                    .iter()
                    .map(|s| s + sd * unit * t.sample(&mut rng))
                    .collect()
            }
        };
        Ok(FunctionalSample::new(self.process.grid().clone(), curves, responses)?.assume_centred())
    }

    pub fn generate(&self, stream: u64) -> Result<SimulatedData> {
        Ok(SimulatedData {
            sample: self.sample(stream)?,
            beta: self.beta.clone(),
            eigenvalues: self.process.eigenvalues().to_vec(),
            eigenfunctions: self.process.eigenfunctions().to_vec(),
        })
    }
}

/// Draws the scenario's dataset from stream 0 of its seed.
pub fn generate(scenario: &ScenarioSpec) -> Result<SimulatedData> {
    Simulator::new(scenario)?.generate(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fda::inner_product;

    fn kl_scores(process: &KlProcess, draws: usize, seed: u64, j: usize) -> Vec<f64> {
        let mut rng = stream_rng(seed, 0);
        let psi = &process.eigenfunctions()[j];
        (0..draws)
            .map(|_| inner_product(&process.draw(&mut rng), psi).unwrap())
            .collect()
    }

    fn variance(xs: &[f64]) -> f64 {
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
    }

    #[test]
    fn eigenvalue_formulas() {
        let (l, psi) = eigen_basis(&ProcessSpec::new(Decay::P1)).unwrap();
        assert_eq!(l[1], 0.25);
        assert_eq!(l.len(), 150);
        assert_eq!(psi.len(), 150);
        let (l, _) = eigen_basis(&ProcessSpec::new(Decay::E)).unwrap();
        assert!((l[2] - 0.049787068367863944).abs() < 1e-15);
        assert!((basis_function(1, 1.0) - SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn forced_scores() {
        let spec = ProcessSpec { decay: Decay::P1, truncation: 1, grid_size: 50 };
        let process = KlProcess::new(&spec).unwrap();
        let x = process.curve_from_scores(&[1.0]);
        for (t, v) in process.grid().points().iter().zip(x.values()) {
            assert!((v - SQRT_2 * (PI * t / 2.0).sin()).abs() < 1e-15);
        }
        let process = KlProcess::new(&ProcessSpec::new(Decay::P2)).unwrap();
        assert!(process.curve_from_scores(&[0.0; 150]).values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn draw_matrix_matches_single_draws() {
        let process = KlProcess::new(&ProcessSpec::new(Decay::E)).unwrap();
        let mut a = stream_rng(9, 3);
        let mut b = stream_rng(9, 3);
        let m = process.draw_matrix(4, &mut a);
        for i in 0..4 {
            let c = process.draw(&mut b);
            for (k, v) in c.values().iter().enumerate() {
                assert!((m[(i, k)] - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn kl_score_variances() {
        for decay in [Decay::P1, Decay::P2, Decay::E] {
            let process = KlProcess::new(&ProcessSpec::new(decay)).unwrap();
            for j in 0..5 {
                let v = variance(&kl_scores(&process, 2000, 100 + j as u64, j));
                let ratio = v / process.eigenvalues()[j];
                assert!((0.8..=1.2).contains(&ratio), "{decay:?} j={j}: {ratio}");
            }
        }
    }

    #[test]
    fn first_scores_uncorrelated() {
        let process = KlProcess::new(&ProcessSpec::new(Decay::P1)).unwrap();
        let a = kl_scores(&process, 2000, 5, 0);
        let b = kl_scores(&process, 2000, 5, 1);
        let (ma, mb) = (a.iter().sum::<f64>() / 2000.0, b.iter().sum::<f64>() / 2000.0);
        let cov: f64 = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / 1999.0;
        let corr = cov / (variance(&a) * variance(&b)).sqrt();
        assert!(corr.abs() <= 0.1, "{corr}");
    }

    #[test]
    fn basis_nearly_orthonormal_on_default_grid() {
        // The grid omits x = 1; the discrete Gram matrix is off the identity
        // by exactly 1/p in every entry.
        let (_, psi) = eigen_basis(&ProcessSpec::new(Decay::P1)).unwrap();
        for j in 0..10 {
            for k in 0..10 {
                let ip = inner_product(&psi[j], &psi[k]).unwrap();
                let target = if j == k { 1.0 } else { 0.0 };
                assert!((ip - target).abs() <= 1e-2 + 1e-12, "<psi_{j}, psi_{k}> = {ip}");
            }
        }
    }

    #[test]
    fn slope_values() {
        assert!((beta1(0.0) - 3.302585092994046).abs() < 1e-12);
        assert!((beta1(0.5) - 3.6210388241125804).abs() < 1e-12);
        assert!((beta2(0.3, -1.0) - (1.2 * PI).cos()).abs() < 1e-15);
        // literal sign grows to e^9.8 at x = 1
        assert!(beta2(1.0, 1.0) > 1e4);
    }

    #[test]
    fn ellipsoid_on_boundary() {
        for (r, radius) in [(2.0, 1.0), (1.0, 3.0)] {
            let c = ellipsoid_coefficients(r, radius, 150);
            let s: f64 = c.iter().enumerate().map(|(i, c)| ((i + 1) as f64).powf(r) * c * c).sum();
            assert!((s - radius * radius).abs() < 1e-6);
        }
        // the sampled curve carries those coefficients on the leading modes
        let grid = Arc::new(Grid::equispaced(2000).unwrap());
        let slope = Slope::Ellipsoid { r: 2.0, radius: 1.0 };
        let beta = slope_curve(&slope, &grid).unwrap();
        let c = ellipsoid_coefficients(2.0, 1.0, 150);
        let psi1 = Curve::from_fn(grid, |x| basis_function(1, x)).unwrap();
        assert!((inner_product(&beta, &psi1).unwrap() - c[0]).abs() < 1e-2);
    }

    #[test]
    fn generation_is_deterministic() {
        let s = ScenarioSpec::new(Decay::P1, Slope::Beta1, 50, 42);
        let a = generate(&s).unwrap();
        let b = generate(&s).unwrap();
        assert_eq!(a.sample, b.sample);
        let c = generate(&ScenarioSpec { seed: 43, ..s }).unwrap();
        assert_ne!(a.sample, c.sample);
    }

    #[test]
    fn noiseless_limit() {
        let s = ScenarioSpec { sigma2: 1e-30, ..ScenarioSpec::new(Decay::P2, Slope::Beta2, 40, 1) };
        let d = generate(&s).unwrap();
        for i in 0..d.sample.n() {
            let fit = inner_product(&d.beta, &d.sample.curve(i)).unwrap();
            assert!((d.sample.responses()[i] - fit).abs() < 1e-12);
        }
    }

    #[test]
    fn noise_variance_recovered() {
        let d = generate(&ScenarioSpec::new(Decay::P1, Slope::Beta1, 1000, 7)).unwrap();
        let resid: Vec<f64> = (0..d.sample.n())
            .map(|i| d.sample.responses()[i] - inner_product(&d.beta, &d.sample.curve(i)).unwrap())
            .collect();
        let v = variance(&resid);
        assert!((v - 0.01).abs() < 0.0015, "{v}");
    }

    #[test]
    fn student_t_noise_has_requested_variance() {
        let s = ScenarioSpec {
            noise: Noise::StudentT { df: 8.0 },
            ..ScenarioSpec::new(Decay::E, Slope::Beta1, 4000, 3)
        };
        let d = generate(&s).unwrap();
        let resid: Vec<f64> = (0..d.sample.n())
            .map(|i| d.sample.responses()[i] - inner_product(&d.beta, &d.sample.curve(i)).unwrap())
            .collect();
        let v = variance(&resid);
        assert!((v - 0.01).abs() < 0.002, "{v}");
    }

    #[test]
    fn scenario_json_rejects_unknown_fields() {
        let ok = r#"{"decay":"P1","J":150,"p":100,"slope":"beta1","sigma2":0.01,"n":200,"seed":3}"#;
        let s: ScenarioSpec = serde_json::from_str(ok).unwrap();
        assert_eq!(s, ScenarioSpec::new(Decay::P1, Slope::Beta1, 200, 3));
        let bad = r#"{"decay":"P1","slope":"beta1","n":200,"bogus":1}"#;
        assert!(serde_json::from_str::<ScenarioSpec>(bad).is_err());
        let ell = r#"{"decay":{"custom":{"a":2.0,"kind":"polynomial"}},"slope":{"ellipsoid":{"r":2.0,"R":1.0}},"n":10}"#;
        let s: ScenarioSpec = serde_json::from_str(ell).unwrap();
        assert_eq!(s.slope, Slope::Ellipsoid { r: 2.0, radius: 1.0 });
        assert_eq!(s.decay.eigenvalue(3), 1.0 / 9.0);
    }

    #[test]
    fn invalid_scenarios() {
        let base = ScenarioSpec::new(Decay::P1, Slope::Beta1, 100, 0);
        assert!(ScenarioSpec { n: 5, ..base }.validate().is_err());
        assert!(ScenarioSpec { sigma2: 0.0, ..base }.validate().is_err());
        assert!(ScenarioSpec { truncation: 0, ..base }.validate().is_err());
        assert!(ScenarioSpec { beta2_exponent_sign: 0.5, ..base }.validate().is_err());
    }
}
