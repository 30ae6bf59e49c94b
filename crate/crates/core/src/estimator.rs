//! Projection estimator on the leading empirical eigenfunctions and the
//! penalized choice of its dimension.
//!
//! For a dimension `m` the estimator is
//! `beta_m = sum_{j<=m} <g, psi_j> / lambda_j * psi_j`, the least-squares
//! fit over `span(psi_1..psi_m)`. The dimension is picked among
//! `1..=N_n`, where `N_n` is the largest index below a sample-size cap whose
//! eigenvalue clears `s_n = (2/n^2)(1 - 1/ln^2 n)`, by minimizing either
//!
//! * known variance: `gamma_n(beta_m) + (1 + theta) sigma^2 m / n`, or
//! * unknown variance: `gamma_n(beta_m) (1 + theta (1 + delta) m / n)`.

use serde::{Deserialize, Serialize};

use crate::error::{FlrError, Result};
use crate::fda::{dot, same_grid, Curve, FunctionalSample};
use crate::fpca::FpcaResult;

pub const DEFAULT_THETA_KNOWN: f64 = 1.0;
pub const DEFAULT_THETA_UNKNOWN: f64 = 4.5;
pub const DEFAULT_DELTA: f64 = 0.05;

/// Dimension-selection rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Penalized contrast, known noise variance.
    Kv,
    /// Penalized contrast, estimated noise variance.
    Uv,
    /// Generalized cross-validation.
    Gcv,
    /// Leave-one-out cross-validation.
    Cv,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Kv, Method::Uv, Method::Gcv, Method::Cv];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Kv => "kv",
            Method::Uv => "uv",
            Method::Gcv => "gcv",
            Method::Cv => "cv",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "kv" => Ok(Method::Kv),
            "uv" => Ok(Method::Uv),
            "gcv" => Ok(Method::Gcv),
            "cv" => Ok(Method::Cv),
            other => Err(FlrError::Config(format!("unknown method {other:?}"))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceMode {
    Known { sigma2: f64 },
    Unknown,
}

/// Constants of the penalized criterion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    mode: VarianceMode,
    theta: f64,
    /// Only used in unknown-variance mode.
    delta: f64,
    max_dim_cap: Option<usize>,
}

impl SelectionConfig {
    pub fn known(sigma2: f64) -> Result<Self> {
        Self::known_with(sigma2, DEFAULT_THETA_KNOWN)
    }

    pub fn known_with(sigma2: f64, theta: f64) -> Result<Self> {
        if !(sigma2.is_finite() && sigma2 > 0.0) {
            return Err(FlrError::Config(format!("sigma2 must be positive, got {sigma2}")));
        }
        if !(theta.is_finite() && theta > 0.0) {
            return Err(FlrError::Config(format!("theta must be positive, got {theta}")));
        }
        Ok(Self {
            mode: VarianceMode::Known { sigma2 },
            theta,
            delta: 0.0,
            max_dim_cap: None,
        })
    }

    pub fn unknown() -> Self {
        Self::unknown_with(DEFAULT_THETA_UNKNOWN, DEFAULT_DELTA).expect("defaults are valid")
    }

    pub fn unknown_with(theta: f64, delta: f64) -> Result<Self> {
        if !(theta.is_finite() && theta > 4.0) {
            return Err(FlrError::Config(format!(
                "unknown-variance selection needs theta > 4, got {theta}"
            )));
        }
        if !(delta.is_finite() && delta > 0.0) {
            return Err(FlrError::Config(format!("delta must be positive, got {delta}")));
        }
        Ok(Self {
            mode: VarianceMode::Unknown,
            theta,
            delta,
            max_dim_cap: None,
        })
    }

    pub fn with_max_dim_cap(mut self, cap: Option<usize>) -> Result<Self> {
        if cap == Some(0) {
            return Err(FlrError::Config("max_dim_cap must be at least 1".into()));
        }
        self.max_dim_cap = cap;
        Ok(self)
    }

    pub fn mode(&self) -> VarianceMode {
        self.mode
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn max_dim_cap(&self) -> Option<usize> {
        self.max_dim_cap
    }

    pub fn method(&self) -> Method {
        match self.mode {
            VarianceMode::Known { .. } => Method::Kv,
            VarianceMode::Unknown => Method::Uv,
        }
    }

    /// Re-checks the mode-dependent constraints, e.g. after deserialization.
    pub fn validate(&self) -> Result<()> {
        let checked = match self.mode {
            VarianceMode::Known { sigma2 } => Self::known_with(sigma2, self.theta)?,
            VarianceMode::Unknown => Self::unknown_with(self.theta, self.delta)?,
        };
        checked.with_max_dim_cap(self.max_dim_cap).map(|_| ())
    }
}

/// One line of the criterion table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriterionRow {
    pub m: usize,
    /// `gamma_n(beta_m)`, which is also the variance estimate `sigma_m^2`.
    pub contrast: f64,
    pub penalty: f64,
    pub criterion: f64,
}

impl CriterionRow {
    pub fn sigma2_hat(&self) -> f64 {
        self.contrast
    }
}

#[derive(Debug, Clone)]
pub struct SelectionResult {
    pub selected_m: usize,
    pub beta_hat: Curve,
    pub max_dim: usize,
    pub table: Vec<CriterionRow>,
    pub method: Method,
}

/// Least-squares contrast `(1/n) sum_i (Y_i - <t, X_i>)^2`.
pub fn contrast(s: &FunctionalSample, t: &Curve) -> Result<f64> {
    let fitted = s.project(t)?;
    let rss: f64 = s
        .responses()
        .iter()
        .zip(fitted.iter())
        .map(|(y, f)| (y - f).powi(2))
        .sum();
    Ok(rss / s.n() as f64)
}

/// Eigenvalue threshold `s_n = (2/n^2)(1 - 1/ln^2 n)`.
pub fn eigen_threshold(n: usize) -> f64 {
    let nf = n as f64;
    let l = nf.ln();
    2.0 / (nf * nf) * (1.0 - 1.0 / (l * l))
}

/// Sample-size cap on the dimension before looking at eigenvalues.
pub fn dimension_cap(cfg: &SelectionConfig, n: usize) -> Result<usize> {
    if n < 6 {
        return Err(FlrError::SampleTooSmall(n));
    }
    let nf = n as f64;
    let mut cap = (20.0 * (nf / nf.ln().powi(3)).sqrt()).floor() as usize;
    if cfg.mode == VarianceMode::Unknown {
        let alt = (nf / (cfg.theta * (1.0 + 2.0 * cfg.delta))).floor() as usize;
        cap = cap.min(alt);
    }
    if let Some(c) = cfg.max_dim_cap {
        cap = cap.min(c);
    }
    Ok(cap)
}

/// Largest admissible dimension `N_n`.
pub fn max_dimension(r: &FpcaResult, cfg: &SelectionConfig, n: usize) -> Result<usize> {
    let cap = dimension_cap(cfg, n)?;
    let threshold = eigen_threshold(n);
    let lambda1 = r.eigenvalues().first().copied().unwrap_or(0.0);
    if lambda1 < threshold {
        return Err(FlrError::Degenerate { lambda1, threshold });
    }
    if cap == 0 {
        return Err(FlrError::Precondition(format!(
            "no admissible dimension: n = {n} is too small for theta = {} and delta = {}",
            cfg.theta, cfg.delta
        )));
    }
    let above = r.eigenvalues().iter().take_while(|&&l| l >= threshold).count();
    Ok(cap.min(above))
}

/// Known-variance `(1 + theta) sigma^2 m / n` or
/// unknown-variance `theta (1 + delta) sigma_m^2 m / n`.
pub fn penalty(cfg: &SelectionConfig, m: usize, n: usize, sigma2_m: Option<f64>) -> Result<f64> {
    if m == 0 || n == 0 {
        return Err(FlrError::Precondition(format!(
            "penalty needs m >= 1 and n >= 1, got m = {m}, n = {n}"
        )));
    }
    let ratio = m as f64 / n as f64;
    match cfg.mode {
        VarianceMode::Known { sigma2 } => Ok((1.0 + cfg.theta) * sigma2 * ratio),
        VarianceMode::Unknown => {
            let s2 = sigma2_m.ok_or_else(|| {
                FlrError::Precondition("unknown-variance penalty needs sigma2_m".into())
            })?;
            Ok(cfg.theta * (1.0 + cfg.delta) * s2 * ratio)
        }
    }
}

/// Criterion value for dimension `m` with contrast `gamma`.
///
/// The unknown-variance form uses the product `gamma (1 + theta (1 + delta) m / n)`.
pub fn criterion_value(cfg: &SelectionConfig, m: usize, n: usize, gamma: f64) -> Result<f64> {
    match cfg.mode {
        VarianceMode::Known { .. } => Ok(gamma + penalty(cfg, m, n, None)?),
        VarianceMode::Unknown => {
            Ok(gamma * (1.0 + cfg.theta * (1.0 + cfg.delta) * m as f64 / n as f64))
        }
    }
}

/// Walks `beta_1, beta_2, ...` by adding one eigen-direction at a time.
/// [`beta_hat`] uses the same accumulation, so both give identical bits.
pub(crate) struct BetaPath<'a> {
    r: &'a FpcaResult,
    m: usize,
    values: Vec<f64>,
}

impl<'a> BetaPath<'a> {
    pub(crate) fn new(r: &'a FpcaResult) -> Self {
        Self {
            r,
            m: 0,
            values: vec![0.0; r.grid().len()],
        }
    }

    /// Coefficient `<g, psi_j> / lambda_j` of direction `j` (0-based).
    pub(crate) fn coefficient(r: &FpcaResult, j: usize) -> f64 {
        let psi = r.basis().column(j);
        let g = r.cross_covariance().values();
        let w = r.grid().weight();
        let num = w * psi.iter().zip(g).map(|(a, b)| a * b).sum::<f64>();
        num / r.eigenvalues()[j]
    }

    pub(crate) fn advance(&mut self) -> Result<&[f64]> {
        let j = self.m;
        if j >= self.r.len() {
            return Err(FlrError::Dimension {
                requested: j + 1,
                available: self.r.len(),
            });
        }
        if self.r.eigenvalues()[j] <= 0.0 {
            return Err(FlrError::Rank {
                requested: j + 1,
                first_zero: self.r.rank() + 1,
            });
        }
        let b = Self::coefficient(self.r, j);
        for (v, p) in self.values.iter_mut().zip(self.r.basis().column(j).iter()) {
            *v += b * p;
        }
        self.m += 1;
        Ok(&self.values)
    }

    pub(crate) fn curve(&self) -> Curve {
        Curve::new(self.r.grid().clone(), self.values.clone()).expect("finite estimator")
    }
}

/// The projection estimator of dimension `m`.
pub fn beta_hat(r: &FpcaResult, m: usize) -> Result<Curve> {
    if m == 0 {
        return Err(FlrError::Dimension {
            requested: 0,
            available: r.len(),
        });
    }
    if m > r.len() {
        return Err(FlrError::Dimension {
            requested: m,
            available: r.len(),
        });
    }
    if r.eigenvalues()[m - 1] <= 0.0 {
        return Err(FlrError::Rank {
            requested: m,
            first_zero: r.rank() + 1,
        });
    }
    let mut path = BetaPath::new(r);
    for _ in 0..m {
        path.advance()?;
    }
    Ok(path.curve())
}

/// Contrasts `gamma_n(beta_m)` for `m = 1..=max_m`.
pub fn contrast_path(s: &FunctionalSample, r: &FpcaResult, max_m: usize) -> Result<Vec<f64>> {
    if !same_grid(s.grid(), r.grid()) {
        return Err(FlrError::GridMismatch);
    }
    let mut path = BetaPath::new(r);
    let mut out = Vec::with_capacity(max_m);
    for _ in 0..max_m {
        let beta = path.advance()?;
        out.push(contrast_values(s, beta));
    }
    Ok(out)
}

fn contrast_values(s: &FunctionalSample, beta: &[f64]) -> f64 {
    let w = s.grid().weight();
    let x = s.curves();
    let mut rss = 0.0;
    for i in 0..s.n() {
        let row: Vec<f64> = x.row(i).iter().copied().collect();
        let fit = w * dot(&row, beta);
        rss += (s.responses()[i] - fit).powi(2);
    }
    rss / s.n() as f64
}

/// Evaluates the penalized criterion on `1..=N_n` and returns its minimizer
/// (smallest `m` on ties).
pub fn select_dimension(
    s: &FunctionalSample,
    r: &FpcaResult,
    cfg: &SelectionConfig,
) -> Result<SelectionResult> {
    let n = s.n();
    // cannot bind while the threshold is active; guards a zero eigenvalue anyway
    let max_dim = max_dimension(r, cfg, n)?.min(r.rank());
    let contrasts = contrast_path(s, r, max_dim)?;
    let mut table = Vec::with_capacity(max_dim);
    for (i, &gamma) in contrasts.iter().enumerate() {
        let m = i + 1;
        table.push(CriterionRow {
            m,
            contrast: gamma,
            penalty: penalty(cfg, m, n, Some(gamma))?,
            criterion: criterion_value(cfg, m, n, gamma)?,
        });
    }
    let selected_m = argmin_first(table.iter().map(|row| row.criterion))
        .map(|i| i + 1)
        .ok_or_else(|| FlrError::Numeric("empty criterion table".into()))?;
    Ok(SelectionResult {
        selected_m,
        beta_hat: beta_hat(r, selected_m)?,
        max_dim,
        table,
        method: cfg.method(),
    })
}

/// Index of the first minimum; `None` for an empty input or all-NaN scores.
pub(crate) fn argmin_first(values: impl Iterator<Item = f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.enumerate() {
        if v.is_nan() {
            continue;
        }
        match best {
            Some((_, b)) if v >= b => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}
