//! Risk functionals, oracle diagnostics and Monte Carlo aggregation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{FlrError, Result};
use crate::estimator::{argmin_first, BetaPath, Method};
use crate::fda::{inner_product, Curve, FunctionalSample};
use crate::fpca::FpcaResult;

/// Normal quantile used for the 95% intervals.
pub const Z_95: f64 = 1.96;

/// Prediction-error norm `sum_j lambda_j <f, psi_j>^2` over a known
/// (truncated) eigensystem.
pub fn gamma_norm_sq(f: &Curve, eigenvalues: &[f64], eigenfunctions: &[Curve]) -> Result<f64> {
    if eigenvalues.len() != eigenfunctions.len() {
        return Err(FlrError::Precondition(format!(
            "{} eigenvalues for {} eigenfunctions",
            eigenvalues.len(),
            eigenfunctions.len()
        )));
    }
    let mut total = 0.0;
    for (l, psi) in eigenvalues.iter().zip(eigenfunctions) {
        let c = inner_product(f, psi)?;
        total += l * c * c;
    }
    Ok(total)
}

/// Empirical semi-norm `(1/n) sum_i <f, X_i>^2`.
pub fn empirical_norm_sq(f: &Curve, s: &FunctionalSample) -> Result<f64> {
    let c = s.project(f)?;
    Ok(c.norm_squared() / s.n() as f64)
}

/// Per-replicate risk of one selection rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    pub prediction_error: f64,
    pub empirical_error: f64,
    pub l2_error: f64,
    pub selected_m: usize,
    pub oracle_m: usize,
    pub oracle_risk: f64,
}

/// The dimension in `1..=max_dim` whose estimator has the smallest
/// prediction error against the true slope, with that error.
pub fn oracle_dimension(
    r: &FpcaResult,
    true_beta: &Curve,
    eigenvalues: &[f64],
    eigenfunctions: &[Curve],
    max_dim: usize,
) -> Result<(usize, f64)> {
    let risks = risk_path(r, true_beta, eigenvalues, eigenfunctions, max_dim)?;
    let best = argmin_first(risks.iter().copied())
        .ok_or_else(|| FlrError::Precondition("oracle needs max_dim >= 1".into()))?;
    Ok((best + 1, risks[best]))
}

/// `||beta_m - beta||_Gamma^2` for `m = 1..=max_dim`.
pub fn risk_path(
    r: &FpcaResult,
    true_beta: &Curve,
    eigenvalues: &[f64],
    eigenfunctions: &[Curve],
    max_dim: usize,
) -> Result<Vec<f64>> {
    let mut path = BetaPath::new(r);
    let mut out = Vec::with_capacity(max_dim);
    for _ in 0..max_dim {
        path.advance()?;
        let diff = path.curve().sub(true_beta)?;
        out.push(gamma_norm_sq(&diff, eigenvalues, eigenfunctions)?);
    }
    Ok(out)
}

/// Risk report for an estimate, with the oracle precomputed by the caller.
pub fn risk_report(
    estimate: &Curve,
    selected_m: usize,
    true_beta: &Curve,
    sample: &FunctionalSample,
    eigenvalues: &[f64],
    eigenfunctions: &[Curve],
    oracle: (usize, f64),
) -> Result<RiskReport> {
    let diff = estimate.sub(true_beta)?;
    Ok(RiskReport {
        prediction_error: gamma_norm_sq(&diff, eigenvalues, eigenfunctions)?,
        empirical_error: empirical_norm_sq(&diff, sample)?,
        l2_error: diff.norm_sq(),
        selected_m,
        oracle_m: oracle.0,
        oracle_risk: oracle.1,
    })
}

/// Labels of a simulation cell.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellLabel {
    pub decay: String,
    pub slope: String,
    pub n: usize,
}

/// One method's outcome on one replicate of one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub cell: usize,
    pub replicate: usize,
    pub method: Method,
    pub report: RiskReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub cell: usize,
    pub decay: String,
    pub slope: String,
    pub n: usize,
    pub method: Method,
    pub mean_risk: f64,
    pub ci_halfwidth: f64,
    pub replicate_count: usize,
    pub mean_selected_m: f64,
    pub agreement_rate_kv_uv: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloSummary {
    pub rows: Vec<SummaryRow>,
    /// (cell, method) groups left out for having fewer than two replicates.
    pub omitted_groups: usize,
}

impl MonteCarloSummary {
    pub fn row(&self, cell: usize, method: Method) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.cell == cell && r.method == method)
    }
}

/// Mean and normal-approximation half-width `1.96 sd / sqrt(R)`.
pub fn mean_and_halfwidth(values: &[f64]) -> Option<(f64, f64)> {
    let r = values.len();
    if r < 2 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / r as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (r - 1) as f64;
    Some((mean, Z_95 * var.sqrt() / (r as f64).sqrt()))
}

/// Fraction of pairs with equal entries.
pub fn agreement_rate(pairs: &[(usize, usize)]) -> Option<f64> {
    if pairs.is_empty() {
        return None;
    }
    let same = pairs.iter().filter(|(a, b)| a == b).count();
    Some(same as f64 / pairs.len() as f64)
}

/// Groups records by (cell, method) and summarizes each group. Within a
/// group records are ordered by replicate index, so the result does not
/// depend on input order.
pub fn aggregate(records: &[ReplicateRecord], cells: &[CellLabel]) -> Result<MonteCarloSummary> {
    let mut groups: BTreeMap<(usize, Method), Vec<&ReplicateRecord>> = BTreeMap::new();
    for rec in records {
        if rec.cell >= cells.len() {
            return Err(FlrError::Precondition(format!(
                "record refers to unknown cell {}",
                rec.cell
            )));
        }
        groups.entry((rec.cell, rec.method)).or_default().push(rec);
    }
    for g in groups.values_mut() {
        g.sort_by_key(|r| r.replicate);
    }

    let mut agreement: BTreeMap<usize, f64> = BTreeMap::new();
    for (cell, _) in cells.iter().enumerate() {
        let (Some(kv), Some(uv)) = (groups.get(&(cell, Method::Kv)), groups.get(&(cell, Method::Uv)))
        else {
            continue;
        };
        let uv_by_rep: BTreeMap<usize, usize> =
            uv.iter().map(|r| (r.replicate, r.report.selected_m)).collect();
        let pairs: Vec<(usize, usize)> = kv
            .iter()
            .filter_map(|r| uv_by_rep.get(&r.replicate).map(|&m| (r.report.selected_m, m)))
            .collect();
        if let Some(rate) = agreement_rate(&pairs) {
            agreement.insert(cell, rate);
        }
    }

    let mut rows = Vec::new();
    let mut omitted = 0;
    for ((cell, method), recs) in &groups {
        let risks: Vec<f64> = recs.iter().map(|r| r.report.prediction_error).collect();
        let Some((mean, half)) = mean_and_halfwidth(&risks) else {
            log::warn!("cell {cell} method {method}: fewer than 2 replicates, omitted");
            omitted += 1;
            continue;
        };
        let label = &cells[*cell];
        let mean_m = recs.iter().map(|r| r.report.selected_m as f64).sum::<f64>() / recs.len() as f64;
        rows.push(SummaryRow {
            cell: *cell,
            decay: label.decay.clone(),
            slope: label.slope.clone(),
            n: label.n,
            method: *method,
            mean_risk: mean,
            ci_halfwidth: half,
            replicate_count: recs.len(),
            mean_selected_m: mean_m,
            agreement_rate_kv_uv: agreement.get(cell).copied(),
        });
    }
    Ok(MonteCarloSummary {
        rows,
        omitted_groups: omitted,
    })
}

/// Least-squares line through `(ln n, ln risk)`; returns `(slope, intercept)`.
pub fn rate_fit(points: &[(f64, f64)]) -> Result<(f64, f64)> {
    if points.len() < 3 {
        return Err(FlrError::Precondition(format!(
            "rate fit needs at least 3 points, got {}",
            points.len()
        )));
    }
    if let Some((n, r)) = points.iter().find(|(n, r)| !(*n > 0.0 && *r > 0.0)) {
        return Err(FlrError::Precondition(format!(
            "rate fit needs positive sizes and risks, got ({n}, {r})"
        )));
    }
    let xs: Vec<f64> = points.iter().map(|(n, _)| n.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|(_, r)| r.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(FlrError::Precondition("rate fit needs at least two distinct sizes".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}
