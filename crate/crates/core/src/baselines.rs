//! Cross-validation baselines for choosing the projection dimension.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FlrError, Result};
use crate::estimator::{argmin_first, contrast_path, BetaPath, Method};
use crate::fda::{center_sample, dot, Centering, FunctionalSample};
use crate::fpca::fit_fpca;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineRow {
    pub m: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineTable {
    pub method: Method,
    pub rows: Vec<BaselineRow>,
    pub selected_m: usize,
    /// CV folds dropped because their operator vanished.
    pub skipped_folds: usize,
}

fn finish(method: Method, rows: Vec<BaselineRow>, skipped_folds: usize) -> Result<BaselineTable> {
    let best = argmin_first(rows.iter().map(|r| r.score))
        .ok_or_else(|| FlrError::Numeric(format!("{method}: no admissible dimension")))?;
    Ok(BaselineTable {
        method,
        selected_m: rows[best].m,
        rows,
        skipped_folds,
    })
}

/// `GCV(m) = RSS(m) / (1 - m/n)^2`.
///
/// The hat matrix of the dimension-`m` fit projects onto the span of the
/// first `m` score vectors, so its trace is `m`. Dimensions with `m >= n`
/// have no valid denominator and are left out.
pub fn gcv_select(
    s: &FunctionalSample,
    r: &crate::fpca::FpcaResult,
    max_m: usize,
) -> Result<BaselineTable> {
    let rank = r.rank();
    if max_m == 0 || max_m > rank {
        return Err(FlrError::Dimension {
            requested: max_m,
            available: rank,
        });
    }
    let n = s.n();
    let usable = max_m.min(n.saturating_sub(1));
    let contrasts = contrast_path(s, r, usable)?;
    let rows = contrasts
        .iter()
        .enumerate()
        .map(|(i, &gamma)| {
            let m = i + 1;
            let rss = gamma * n as f64;
            let d = 1.0 - m as f64 / n as f64;
            BaselineRow {
                m,
                score: rss / (d * d),
            }
        })
        .collect();
    finish(Method::Gcv, rows, 0)
}

/// Squared leave-one-out errors for `m = 1..=max_m` with observation `i`
/// held out, or `None` when the fold's operator is zero.
fn fold_errors(s: &FunctionalSample, i: usize, max_m: usize, recenter: bool) -> Result<Option<Vec<f64>>> {
    let n = s.n();
    let rows: Vec<usize> = (0..n).filter(|&k| k != i).collect();
    let mut fold = s.select(&rows)?;
    let mut x_out: Vec<f64> = s.curves().row(i).iter().copied().collect();
    let mut y_offset = 0.0;
    if recenter {
        let (x_mean, y_mean) = fold.means();
        fold = center_sample(&fold)?;
        for (v, m) in x_out.iter_mut().zip(&x_mean) {
            *v -= m;
        }
        y_offset = y_mean;
    }
    let fit = fit_fpca(&fold)?;
    let rank = fit.rank();
    if rank == 0 {
        return Ok(None);
    }
    let y = s.responses()[i];
    let w = s.grid().weight();
    let mut errors = Vec::with_capacity(max_m);
    let mut pred = y_offset;
    for m in 1..=max_m {
        if m <= rank {
            let j = m - 1;
            let psi: Vec<f64> = fit.basis().column(j).iter().copied().collect();
            pred += BetaPath::coefficient(&fit, j) * w * dot(&psi, &x_out);
        }
        errors.push((y - pred).powi(2));
    }
    Ok(Some(errors))
}

/// Leave-one-out CV, `CV(m) = (1/n) sum_i (Y_i - Yhat_i^(-i))^2`.
///
/// Every fold is refitted from scratch. Samples whose mean is only known
/// empirically (or not at all) are re-centred inside each fold; samples
/// from a mean-zero process are not. Within a fold, `m` is capped at the
/// fold's rank. Folds whose operator vanishes are skipped and counted.
pub fn cv_select(s: &FunctionalSample, max_m: usize) -> Result<BaselineTable> {
    if max_m == 0 {
        return Err(FlrError::Precondition("cv_select needs max_m >= 1".into()));
    }
    let recenter = s.centering() != Centering::Population;
    let min_n = if recenter { 3 } else { 2 };
    if s.n() < min_n {
        return Err(FlrError::InsufficientData(format!(
            "leave-one-out CV needs at least {min_n} observations, got {}",
            s.n()
        )));
    }
    let folds: Vec<Option<Vec<f64>>> = (0..s.n())
        .into_par_iter()
        .map(|i| fold_errors(s, i, max_m, recenter))
        .collect::<Result<_>>()?;

    let mut sums = vec![0.0; max_m];
    let mut used = 0usize;
    for errors in folds.iter().flatten() {
        for (acc, e) in sums.iter_mut().zip(errors) {
            *acc += e;
        }
        used += 1;
    }
    let skipped = s.n() - used;
    if used == 0 {
        return Err(FlrError::Numeric("every CV fold has a zero covariance operator".into()));
    }
    if skipped > 0 {
        log::warn!("cv_select: skipped {skipped} degenerate folds");
    }
    let rows = sums
        .into_iter()
        .enumerate()
        .map(|(k, total)| BaselineRow {
            m: k + 1,
            score: total / used as f64,
        })
        .collect();
    finish(Method::Cv, rows, skipped)
}
