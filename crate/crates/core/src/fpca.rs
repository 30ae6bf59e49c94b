//! Empirical covariance operator and its eigendecomposition.
//!
//! On a grid with weight `w` the operator `f -> (1/n) sum_i <f, X_i> X_i`
//! acts on sampled values through the symmetric matrix `(w/n) X^T X`.
//! Its eigenvectors `v` give quadrature-orthonormal eigenfunctions
//! `v / sqrt(w)`. When `n < p` the same nonzero spectrum is obtained from
//! the `n x n` Gram matrix `(w/n) X X^T`, which is cheaper.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{FlrError, Result};
use crate::fda::{same_grid, Curve, FunctionalSample, Grid};

/// Eigenvalues below this fraction of the leading one are set to zero.
pub const RELATIVE_EIGEN_FLOOR: f64 = 1e-12;

/// Coordinates below this magnitude are skipped when fixing signs.
const SIGN_TOLERANCE: f64 = 1e-12;

/// Which symmetric eigenproblem to solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EigenRoute {
    /// Gram system when `n < p`, covariance system otherwise.
    Auto,
    Gram,
    Covariance,
}

/// Eigen-elements of the empirical covariance operator together with the
/// empirical cross-covariance `g = (1/n) sum_i Y_i X_i`.
#[derive(Debug, Clone)]
pub struct FpcaResult {
    grid: Arc<Grid>,
    eigenvalues: Vec<f64>,
    /// `p x k` matrix, one eigenfunction per column.
    basis: DMatrix<f64>,
    cross_covariance: Curve,
    sample_size: usize,
}

impl FpcaResult {
    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    /// Non-increasing, with trailing exact zeros past the numerical rank.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Number of strictly positive eigenvalues.
    pub fn rank(&self) -> usize {
        self.eigenvalues.iter().take_while(|&&l| l > 0.0).count()
    }

    pub fn sample_size(&self) -> usize {
        self.sample_size
    }

    pub fn cross_covariance(&self) -> &Curve {
        &self.cross_covariance
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    /// Eigenfunction `j`, 0-based.
    pub fn eigenfunction(&self, j: usize) -> Curve {
        let values = self.basis.column(j).iter().copied().collect();
        Curve::new(self.grid.clone(), values).expect("basis column matches grid")
    }

    pub fn eigenfunctions(&self) -> Vec<Curve> {
        (0..self.len()).map(|j| self.eigenfunction(j)).collect()
    }

    /// `n x m` matrix of scores `<X_i, psi_j>` for the first `m` eigenfunctions.
    pub fn scores(&self, s: &FunctionalSample, m: usize) -> Result<DMatrix<f64>> {
        if !same_grid(&self.grid, s.grid()) {
            return Err(FlrError::GridMismatch);
        }
        if m > self.len() {
            return Err(FlrError::Dimension {
                requested: m,
                available: self.len(),
            });
        }
        Ok((s.curves() * self.basis.columns(0, m)) * self.grid.weight())
    }
}

/// Fits the empirical covariance operator of a centred sample.
pub fn fit_fpca(s: &FunctionalSample) -> Result<FpcaResult> {
    fit_fpca_with(s, EigenRoute::Auto)
}

pub fn fit_fpca_with(s: &FunctionalSample, route: EigenRoute) -> Result<FpcaResult> {
    if !s.is_centred() {
        return Err(FlrError::Precondition(
            "FPCA requires a centred sample; call center_sample first".into(),
        ));
    }
    let x = s.curves();
    let n = s.n();
    let p = x.ncols();
    let w = s.grid().weight();
    let k = n.min(p);
    let use_gram = match route {
        EigenRoute::Auto => n < p,
        EigenRoute::Gram => true,
        EigenRoute::Covariance => false,
    };

    let (mut eigenvalues, mut basis) = if use_gram {
        gram_route(x, w, k)?
    } else {
        covariance_route(x, w, k)?
    };

    let lead = eigenvalues.first().copied().unwrap_or(0.0).max(0.0);
    for l in eigenvalues.iter_mut() {
        if *l < RELATIVE_EIGEN_FLOOR * lead || lead == 0.0 {
            *l = 0.0;
        }
    }
    canonicalize_signs(&mut basis);

    let g = (x.transpose() * s.responses()) / n as f64;
    let cross_covariance = Curve::new(s.grid().clone(), g.iter().copied().collect())?;

    Ok(FpcaResult {
        grid: s.grid().clone(),
        eigenvalues,
        basis,
        cross_covariance,
        sample_size: n,
    })
}

/// Eigenpairs sorted by decreasing eigenvalue.
fn sorted_eigen(m: DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(FlrError::Numeric("non-finite covariance entry".into()));
    }
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = eig.eigenvectors.select_columns(&order);
    Ok((values, vectors))
}

fn covariance_route(x: &DMatrix<f64>, w: f64, k: usize) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = x.nrows() as f64;
    let mut a = x.tr_mul(x) * (w / n);
    a.fill_upper_triangle_with_lower_triangle();
    let (mut values, vectors) = sorted_eigen(a)?;
    values.truncate(k);
    let basis = vectors.columns(0, k) / w.sqrt();
    Ok((values, basis))
}

fn gram_route(x: &DMatrix<f64>, w: f64, k: usize) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = x.nrows();
    let p = x.ncols();
    let mut g = (x * x.transpose()) * (w / n as f64);
    g.fill_upper_triangle_with_lower_triangle();
    let (mut values, vectors) = sorted_eigen(g)?;
    values.truncate(k);

    let lead = values.first().copied().unwrap_or(0.0).max(0.0);
    let mut basis = DMatrix::zeros(p, k);
    let mut filled = 0;
    for (j, &l) in values.iter().enumerate() {
        if lead == 0.0 || l < RELATIVE_EIGEN_FLOOR * lead {
            break;
        }
        let col = (x.transpose() * vectors.column(j)) / (n as f64 * l).sqrt();
        basis.set_column(j, &col);
        filled += 1;
    }
    complete_orthonormal(&mut basis, filled, w);
    Ok((values, basis))
}

/// Fills columns `filled..` with vectors orthonormal (in the weighted
/// inner product) to the existing columns, taken from coordinate axes.
fn complete_orthonormal(basis: &mut DMatrix<f64>, filled: usize, w: f64) {
    let p = basis.nrows();
    let k = basis.ncols();
    let mut next = filled;
    for axis in 0..p {
        if next == k {
            break;
        }
        let mut v = DVector::zeros(p);
        v[axis] = 1.0;
        // two Gram-Schmidt passes
        for _ in 0..2 {
            for j in 0..next {
                let c = w * basis.column(j).dot(&v);
                v -= basis.column(j) * c;
            }
        }
        let norm = (w * v.norm_squared()).sqrt();
        if norm > 0.5 / p as f64 {
            basis.set_column(next, &(v / norm));
            next += 1;
        }
    }
}

fn canonicalize_signs(basis: &mut DMatrix<f64>) {
    for mut col in basis.column_iter_mut() {
        if let Some(first) = col.iter().find(|v| v.abs() > SIGN_TOLERANCE) {
            if *first < 0.0 {
                col.neg_mut();
            }
        }
    }
}

/// Coefficients `(<f, psi_1>, ..., <f, psi_m>)`.
pub fn project_coefficients(r: &FpcaResult, f: &Curve, m: usize) -> Result<Vec<f64>> {
    if m == 0 || m > r.len() {
        return Err(FlrError::Dimension {
            requested: m,
            available: r.len(),
        });
    }
    if !same_grid(r.grid(), f.grid()) {
        return Err(FlrError::GridMismatch);
    }
    let v = DVector::from_column_slice(f.values());
    let c = r.basis.columns(0, m).tr_mul(&v) * r.grid.weight();
    Ok(c.iter().copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fda::inner_product;
    use crate::simulator::{Decay, ProcessSpec, KlProcess, stream_rng};
    use proptest::prelude::*;

    fn grid(p: usize) -> Arc<Grid> {
        Arc::new(Grid::equispaced(p).unwrap())
    }

    fn two_constants() -> FunctionalSample {
        let g = grid(2);
        FunctionalSample::from_curves(
            &[Curve::constant(g.clone(), 1.0), Curve::constant(g, -1.0)],
            vec![2.0, -2.0],
        )
        .unwrap()
        .assume_centred()
    }

    fn random_sample(n: usize, p: usize, seed: u64) -> FunctionalSample {
        use rand::Rng;
        let mut rng = stream_rng(seed, 0);
        let vals: Vec<f64> = (0..n * p).map(|_| rng.random_range(-1.0..1.0)).collect();
        let ys: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let s = FunctionalSample::new(grid(p), DMatrix::from_row_slice(n, p, &vals), ys).unwrap();
        crate::fda::center_sample(&s).unwrap()
    }

    fn check_invariants(s: &FunctionalSample, r: &FpcaResult) {
        let l = r.eigenvalues();
        assert_eq!(l.len(), s.n().min(s.grid().len()));
        assert!(l.windows(2).all(|w| w[0] >= w[1]));
        assert!(l.iter().all(|&v| v >= 0.0));
        let psi = r.eigenfunctions();
        for j in 0..psi.len() {
            for k in 0..psi.len() {
                let ip = inner_product(&psi[j], &psi[k]).unwrap();
                let target = if j == k { 1.0 } else { 0.0 };
                assert!((ip - target).abs() < 1e-8, "<psi_{j}, psi_{k}> = {ip}");
            }
        }
        let trace: f64 = l.iter().sum();
        let energy: f64 =
            (0..s.n()).map(|i| s.curve(i).norm_sq()).sum::<f64>() / s.n() as f64;
        assert!((trace - energy).abs() <= 1e-8 * energy.max(1e-300));
        // operator applied to each eigenfunction
        for (j, p) in psi.iter().enumerate() {
            let c = s.project(p).unwrap();
            let applied = (s.curves().transpose() * c) / s.n() as f64;
            for (a, b) in applied.iter().zip(p.values()) {
                assert!((a - l[j] * b).abs() < 1e-8, "eigen relation {j}");
            }
        }
    }

    #[test]
    fn two_constant_curves() {
        let s = two_constants();
        let r = fit_fpca(&s).unwrap();
        assert!((r.eigenvalues()[0] - 1.0).abs() < 1e-12);
        assert_eq!(r.eigenvalues()[1], 0.0);
        for v in r.eigenfunction(0).values() {
            assert!((v - 1.0).abs() < 1e-12);
        }
        for v in r.cross_covariance().values() {
            assert!((v - 2.0).abs() < 1e-12);
        }
        assert_eq!(r.rank(), 1);
    }

    #[test]
    fn zero_curves_give_zero_operator() {
        let s = FunctionalSample::new(grid(5), DMatrix::zeros(4, 5), vec![1.0, -1.0, 0.5, -0.5])
            .unwrap()
            .assume_centred();
        for route in [EigenRoute::Gram, EigenRoute::Covariance] {
            let r = fit_fpca_with(&s, route).unwrap();
            assert!(r.eigenvalues().iter().all(|&l| l == 0.0));
            assert!(r.cross_covariance().values().iter().all(|&v| v == 0.0));
            assert_eq!(r.rank(), 0);
        }
    }

    #[test]
    fn raw_sample_is_rejected() {
        let s = FunctionalSample::new(grid(3), DMatrix::zeros(2, 3), vec![0.0, 0.0]).unwrap();
        assert!(matches!(fit_fpca(&s), Err(FlrError::Precondition(_))));
    }

    #[test]
    fn invariants_both_routes() {
        for (n, p) in [(8, 20), (30, 12), (15, 15)] {
            let s = random_sample(n, p, n as u64 * 31 + p as u64);
            for route in [EigenRoute::Auto, EigenRoute::Gram, EigenRoute::Covariance] {
                let r = fit_fpca_with(&s, route).unwrap();
                check_invariants(&s, &r);
            }
        }
    }

    #[test]
    fn gram_and_covariance_routes_agree() {
        for (n, p) in [(6, 30), (40, 10), (12, 12)] {
            let s = random_sample(n, p, 7 + n as u64);
            let a = fit_fpca_with(&s, EigenRoute::Gram).unwrap();
            let b = fit_fpca_with(&s, EigenRoute::Covariance).unwrap();
            for (x, y) in a.eigenvalues().iter().zip(b.eigenvalues()) {
                assert!((x - y).abs() < 1e-8, "{x} vs {y}");
            }
        }
    }

    #[test]
    fn scale_equivariance() {
        let s = random_sample(10, 25, 3);
        let c = 3.5;
        let scaled = FunctionalSample::new(
            s.grid().clone(),
            s.curves() * c,
            s.responses().iter().copied().collect(),
        )
        .unwrap()
        .assume_centred();
        let a = fit_fpca(&s).unwrap();
        let b = fit_fpca(&scaled).unwrap();
        for j in 0..a.rank() {
            assert!((b.eigenvalues()[j] - c * c * a.eigenvalues()[j]).abs() < 1e-8);
            let pa = a.eigenfunction(j);
            let pb = b.eigenfunction(j);
            let d = pa.sub(&pb).unwrap().norm_sq().min(pa.add_scaled(1.0, &pb).unwrap().norm_sq());
            assert!(d < 1e-8, "eigenfunction {j} moved by {d}");
        }
    }

    #[test]
    fn response_scaling_scales_cross_covariance() {
        let s = random_sample(9, 7, 11);
        let c = -2.0;
        let scaled = FunctionalSample::new(
            s.grid().clone(),
            s.curves().clone(),
            s.responses().iter().map(|y| c * y).collect(),
        )
        .unwrap()
        .assume_centred();
        let a = fit_fpca(&s).unwrap();
        let b = fit_fpca(&scaled).unwrap();
        for (x, y) in a.cross_covariance().values().iter().zip(b.cross_covariance().values()) {
            assert_eq!(c * x, *y);
        }
    }

    #[test]
    fn deterministic_and_sign_canonical() {
        let s = random_sample(12, 9, 5);
        let a = fit_fpca(&s).unwrap();
        let b = fit_fpca(&s).unwrap();
        assert_eq!(a.basis(), b.basis());
        for col in a.basis().column_iter() {
            let first = col.iter().find(|v| v.abs() > 1e-12).unwrap();
            assert!(*first > 0.0);
        }
    }

    #[test]
    fn projection_examples() {
        let s = random_sample(10, 6, 2);
        let r = fit_fpca(&s).unwrap();
        let p1 = r.eigenfunction(0);
        let p2 = r.eigenfunction(1);
        let c = project_coefficients(&r, &p1, 1).unwrap();
        assert!((c[0] - 1.0).abs() < 1e-8);
        let c = project_coefficients(&r, &p2, 1).unwrap();
        assert!(c[0].abs() < 1e-8);
        let f = p1.scale(2.0).add_scaled(3.0, &p2).unwrap();
        let c = project_coefficients(&r, &f, 2).unwrap();
        assert!((c[0] - 2.0).abs() < 1e-8 && (c[1] - 3.0).abs() < 1e-8);
        assert!(matches!(
            project_coefficients(&r, &f, 0),
            Err(FlrError::Dimension { .. })
        ));
        assert!(matches!(
            project_coefficients(&r, &f, 7),
            Err(FlrError::Dimension { .. })
        ));
    }

    #[test]
    fn leading_eigenvalue_of_kl_draws() {
        // Over 100 seeds with n = 50 the leading empirical eigenvalue of a
        // process with lambda_j = j^-2 stays within a factor 2 of 1.
        let spec = ProcessSpec { decay: Decay::P1, truncation: 150, grid_size: 100 };
        let process = KlProcess::new(&spec).unwrap();
        let mut extremes = (f64::INFINITY, 0.0f64);
        for seed in 0..100 {
            let mut rng = stream_rng(seed, 0);
            let curves: Vec<Curve> = (0..50).map(|_| process.draw(&mut rng)).collect();
            let s = FunctionalSample::from_curves(&curves, vec![0.0; 50])
                .unwrap()
                .assume_centred();
            let l1 = fit_fpca(&s).unwrap().eigenvalues()[0];
            extremes = (extremes.0.min(l1), extremes.1.max(l1));
        }
        assert!(extremes.0 > 0.5 && extremes.1 < 2.0, "{extremes:?}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn random_samples_satisfy_invariants(n in 2usize..14, p in 2usize..14, seed in 0u64..1000) {
            let s = random_sample(n, p, seed);
            let r = fit_fpca(&s).unwrap();
            check_invariants(&s, &r);
        }
    }
}
