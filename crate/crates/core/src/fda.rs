//! Discretised functional data.
//!
//! Every function lives on a [`Grid`] of sampling points in `[0, 1]` and
//! inner products are rectangle-rule sums with the uniform weight `1/p`.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{FlrError, Result};

/// Ordered sampling points on `[0, 1]` with a uniform quadrature weight.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    points: Vec<f64>,
    weight: f64,
}

impl Grid {
    /// Builds a grid from explicit abscissae; the weight is `1/p`.
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(FlrError::InvalidGrid(format!(
                "need at least 2 points, got {}",
                points.len()
            )));
        }
        for (k, &t) in points.iter().enumerate() {
            if !t.is_finite() || !(0.0..=1.0).contains(&t) {
                return Err(FlrError::InvalidGrid(format!(
                    "point {k} = {t} lies outside [0, 1]"
                )));
            }
        }
        if let Some(k) = points.windows(2).position(|w| w[1] <= w[0]) {
            return Err(FlrError::InvalidGrid(format!(
                "points not strictly increasing at index {}",
                k + 1
            )));
        }
        let weight = 1.0 / points.len() as f64;
        Ok(Self { points, weight })
    }

    /// The equispaced grid `t_k = (k - 1)/p`, `k = 1..p`.
    pub fn equispaced(p: usize) -> Result<Self> {
        Self::new((0..p).map(|k| k as f64 / p as f64).collect())
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// True when two grid handles may be combined in arithmetic.
pub fn same_grid(a: &Arc<Grid>, b: &Arc<Grid>) -> bool {
    Arc::ptr_eq(a, b) || **a == **b
}

/// A function sampled on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl Curve {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(FlrError::InvalidCurve(format!(
                "{} values for a grid of {} points",
                values.len(),
                grid.len()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(FlrError::InvalidCurve(format!(
                "non-finite value at index {k}"
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        let values = vec![0.0; grid.len()];
        Self { grid, values }
    }

    pub fn constant(grid: Arc<Grid>, c: f64) -> Self {
        let values = vec![c; grid.len()];
        Self { grid, values }
    }

    /// Samples `f` at every grid point.
    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.points().iter().map(|&t| f(t)).collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn norm_sq(&self) -> f64 {
        self.grid.weight * self.values.iter().map(|v| v * v).sum::<f64>()
    }

    pub fn scale(&self, c: f64) -> Curve {
        Curve {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| c * v).collect(),
        }
    }

    /// `self + c * other`.
    pub fn add_scaled(&self, c: f64, other: &Curve) -> Result<Curve> {
        if !same_grid(&self.grid, &other.grid) {
            return Err(FlrError::GridMismatch);
        }
        Ok(Curve {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + c * b)
                .collect(),
        })
    }

    pub fn sub(&self, other: &Curve) -> Result<Curve> {
        self.add_scaled(-1.0, other)
    }
}

/// Quadrature inner product `w * sum_k f(t_k) g(t_k)`.
pub fn inner_product(f: &Curve, g: &Curve) -> Result<f64> {
    if !same_grid(&f.grid, &g.grid) {
        return Err(FlrError::GridMismatch);
    }
    Ok(f.grid.weight * dot(&f.values, &g.values))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// How the sample mean of the predictors is known to vanish.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Centering {
    /// No centring applied; the mean is unknown.
    Raw,
    /// The generating process has mean zero (simulated data, hand fixtures).
    Population,
    /// Sample means have been subtracted.
    Empirical,
}

/// `n` curves on a shared grid with their scalar responses.
///
/// Curves are stored row-wise in an `n x p` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalSample {
    grid: Arc<Grid>,
    curves: DMatrix<f64>,
    responses: DVector<f64>,
    centering: Centering,
}

impl FunctionalSample {
    pub fn new(grid: Arc<Grid>, curves: DMatrix<f64>, responses: Vec<f64>) -> Result<Self> {
        let n = curves.nrows();
        if n == 0 {
            return Err(FlrError::InsufficientData("sample has no curves".into()));
        }
        if curves.ncols() != grid.len() {
            return Err(FlrError::InvalidCurve(format!(
                "curves have {} columns for a grid of {} points",
                curves.ncols(),
                grid.len()
            )));
        }
        if responses.len() != n {
            return Err(FlrError::InsufficientData(format!(
                "{n} curves but {} responses",
                responses.len()
            )));
        }
        if curves.iter().chain(responses.iter()).any(|v| !v.is_finite()) {
            return Err(FlrError::InvalidCurve("non-finite sample value".into()));
        }
        Ok(Self {
            grid,
            curves,
            responses: DVector::from_vec(responses),
            centering: Centering::Raw,
        })
    }

    /// Assembles a sample from individual curves, checking they share a grid.
    pub fn from_curves(curves: &[Curve], responses: Vec<f64>) -> Result<Self> {
        let first = curves
            .first()
            .ok_or_else(|| FlrError::InsufficientData("sample has no curves".into()))?;
        let grid = first.grid().clone();
        if curves.iter().any(|c| !same_grid(c.grid(), &grid)) {
            return Err(FlrError::GridMismatch);
        }
        let p = grid.len();
        let matrix = DMatrix::from_fn(curves.len(), p, |i, k| curves[i].values()[k]);
        Self::new(grid, matrix, responses)
    }

    /// Marks the sample as drawn from a mean-zero process.
    pub fn assume_centred(mut self) -> Self {
        self.centering = Centering::Population;
        self
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn n(&self) -> usize {
        self.curves.nrows()
    }

    pub fn curves(&self) -> &DMatrix<f64> {
        &self.curves
    }

    pub fn responses(&self) -> &DVector<f64> {
        &self.responses
    }

    pub fn centering(&self) -> Centering {
        self.centering
    }

    pub fn is_centred(&self) -> bool {
        self.centering != Centering::Raw
    }

    pub fn curve(&self, i: usize) -> Curve {
        Curve {
            grid: self.grid.clone(),
            values: self.curves.row(i).iter().copied().collect(),
        }
    }

    /// Quadrature inner products `<f, X_i>` for every curve.
    pub fn project(&self, f: &Curve) -> Result<DVector<f64>> {
        if !same_grid(&self.grid, f.grid()) {
            return Err(FlrError::GridMismatch);
        }
        let values = DVector::from_column_slice(f.values());
        Ok((&self.curves * values) * self.grid.weight())
    }

    /// Sub-sample made of the given observation indices, in order.
    pub fn select(&self, rows: &[usize]) -> Result<Self> {
        let curves = self.curves.select_rows(rows);
        let responses = rows.iter().map(|&i| self.responses[i]).collect();
        let mut out = Self::new(self.grid.clone(), curves, responses)?;
        out.centering = match self.centering {
            Centering::Empirical => Centering::Raw,
            other => other,
        };
        Ok(out)
    }

    /// Pointwise mean curve and mean response.
    pub fn means(&self) -> (Vec<f64>, f64) {
        let n = self.n() as f64;
        let curve_mean = self
            .curves
            .column_iter()
            .map(|col| col.sum() / n)
            .collect();
        (curve_mean, self.responses.sum() / n)
    }
}

/// Subtracts the pointwise curve mean and the response mean.
pub fn center_sample(s: &FunctionalSample) -> Result<FunctionalSample> {
    if s.n() < 2 {
        return Err(FlrError::InsufficientData(format!(
            "centring needs at least 2 observations, got {}",
            s.n()
        )));
    }
    if s.centering == Centering::Empirical {
        return Ok(s.clone());
    }
    let (curve_mean, y_mean) = s.means();
    let mut curves = s.curves.clone();
    for (k, mut col) in curves.column_iter_mut().enumerate() {
        col.add_scalar_mut(-curve_mean[k]);
    }
    let responses = s.responses.add_scalar(-y_mean);
    Ok(FunctionalSample {
        grid: s.grid.clone(),
        curves,
        responses,
        centering: Centering::Empirical,
    })
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| FlrError::io(path, e))
}

fn parse_cell(path: &Path, row: usize, column: usize, cell: &str) -> Result<f64> {
    let trimmed = cell.trim();
    let value: f64 = trimmed.parse().map_err(|_| FlrError::Parse {
        path: path.to_path_buf(),
        row,
        column,
        message: format!("cannot parse {trimmed:?} as a number"),
    })?;
    if !value.is_finite() {
        return Err(FlrError::Parse {
            path: path.to_path_buf(),
            row,
            column,
            message: format!("non-finite value {trimmed:?}"),
        });
    }
    Ok(value)
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty())
}

/// Reads a curve file (header row = grid, one curve per row) and a
/// one-column response file. Rows and columns in errors are 1-based.
pub fn load_sample_csv(curve_path: &Path, response_path: &Path) -> Result<FunctionalSample> {
    let text = read_text(curve_path)?;
    let text = text.strip_prefix('\u{feff}').unwrap_or(&text);
    let mut lines = data_lines(text);
    let (header_row, header) = lines.next().ok_or_else(|| FlrError::DataFile {
        path: curve_path.to_path_buf(),
        message: "empty curve file".into(),
    })?;
    let points = header
        .split(',')
        .enumerate()
        .map(|(c, cell)| parse_cell(curve_path, header_row, c + 1, cell))
        .collect::<Result<Vec<_>>>()?;
    let grid = Grid::new(points).map_err(|e| FlrError::DataFile {
        path: curve_path.to_path_buf(),
        message: format!("header row: {e}"),
    })?;
    let p = grid.len();

    let mut values = Vec::new();
    let mut n = 0;
    for (row, line) in lines {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != p {
            return Err(FlrError::Parse {
                path: curve_path.to_path_buf(),
                row,
                column: cells.len().min(p) + 1,
                message: format!("ragged row: {} cells, expected {p}", cells.len()),
            });
        }
        for (c, cell) in cells.iter().enumerate() {
            values.push(parse_cell(curve_path, row, c + 1, cell)?);
        }
        n += 1;
    }
    if n == 0 {
        return Err(FlrError::DataFile {
            path: curve_path.to_path_buf(),
            message: "no curve rows after the header".into(),
        });
    }

    let text = read_text(response_path)?;
    let text = text.strip_prefix('\u{feff}').unwrap_or(&text);
    let mut responses = Vec::with_capacity(n);
    for (row, line) in data_lines(text) {
        if line.contains(',') {
            return Err(FlrError::Parse {
                path: response_path.to_path_buf(),
                row,
                column: 2,
                message: "response file must have a single column".into(),
            });
        }
        responses.push(parse_cell(response_path, row, 1, line)?);
    }
    if responses.len() != n {
        return Err(FlrError::DataFile {
            path: response_path.to_path_buf(),
            message: format!(
                "count mismatch: {n} curves but {} responses",
                responses.len()
            ),
        });
    }

    let curves = DMatrix::from_row_slice(n, p, &values);
    FunctionalSample::new(Arc::new(grid), curves, responses)
}

/// Writes the sample in the curve/response CSV layout read by
/// [`load_sample_csv`]. Values use the shortest round-trip representation.
pub fn write_sample_csv(s: &FunctionalSample, curve_path: &Path, response_path: &Path) -> Result<()> {
    let mut out = join_row(s.grid().points());
    out.push('\n');
    for row in s.curves().row_iter() {
        let vals: Vec<f64> = row.iter().copied().collect();
        out.push_str(&join_row(&vals));
        out.push('\n');
    }
    fs::write(curve_path, out).map_err(|e| FlrError::io(curve_path, e))?;
    let mut out = String::new();
    for y in s.responses().iter() {
        out.push_str(&format!("{y}\n"));
    }
    fs::write(response_path, out).map_err(|e| FlrError::io(response_path, e))
}

/// Two-row CSV: grid abscissae, then curve values.
pub fn write_curve_csv(c: &Curve, path: &Path) -> Result<()> {
    let out = format!("{}\n{}\n", join_row(c.grid().points()), join_row(c.values()));
    fs::write(path, out).map_err(|e| FlrError::io(path, e))
}

fn join_row(vals: &[f64]) -> String {
    vals.iter()
        .map(|v| format!("{v}"))
        .collect::<Vec<_>>()
        .join(",")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn grid(p: usize) -> Arc<Grid> {
        Arc::new(Grid::equispaced(p).unwrap())
    }

    fn two_constants(a: f64, b: f64, ya: f64, yb: f64) -> FunctionalSample {
        let g = grid(2);
        FunctionalSample::from_curves(
            &[Curve::constant(g.clone(), a), Curve::constant(g, b)],
            vec![ya, yb],
        )
        .unwrap()
    }

    #[test]
    fn inner_product_of_constants() {
        for p in [2, 7, 100] {
            let g = grid(p);
            let one = Curve::constant(g.clone(), 1.0);
            let zero = Curve::zeros(g);
            assert!((inner_product(&one, &one).unwrap() - 1.0).abs() < 1e-14);
            assert_eq!(inner_product(&one, &zero).unwrap(), 0.0);
        }
    }

    #[test]
    fn inner_product_of_sine_mode_on_fine_grid() {
        let g = grid(1000);
        let f = Curve::from_fn(g, |t| 2f64.sqrt() * (PI * 0.5 * t).sin()).unwrap();
        let v = inner_product(&f, &f).unwrap();
        // the left-endpoint rule drops the x = 1 sample, where 2 sin^2 = 2
        assert!((v - (1.0 - 1.0 / 1000.0)).abs() < 1e-12, "{v}");
        assert!((v - 1.0).abs() <= 1e-3 + 1e-12, "{v}");
    }

    #[test]
    fn quadrature_error_shrinks_with_refinement() {
        // int_0^1 sin(pi t) cos(pi t / 3) dt, closed form
        let exact = {
            let a = PI + PI / 3.0;
            let b = PI - PI / 3.0;
            0.5 * ((1.0 - a.cos()) / a + (1.0 - b.cos()) / b)
        };
        let errs: Vec<f64> = [10, 100, 1000]
            .iter()
            .map(|&p| {
                let g = grid(p);
                let f = Curve::from_fn(g.clone(), |t| (PI * t).sin()).unwrap();
                let h = Curve::from_fn(g, |t| (PI * t / 3.0).cos()).unwrap();
                (inner_product(&f, &h).unwrap() - exact).abs()
            })
            .collect();
        assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
    }

    #[test]
    fn mismatched_grids_are_rejected() {
        let f = Curve::constant(grid(3), 1.0);
        let g = Curve::constant(grid(4), 1.0);
        assert!(matches!(inner_product(&f, &g), Err(FlrError::GridMismatch)));
        // distinct allocations with equal points are compatible
        let h = Curve::constant(grid(3), 2.0);
        assert!((inner_product(&f, &h).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn grid_invariants() {
        assert!(Grid::new(vec![0.5]).is_err());
        assert!(Grid::new(vec![0.2, 0.2]).is_err());
        assert!(Grid::new(vec![0.0, 1.5]).is_err());
        assert!(Grid::new(vec![0.3, 0.1]).is_err());
        let g = Grid::equispaced(4).unwrap();
        assert_eq!(g.points(), &[0.0, 0.25, 0.5, 0.75]);
        assert_eq!(g.weight(), 0.25);
    }

    #[test]
    fn centring_examples() {
        let s = two_constants(1.0, -1.0, 2.0, -2.0);
        let c = center_sample(&s).unwrap();
        assert_eq!(c.curves(), s.curves());
        assert_eq!(c.responses(), s.responses());

        let s = two_constants(2.0, 0.0, 3.0, 1.0);
        let c = center_sample(&s).unwrap();
        assert_eq!(c.curve(0).values(), &[1.0, 1.0]);
        assert_eq!(c.curve(1).values(), &[-1.0, -1.0]);
        assert_eq!(c.responses().as_slice(), &[1.0, -1.0]);
        assert!(c.is_centred());
        assert!(!s.is_centred());
        assert_eq!(s.curve(0).values(), &[2.0, 2.0]);
    }

    #[test]
    fn centring_single_curve_fails() {
        let g = grid(3);
        let s = FunctionalSample::from_curves(&[Curve::constant(g, 1.0)], vec![1.0]).unwrap();
        assert!(matches!(center_sample(&s), Err(FlrError::InsufficientData(_))));
    }

    fn arb_curve_pair(p: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>)> {
        let v = || proptest::collection::vec(-10.0..10.0f64, p);
        (v(), v(), v())
    }

    proptest! {
        #[test]
        fn inner_product_symmetric_bilinear((a, b, c) in arb_curve_pair(17), s in -5.0..5.0f64) {
            let g = grid(17);
            let f = Curve::new(g.clone(), a).unwrap();
            let h = Curve::new(g.clone(), b).unwrap();
            let k = Curve::new(g, c).unwrap();
            let fh = inner_product(&f, &h).unwrap();
            prop_assert!((fh - inner_product(&h, &f).unwrap()).abs() <= 1e-12 * (1.0 + fh.abs()));
            let lhs = inner_product(&f.add_scaled(s, &k).unwrap(), &h).unwrap();
            let rhs = fh + s * inner_product(&k, &h).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
            let nf = f.norm_sq();
            prop_assert!(nf >= 0.0);
            prop_assert!((nf - inner_product(&f, &f).unwrap()).abs() <= 1e-12 * (1.0 + nf));
        }

        #[test]
        fn centring_is_idempotent(vals in proptest::collection::vec(-10.0..10.0f64, 5 * 4), ys in proptest::collection::vec(-3.0..3.0f64, 5)) {
            let s = FunctionalSample::new(grid(4), DMatrix::from_row_slice(5, 4, &vals), ys).unwrap();
            let once = center_sample(&s).unwrap();
            let twice = center_sample(&once).unwrap();
            prop_assert_eq!(&once, &twice);
            let (m, y) = once.means();
            prop_assert!(m.iter().all(|v| v.abs() < 1e-12) && y.abs() < 1e-12);
        }
    }

    #[test]
    fn zero_norm_only_for_zero_curve() {
        let g = grid(5);
        assert_eq!(Curve::zeros(g.clone()).norm_sq(), 0.0);
        let mut v = vec![0.0; 5];
        v[3] = 1e-150;
        assert!(Curve::new(g, v).unwrap().norm_sq() > 0.0);
    }
}
