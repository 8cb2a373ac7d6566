//! Bounded domains, their uniform cell-centered discretization and the
//! discrete norms used by every estimate in the crate.
//!
//! Cells are stored row-major with `x` varying fastest. One-dimensional grids
//! are treated as `nx × 1` grids whose points carry a dummy `y = 0`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::GridError;

/// A point of the (at most two-dimensional) physical space.
pub type Point = [f64; 2];

/// Minimum number of cells per axis.
pub const MIN_CELLS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self, GridError> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(GridError::DegenerateInterval { lo, hi });
        }
        Ok(Self { lo, hi })
    }

    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }
}

/// An interval (1D) or an axis-aligned rectangle (2D).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    axes: Vec<Interval>,
}

impl DomainSpec {
    pub fn new(axes: Vec<Interval>) -> Result<Self, GridError> {
        if axes.is_empty() || axes.len() > 2 {
            return Err(GridError::UnsupportedDimension(axes.len()));
        }
        for a in &axes {
            Interval::new(a.lo, a.hi)?;
        }
        Ok(Self { axes })
    }

    pub fn interval(lo: f64, hi: f64) -> Result<Self, GridError> {
        Self::new(vec![Interval::new(lo, hi)?])
    }

    pub fn rectangle(x: (f64, f64), y: (f64, f64)) -> Result<Self, GridError> {
        Self::new(vec![Interval::new(x.0, x.1)?, Interval::new(y.0, y.1)?])
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Interval] {
        &self.axes
    }

    /// Lebesgue measure of the domain.
    pub fn measure(&self) -> f64 {
        self.axes.iter().map(Interval::length).product()
    }

    /// Membership in the closure of the domain.
    pub fn contains_closed(&self, p: Point) -> bool {
        self.axes
            .iter()
            .enumerate()
            .all(|(k, a)| p[k] >= a.lo && p[k] <= a.hi)
    }

    /// Membership in the open domain.
    pub fn contains_open(&self, p: Point) -> bool {
        self.axes
            .iter()
            .enumerate()
            .all(|(k, a)| p[k] > a.lo && p[k] < a.hi)
    }
}

/// Uniform cell-centered grid on a [`DomainSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    spec: DomainSpec,
    n_cells: [usize; 2],
    dx: [f64; 2],
    cell_volume: f64,
}

impl Grid {
    pub fn new(spec: DomainSpec, n_cells: &[usize]) -> Result<Arc<Self>, GridError> {
        if n_cells.len() != spec.dim() {
            return Err(GridError::CountMismatch {
                dim: spec.dim(),
                counts: n_cells.len(),
            });
        }
        if let Some(&n) = n_cells.iter().find(|&&n| n < MIN_CELLS) {
            return Err(GridError::TooFewCells(n));
        }
        let mut n = [1usize; 2];
        let mut dx = [1.0f64; 2];
        for (k, a) in spec.axes().iter().enumerate() {
            n[k] = n_cells[k];
            dx[k] = a.length() / n_cells[k] as f64;
        }
        let cell_volume = dx[..spec.dim()].iter().product();
        Ok(Arc::new(Self {
            spec,
            n_cells: n,
            dx,
            cell_volume,
        }))
    }

    /// Convenience constructor for `[lo, hi]` with `n` cells.
    pub fn interval(lo: f64, hi: f64, n: usize) -> Result<Arc<Self>, GridError> {
        Self::new(DomainSpec::interval(lo, hi)?, &[n])
    }

    pub fn rectangle(x: (f64, f64), y: (f64, f64), n: (usize, usize)) -> Result<Arc<Self>, GridError> {
        Self::new(DomainSpec::rectangle(x, y)?, &[n.0, n.1])
    }

    pub fn spec(&self) -> &DomainSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    /// Cells per axis; the second entry is 1 for 1D grids.
    pub fn shape(&self) -> [usize; 2] {
        self.n_cells
    }

    pub fn nx(&self) -> usize {
        self.n_cells[0]
    }

    pub fn ny(&self) -> usize {
        self.n_cells[1]
    }

    /// Counts for the active axes only.
    pub fn counts(&self) -> Vec<usize> {
        self.n_cells[..self.dim()].to_vec()
    }

    pub fn len(&self) -> usize {
        self.n_cells[0] * self.n_cells[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dx(&self) -> [f64; 2] {
        self.dx
    }

    pub fn min_dx(&self) -> f64 {
        self.dx[..self.dim()].iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_dx(&self) -> f64 {
        self.dx[..self.dim()].iter().copied().fold(0.0, f64::max)
    }

    pub fn cell_volume(&self) -> f64 {
        self.cell_volume
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i + self.n_cells[0] * j
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> (usize, usize) {
        (idx % self.n_cells[0], idx / self.n_cells[0])
    }

    pub fn center(&self, idx: usize) -> Point {
        let (i, j) = self.coords(idx);
        let axes = self.spec.axes();
        let x = axes[0].lo + (i as f64 + 0.5) * self.dx[0];
        let y = if self.dim() == 2 {
            axes[1].lo + (j as f64 + 0.5) * self.dx[1]
        } else {
            0.0
        };
        [x, y]
    }

    pub fn centers(&self) -> Vec<Point> {
        (0..self.len()).map(|k| self.center(k)).collect()
    }

    /// Bilinear (linear in 1D) interpolation of cell-centered values at `p`.
    ///
    /// Points between the outermost centers and the boundary are linearly
    /// extrapolated from the two nearest centers.
    pub fn interpolate(&self, values: &[f64], p: Point) -> f64 {
        debug_assert_eq!(values.len(), self.len());
        let (i0, fx) = self.locate(0, p[0]);
        if self.dim() == 1 {
            return values[i0] * (1.0 - fx) + values[i0 + 1] * fx;
        }
        let (j0, fy) = self.locate(1, p[1]);
        let v00 = values[self.index(i0, j0)];
        let v10 = values[self.index(i0 + 1, j0)];
        let v01 = values[self.index(i0, j0 + 1)];
        let v11 = values[self.index(i0 + 1, j0 + 1)];
        (v00 * (1.0 - fx) + v10 * fx) * (1.0 - fy) + (v01 * (1.0 - fx) + v11 * fx) * fy
    }

    fn locate(&self, axis: usize, coord: f64) -> (usize, f64) {
        let a = self.spec.axes()[axis];
        let n = self.n_cells[axis];
        let s = (coord - a.lo) / self.dx[axis] - 0.5;
        let i0 = (s.floor().max(0.0) as usize).min(n - 2);
        (i0, s - i0 as f64)
    }
}

/// Scalar grid function: one finite value per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self, GridError> {
        if values.len() != grid.len() {
            return Err(GridError::LengthMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(GridError::NonFinite(i));
        }
        Ok(Self { grid, values })
    }

    /// Caller guarantees length and finiteness.
    pub(crate) fn from_parts(grid: Arc<Grid>, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn zeros(grid: &Arc<Grid>) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: &Arc<Grid>, c: f64) -> Self {
        Self::from_parts(grid.clone(), vec![c; grid.len()])
    }

    /// Samples `f` at the cell centers; non-finite samples are rejected.
    pub fn from_fn(grid: &Arc<Grid>, mut f: impl FnMut(Point) -> f64) -> Result<Self, GridError> {
        let values = (0..grid.len()).map(|k| f(grid.center(k))).collect();
        Self::new(grid.clone(), values)
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

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn at(&self, p: Point) -> f64 {
        self.grid.interpolate(&self.values, p)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_parts(self.grid.clone(), self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_with(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Self {
        debug_assert_eq!(self.len(), other.len());
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Self::from_parts(self.grid.clone(), values)
    }

    pub fn sub(&self, other: &Field) -> Self {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn add(&self, other: &Field) -> Self {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|v| s * v)
    }

    /// Linear combination `a·self + b·other`.
    pub fn lincomb(&self, a: f64, other: &Field, b: f64) -> Self {
        self.zip_with(other, |x, y| a * x + b * y)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn l1(&self) -> f64 {
        norm_l1(self)
    }

    pub fn linf(&self) -> f64 {
        norm_linf(self)
    }

    pub fn tv(&self) -> f64 {
        total_variation(self)
    }

    /// Total variation inside the domain, without the jumps at `∂Ω`.
    pub fn tv_interior(&self) -> f64 {
        variation(self, false)
    }

    /// Integral of the field over the domain (signed).
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }
}

/// `Σ |f| · cell_volume`.
pub fn norm_l1(f: &Field) -> f64 {
    f.values.iter().map(|v| v.abs()).sum::<f64>() * f.grid.cell_volume()
}

pub fn norm_linf(f: &Field) -> f64 {
    f.values.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Total variation of the zero extension of `f` outside the domain.
///
/// In 2D each axis-direction jump is weighted by the transverse cell length.
pub fn total_variation(f: &Field) -> f64 {
    variation(f, true)
}

fn variation(f: &Field, boundary_jumps: bool) -> f64 {
    let g = &f.grid;
    let [nx, ny] = g.shape();
    let v = &f.values;
    let line = |get: &dyn Fn(usize) -> f64, n: usize| -> f64 {
        let mut s = if boundary_jumps {
            get(0).abs() + get(n - 1).abs()
        } else {
            0.0
        };
        for i in 0..n - 1 {
            s += (get(i + 1) - get(i)).abs();
        }
        s
    };
    if g.dim() == 1 {
        return line(&|i| v[i], nx);
    }
    let [dx, dy] = g.dx();
    let mut tv_x = 0.0;
    for j in 0..ny {
        tv_x += line(&|i| v[g.index(i, j)], nx);
    }
    let mut tv_y = 0.0;
    for i in 0..nx {
        tv_y += line(&|j| v[g.index(i, j)], ny);
    }
    tv_x * dy + tv_y * dx
}

/// Cell-sampled vector field with one or two active components.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    grid: Arc<Grid>,
    values: Vec<Point>,
}

impl VectorField {
    pub fn new(grid: Arc<Grid>, values: Vec<Point>) -> Result<Self, GridError> {
        if values.len() != grid.len() {
            return Err(GridError::LengthMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !(v[0].is_finite() && v[1].is_finite())) {
            return Err(GridError::NonFinite(i));
        }
        Ok(Self { grid, values })
    }

    pub(crate) fn from_parts(grid: Arc<Grid>, values: Vec<Point>) -> Self {
        Self { grid, values }
    }

    pub fn zeros(grid: &Arc<Grid>) -> Self {
        Self::from_parts(grid.clone(), vec![[0.0; 2]; grid.len()])
    }

    pub fn from_components(x: &Field, y: Option<&Field>) -> Self {
        let values = (0..x.len())
            .map(|k| [x.values[k], y.map_or(0.0, |f| f.values[k])])
            .collect();
        Self::from_parts(x.grid.clone(), values)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[Point] {
        &self.values
    }

    pub fn component(&self, axis: usize) -> Field {
        Field::from_parts(self.grid.clone(), self.values.iter().map(|v| v[axis]).collect())
    }

    pub fn at(&self, p: Point) -> Point {
        let mut out = [0.0; 2];
        for (k, o) in out.iter_mut().enumerate().take(self.grid.dim()) {
            *o = self.grid.interpolate(&self.component(k).values, p);
        }
        out
    }

    /// Pointwise Euclidean norm.
    pub fn magnitude(&self) -> Field {
        Field::from_parts(
            self.grid.clone(),
            self.values.iter().map(|v| v[0].hypot(v[1])).collect(),
        )
    }

    /// `sup_x |v(x)|`.
    pub fn linf(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v[0].hypot(v[1])))
    }

    pub fn sub(&self, other: &VectorField) -> Self {
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| [a[0] - b[0], a[1] - b[1]])
            .collect();
        Self::from_parts(self.grid.clone(), values)
    }

    pub fn lincomb(&self, a: f64, other: &VectorField, b: f64) -> Self {
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(p, q)| [a * p[0] + b * q[0], a * p[1] + b * q[1]])
            .collect();
        Self::from_parts(self.grid.clone(), values)
    }
}

/// Discrete partial derivative along `axis`: centered in the interior,
/// second-order one-sided in the boundary cells.
pub fn partial(f: &Field, axis: usize) -> Field {
    let g = f.grid();
    let [nx, ny] = g.shape();
    let h = g.dx()[axis];
    let v = f.values();
    let mut out = vec![0.0; v.len()];
    let (n, stride) = if axis == 0 { (nx, 1) } else { (ny, nx) };
    let lines = if axis == 0 { ny } else { nx };
    for l in 0..lines {
        let base = if axis == 0 { g.index(0, l) } else { g.index(l, 0) };
        let at = |i: usize| v[base + i * stride];
        for i in 0..n {
            let d = if i == 0 {
                (-3.0 * at(0) + 4.0 * at(1) - at(2)) / (2.0 * h)
            } else if i == n - 1 {
                (3.0 * at(n - 1) - 4.0 * at(n - 2) + at(n - 3)) / (2.0 * h)
            } else {
                (at(i + 1) - at(i - 1)) / (2.0 * h)
            };
            out[base + i * stride] = d;
        }
    }
    Field::from_parts(g.clone(), out)
}

pub fn gradient(f: &Field) -> VectorField {
    let gx = partial(f, 0);
    let gy = (f.grid().dim() == 2).then(|| partial(f, 1));
    VectorField::from_components(&gx, gy.as_ref())
}

pub fn divergence(v: &VectorField) -> Field {
    let mut div = partial(&v.component(0), 0);
    if v.grid().dim() == 2 {
        div = div.add(&partial(&v.component(1), 1));
    }
    div
}

/// Entries `∂_j v_i` of the Jacobian, indexed `[i][j]` over active axes.
pub fn jacobian(v: &VectorField) -> Vec<Vec<Field>> {
    let d = v.grid().dim();
    (0..d)
        .map(|i| {
            let comp = v.component(i);
            (0..d).map(|j| partial(&comp, j)).collect()
        })
        .collect()
}

/// `sup_x ‖D_x v(x)‖` using the Frobenius norm of the Jacobian.
pub fn jacobian_linf(v: &VectorField) -> f64 {
    let jac = jacobian(v);
    let n = v.grid().len();
    (0..n)
        .map(|k| {
            jac.iter()
                .flatten()
                .map(|f| f.values()[k].powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .fold(0.0, f64::max)
}

/// `‖D²_x v‖_{L1}` with the pointwise Frobenius norm over all second derivatives.
pub fn hessian_l1(v: &VectorField) -> f64 {
    let g = v.grid();
    let d = g.dim();
    let mut acc = vec![0.0; g.len()];
    for i in 0..d {
        let comp = v.component(i);
        for j in 0..d {
            let dj = partial(&comp, j);
            for k in 0..d {
                let dkj = partial(&dj, k);
                for (a, x) in acc.iter_mut().zip(dkj.values()) {
                    *a += x * x;
                }
            }
        }
    }
    acc.iter().map(|a| a.sqrt()).sum::<f64>() * g.cell_volume()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_partition() {
        let g = Grid::interval(0.0, 1.0, 10).unwrap();
        assert!((g.dx()[0] - 0.1).abs() < 1e-15);
        assert!((g.center(0)[0] - 0.05).abs() < 1e-15);
        assert!((g.center(9)[0] - 0.95).abs() < 1e-15);
    }

    #[test]
    fn rectangle_cell_volume() {
        let g = Grid::rectangle((0.0, 1.0), (0.0, 2.0), (10, 20)).unwrap();
        assert!((g.cell_volume() - 0.01).abs() < 1e-15);
        let total = g.cell_volume() * g.len() as f64;
        assert!((total - g.spec().measure()).abs() / g.spec().measure() < 1e-12);
    }

    #[test]
    fn rejects_too_few_cells_and_degenerate_intervals() {
        assert!(matches!(Grid::interval(0.0, 1.0, 3), Err(GridError::TooFewCells(3))));
        assert!(Grid::interval(1.0, 1.0, 10).is_err());
        assert!(Grid::interval(2.0, 1.0, 10).is_err());
        assert!(Grid::new(DomainSpec::interval(0.0, 1.0).unwrap(), &[8, 8]).is_err());
    }

    #[test]
    fn l1_examples() {
        let g = Grid::interval(0.0, 1.0, 1000).unwrap();
        assert_eq!(Field::zeros(&g).l1(), 0.0);
        assert!((Field::constant(&g, 2.0).l1() - 2.0).abs() < 1e-12);
        let f = Field::from_fn(&g, |p| p[0]).unwrap();
        assert!((f.l1() - 0.5).abs() < 1e-3);
    }

    #[test]
    fn linf_examples() {
        let g = Grid::interval(0.0, 1.0, 1001).unwrap();
        assert_eq!(Field::zeros(&g).linf(), 0.0);
        assert_eq!(Field::constant(&g, -3.0).linf(), 3.0);
        let f = Field::from_fn(&g, |p| (std::f64::consts::PI * p[0]).sin()).unwrap();
        assert!((f.linf() - 1.0).abs() < 1e-5);
    }

    #[test]
    fn tv_examples() {
        let g = Grid::interval(0.0, 1.0, 10).unwrap();
        assert_eq!(Field::zeros(&g).tv(), 0.0);
        assert!((Field::constant(&g, 1.0).tv() - 2.0).abs() < 1e-15);
        let step = Field::from_fn(&g, |p| if p[0] > 0.5 { 1.0 } else { 0.0 }).unwrap();
        assert!((step.tv() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn tv_2d_indicator_is_perimeter() {
        let g = Grid::rectangle((0.0, 1.0), (0.0, 2.0), (8, 16)).unwrap();
        let one = Field::constant(&g, 1.0);
        assert!((one.tv() - 6.0).abs() < 1e-12);
    }

    #[test]
    fn field_rejects_non_finite() {
        let g = Grid::interval(0.0, 1.0, 4).unwrap();
        assert!(matches!(
            Field::new(g.clone(), vec![0.0, f64::NAN, 0.0, 0.0]),
            Err(GridError::NonFinite(1))
        ));
        assert!(Field::new(g, vec![0.0; 3]).is_err());
    }

    #[test]
    fn interpolation_is_exact_for_affine_data() {
        let g = Grid::rectangle((0.0, 1.0), (0.0, 1.0), (6, 5)).unwrap();
        let f = Field::from_fn(&g, |p| 2.0 * p[0] - 3.0 * p[1] + 1.0).unwrap();
        for p in [[0.0, 0.0], [0.33, 0.71], [1.0, 1.0], [0.05, 0.99]] {
            assert!((f.at(p) - (2.0 * p[0] - 3.0 * p[1] + 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn derivatives_exact_on_quadratics() {
        let g = Grid::rectangle((0.0, 1.0), (0.0, 2.0), (10, 12)).unwrap();
        let f = Field::from_fn(&g, |p| p[0] * p[0] + 3.0 * p[0] * p[1]).unwrap();
        let dx = partial(&f, 0);
        let dy = partial(&f, 1);
        for k in 0..g.len() {
            let p = g.center(k);
            assert!((dx.values()[k] - (2.0 * p[0] + 3.0 * p[1])).abs() < 1e-10);
            assert!((dy.values()[k] - 3.0 * p[0]).abs() < 1e-10);
        }
    }
}
