//! Time-dependent coefficient sources consumed by the solvers.
//!
//! A source can be evaluated at any `(t, x)` (the characteristics oracle
//! needs this) and sampled on a grid at a step time (the grid solvers need
//! this). Grid-backed series interpolate linearly in time and bilinearly in
//! space; sampling a series on its own grid at a stored time returns the
//! stored field unchanged.

use std::sync::Arc;

use crate::expr::{CoeffExpr, Env};
use crate::grid::{divergence, Field, Grid, Point, VectorField};

/// Scalar coefficient `f(t, x)`.
pub trait ScalarSource: Send + Sync {
    fn eval(&self, t: f64, p: Point) -> f64;

    fn sample(&self, grid: &Arc<Grid>, t: f64) -> Field {
        let values = (0..grid.len()).map(|k| self.eval(t, grid.center(k))).collect();
        Field::from_parts(grid.clone(), values)
    }
}

/// Vector coefficient `c(t, x)`.
pub trait VectorSource: Send + Sync {
    fn eval(&self, t: f64, p: Point) -> Point;

    /// Space dimension of the returned vectors.
    fn dim(&self) -> usize;

    /// Pointwise divergence; defaults to centered differences of [`eval`](Self::eval).
    fn divergence(&self, t: f64, p: Point) -> f64 {
        let h = 1e-6;
        let mut div = 0.0;
        for k in 0..self.dim() {
            let mut lo = p;
            let mut hi = p;
            lo[k] -= h;
            hi[k] += h;
            div += (self.eval(t, hi)[k] - self.eval(t, lo)[k]) / (2.0 * h);
        }
        div
    }

    fn sample(&self, grid: &Arc<Grid>, t: f64) -> VectorField {
        let values = (0..grid.len()).map(|k| self.eval(t, grid.center(k))).collect();
        VectorField::from_parts(grid.clone(), values)
    }
}

pub type Scalar = Arc<dyn ScalarSource>;
pub type Vector = Arc<dyn VectorSource>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constant(pub f64);

impl ScalarSource for Constant {
    fn eval(&self, _t: f64, _p: Point) -> f64 {
        self.0
    }
}

/// Spatially and temporally constant velocity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantVector {
    pub value: Point,
    pub dim: usize,
}

impl VectorSource for ConstantVector {
    fn eval(&self, _t: f64, _p: Point) -> Point {
        self.value
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn divergence(&self, _t: f64, _p: Point) -> f64 {
        0.0
    }
}

pub struct FnScalar<F>(pub F);

impl<F: Fn(f64, Point) -> f64 + Send + Sync> ScalarSource for FnScalar<F> {
    fn eval(&self, t: f64, p: Point) -> f64 {
        (self.0)(t, p)
    }
}

/// Closure velocity with an optional closed-form divergence.
pub struct FnVector<F, D = fn(f64, Point) -> f64> {
    pub f: F,
    pub div: Option<D>,
    pub dim: usize,
}

impl<F> FnVector<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { f, div: None, dim }
    }
}

impl<F, D> FnVector<F, D> {
    pub fn with_divergence(dim: usize, f: F, div: D) -> Self {
        Self {
            f,
            div: Some(div),
            dim,
        }
    }
}

impl<F, D> VectorSource for FnVector<F, D>
where
    F: Fn(f64, Point) -> Point + Send + Sync,
    D: Fn(f64, Point) -> f64 + Send + Sync,
{
    fn eval(&self, t: f64, p: Point) -> Point {
        (self.f)(t, p)
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn divergence(&self, t: f64, p: Point) -> f64 {
        match &self.div {
            Some(d) => d(t, p),
            None => {
                let h = 1e-6;
                let mut div = 0.0;
                for k in 0..self.dim {
                    let mut lo = p;
                    let mut hi = p;
                    lo[k] -= h;
                    hi[k] += h;
                    div += ((self.f)(t, hi)[k] - (self.f)(t, lo)[k]) / (2.0 * h);
                }
                div
            }
        }
    }
}

/// A `t, x, y` expression; evaluation errors must be ruled out beforehand
/// (see [`ExprSource::new`]).
#[derive(Debug, Clone)]
pub struct ExprSource {
    expr: CoeffExpr,
}

impl ExprSource {
    /// Wraps `expr` after checking it does not reference `u` or `w`.
    pub fn new(expr: CoeffExpr) -> Option<Self> {
        use crate::expr::Var;
        (!expr.references(Var::U) && !expr.references(Var::W)).then_some(Self { expr })
    }

    pub fn expr(&self) -> &CoeffExpr {
        &self.expr
    }
}

impl ScalarSource for ExprSource {
    /// Non-finite evaluations map to NaN, which grid constructors reject.
    fn eval(&self, t: f64, p: Point) -> f64 {
        self.expr.eval(&Env::at(t, p[0], p[1])).unwrap_or(f64::NAN)
    }
}

/// Locates `t` in sorted `times`: returns `(k, θ)` with `t ≈ (1−θ)t_k + θt_{k+1}`.
fn bracket(times: &[f64], t: f64) -> (usize, f64) {
    let n = times.len();
    if n == 1 || t <= times[0] {
        return (0, 0.0);
    }
    if t >= times[n - 1] {
        return (n - 1, 0.0);
    }
    let k = times.partition_point(|&s| s <= t) - 1;
    let theta = (t - times[k]) / (times[k + 1] - times[k]);
    (k, theta)
}

/// Grid snapshots at increasing times; constant extrapolation outside.
#[derive(Debug, Clone)]
pub struct FieldSeries {
    times: Vec<f64>,
    fields: Vec<Field>,
}

impl FieldSeries {
    pub fn new(times: Vec<f64>, fields: Vec<Field>) -> Self {
        assert!(!times.is_empty() && times.len() == fields.len());
        debug_assert!(times.windows(2).all(|w| w[0] < w[1]));
        Self { times, fields }
    }

    pub fn stationary(field: Field) -> Self {
        Self::new(vec![0.0], vec![field])
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn fields(&self) -> &[Field] {
        &self.fields
    }

    fn grid(&self) -> &Arc<Grid> {
        self.fields[0].grid()
    }
}

impl ScalarSource for FieldSeries {
    fn eval(&self, t: f64, p: Point) -> f64 {
        let (k, th) = bracket(&self.times, t);
        let g = self.grid();
        let v0 = g.interpolate(self.fields[k].values(), p);
        if th == 0.0 {
            return v0;
        }
        (1.0 - th) * v0 + th * g.interpolate(self.fields[k + 1].values(), p)
    }

    fn sample(&self, grid: &Arc<Grid>, t: f64) -> Field {
        if **grid != **self.grid() {
            let values = (0..grid.len()).map(|k| self.eval(t, grid.center(k))).collect();
            return Field::from_parts(grid.clone(), values);
        }
        let (k, th) = bracket(&self.times, t);
        if th == 0.0 {
            return self.fields[k].clone();
        }
        self.fields[k].lincomb(1.0 - th, &self.fields[k + 1], th)
    }
}

/// Velocity snapshots with precomputed discrete divergences.
#[derive(Debug, Clone)]
pub struct VectorSeries {
    times: Vec<f64>,
    fields: Vec<VectorField>,
    divs: Vec<Field>,
}

impl VectorSeries {
    pub fn new(times: Vec<f64>, fields: Vec<VectorField>) -> Self {
        assert!(!times.is_empty() && times.len() == fields.len());
        let divs = fields.iter().map(divergence).collect();
        Self {
            times,
            fields,
            divs,
        }
    }

    pub fn stationary(field: VectorField) -> Self {
        Self::new(vec![0.0], vec![field])
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn fields(&self) -> &[VectorField] {
        &self.fields
    }

    fn grid(&self) -> &Arc<Grid> {
        self.fields[0].grid()
    }
}

impl VectorSource for VectorSeries {
    fn eval(&self, t: f64, p: Point) -> Point {
        let (k, th) = bracket(&self.times, t);
        let v0 = self.fields[k].at(p);
        if th == 0.0 {
            return v0;
        }
        let v1 = self.fields[k + 1].at(p);
        [(1.0 - th) * v0[0] + th * v1[0], (1.0 - th) * v0[1] + th * v1[1]]
    }

    fn dim(&self) -> usize {
        self.grid().dim()
    }

    fn divergence(&self, t: f64, p: Point) -> f64 {
        let (k, th) = bracket(&self.times, t);
        let g = self.grid();
        let d0 = g.interpolate(self.divs[k].values(), p);
        if th == 0.0 {
            return d0;
        }
        (1.0 - th) * d0 + th * g.interpolate(self.divs[k + 1].values(), p)
    }

    fn sample(&self, grid: &Arc<Grid>, t: f64) -> VectorField {
        if **grid != **self.grid() {
            let values = (0..grid.len()).map(|k| self.eval(t, grid.center(k))).collect();
            return VectorField::from_parts(grid.clone(), values);
        }
        let (k, th) = bracket(&self.times, t);
        if th == 0.0 {
            return self.fields[k].clone();
        }
        self.fields[k].lincomb(1.0 - th, &self.fields[k + 1], th)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn series_is_exact_at_stored_times_and_linear_between() {
        let g = Grid::interval(0.0, 1.0, 8).unwrap();
        let s = FieldSeries::new(
            vec![0.0, 1.0],
            vec![Field::constant(&g, 1.0), Field::constant(&g, 3.0)],
        );
        assert_eq!(s.sample(&g, 1.0).values()[3], 3.0);
        assert!((s.sample(&g, 0.25).values()[0] - 1.5).abs() < 1e-15);
        assert!((s.eval(0.5, [0.4, 0.0]) - 2.0).abs() < 1e-15);
        assert_eq!(s.eval(7.0, [0.4, 0.0]), 3.0);
    }

    #[test]
    fn vector_series_divergence_of_linear_field() {
        let g = Grid::interval(0.0, 1.0, 16).unwrap();
        let x = Field::from_fn(&g, |p| 2.0 * p[0]).unwrap();
        let s = VectorSeries::stationary(VectorField::from_components(&x, None));
        assert!((s.divergence(0.3, [0.5, 0.0]) - 2.0).abs() < 1e-12);
        assert!((s.eval(0.3, [0.5, 0.0])[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn default_divergence_uses_differences() {
        let v = FnVector::new(2, |_t, p: Point| [p[0] * p[0], 3.0 * p[1]]);
        assert!((v.divergence(0.0, [0.5, 0.5]) - 4.0).abs() < 1e-8);
    }
}
