//! Reaction–diffusion equation `∂t w = μΔw + B(t,x) w + b(t,x)` with zero
//! Dirichlet data.
//!
//! The grid solver treats diffusion implicitly (θ-scheme) and the reaction
//! and source explicitly. The Dirichlet condition is imposed at the cell
//! faces through the antisymmetric ghost value `w_ghost = −w_boundary`,
//! which makes `sin(kπx/L)` sampled at cell centers an exact eigenvector of
//! the discrete Laplacian. Two-dimensional steps are split into
//! tridiagonal sweeps along each axis.
//!
//! A sine-series Green function on an interval provides the reference
//! solution used to validate the solver.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::calibration;
use crate::error::ParabolicError;
use crate::grid::{Field, Grid};
use crate::source::{Constant, Scalar};
use crate::trace::{cumulative, running_max, BoundSeries, Trace};
use crate::weak::{trapezoid_weights, TestFunction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParabolicScheme {
    #[default]
    ImplicitEuler,
    CrankNicolson,
}

impl ParabolicScheme {
    fn theta(self) -> f64 {
        match self {
            ParabolicScheme::ImplicitEuler => 1.0,
            ParabolicScheme::CrankNicolson => 0.5,
        }
    }

    /// Offset (in units of `dt`) at which coefficients are sampled.
    pub fn coeff_offset(self) -> f64 {
        match self {
            ParabolicScheme::ImplicitEuler => 0.0,
            ParabolicScheme::CrankNicolson => 0.5,
        }
    }
}

/// `∂t w = μΔw + B w + b`, `w(0) = w0`.
#[derive(Clone)]
pub struct ParabolicProblem {
    pub mu: f64,
    pub reaction: Scalar,
    pub source: Scalar,
    pub w0: Field,
}

impl ParabolicProblem {
    /// Pure diffusion of `w0`.
    pub fn new(mu: f64, w0: Field) -> Self {
        Self {
            mu,
            reaction: Arc::new(Constant(0.0)),
            source: Arc::new(Constant(0.0)),
            w0,
        }
    }

    pub fn with_reaction(mut self, b: Scalar) -> Self {
        self.reaction = b;
        self
    }

    pub fn with_source(mut self, b: Scalar) -> Self {
        self.source = b;
        self
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.w0.grid()
    }
}

/// Heat kernel `(4πμt)^{−n/2} exp(−|x|²/(4μt))` in `n = x.len()` dimensions.
pub fn heat_kernel(mu: f64, t: f64, x: &[f64]) -> Result<f64, ParabolicError> {
    if !(t > 0.0) {
        return Err(ParabolicError::NonPositiveTime(t));
    }
    let r2: f64 = x.iter().map(|v| v * v).sum();
    let n = x.len() as f64;
    Ok((4.0 * std::f64::consts::PI * mu * t).powf(-0.5 * n) * (-r2 / (4.0 * mu * t)).exp())
}

/// `sin(πs)` with exact zeros at integers.
fn sin_pi(s: f64) -> f64 {
    let r = s - 2.0 * (s / 2.0).round();
    if r == 0.0 || r.abs() == 1.0 {
        0.0
    } else {
        (std::f64::consts::PI * r).sin()
    }
}

/// Dirichlet Green function of `∂t − μ∂xx` on `[0, L]`, truncated to `n_terms`.
pub fn green_interval(mu: f64, t: f64, tau: f64, x: f64, y: f64, l: f64, n_terms: usize) -> f64 {
    let dt = t - tau;
    let mut s = 0.0;
    for k in 1..=n_terms {
        let kf = k as f64;
        let lam = (kf * std::f64::consts::PI / l).powi(2);
        s += (-mu * lam * dt).exp() * sin_pi(kf * x / l) * sin_pi(kf * y / l);
    }
    let g = 2.0 / l * s;
    if g < 0.0 && g > -1e-12 {
        0.0
    } else {
        g
    }
}

/// Time nodes for the source integral of the reference solution.
pub const DUHAMEL_TAU_INTERVALS: usize = 512;

/// Reference solution at time `t` for `B ≡ 0` on a 1D grid, by the
/// Green-function representation.
///
/// Spatial integrals use the midpoint rule on the grid. In time, each mode's
/// source coefficient is interpolated linearly on [`DUHAMEL_TAU_INTERVALS`]
/// intervals and integrated exactly against the exponential decay.
pub fn duhamel_reference(
    problem: &ParabolicProblem,
    t: f64,
    n_terms: usize,
) -> Result<Field, ParabolicError> {
    duhamel_reference_with(problem, t, n_terms, DUHAMEL_TAU_INTERVALS)
}

pub fn duhamel_reference_with(
    problem: &ParabolicProblem,
    t: f64,
    n_terms: usize,
    n_tau: usize,
) -> Result<Field, ParabolicError> {
    let grid = problem.grid();
    if grid.dim() != 1 {
        return Err(ParabolicError::Requires1D);
    }
    if t < 0.0 {
        return Err(ParabolicError::NonPositiveTime(t));
    }
    let n_tau = n_tau.max(1);
    let a = grid.spec().axes()[0];
    let l = a.length();
    let n = grid.len();
    let h = grid.dx()[0];
    let s: Vec<f64> = (0..n).map(|i| (grid.center(i)[0] - a.lo) / l).collect();
    let taus: Vec<f64> = (0..=n_tau).map(|m| t * m as f64 / n_tau as f64).collect();

    let mut sources = Vec::with_capacity(taus.len());
    for &tau in &taus {
        let b = problem.source.sample(grid, tau);
        let r = problem.reaction.sample(grid, tau);
        if r.linf() != 0.0 {
            return Err(ParabolicError::NonZeroReaction);
        }
        sources.push(b);
    }
    let mut out = vec![0.0; n];
    let mut modes = vec![0.0; n];
    let mut projected = vec![0.0; taus.len()];
    let h_tau = t / n_tau as f64;
    for k in 1..=n_terms {
        let kf = k as f64;
        for (m, v) in modes.iter_mut().zip(&s) {
            *m = sin_pi(kf * v);
        }
        let project = |f: &Field| -> f64 {
            2.0 / l * f.values().iter().zip(&modes).map(|(a, b)| a * b).sum::<f64>() * h
        };
        let decay = mu_lambda(problem.mu, kf, l);
        let mut coeff = (-decay * t).exp() * project(&problem.w0);
        for (p, b) in projected.iter_mut().zip(&sources) {
            *p = project(b);
        }
        let (e0, e1) = exp_moments(decay * h_tau);
        for m in 0..n_tau {
            let damp = (-decay * (t - taus[m + 1])).exp();
            coeff += damp * h_tau * (e1 * projected[m] + (e0 - e1) * projected[m + 1]);
        }
        for (o, m) in out.iter_mut().zip(&modes) {
            *o += coeff * m;
        }
    }
    Field::new(grid.clone(), out).map_err(ParabolicError::from)
}

/// `E0 = (1 − e^{−z})/z` and `E1 = (1 − e^{−z}(1 + z))/z²`, the weights of
/// `∫_0^h e^{−λr} dr` and `∫_0^h e^{−λr} r/h dr` divided by `h`, `z = λh`.
fn exp_moments(z: f64) -> (f64, f64) {
    if z < 1e-3 {
        (1.0 - z / 2.0 + z * z / 6.0, 0.5 - z / 3.0 + z * z / 8.0)
    } else {
        let em = (-z).exp();
        ((-(-z).exp_m1()) / z, (1.0 - em * (1.0 + z)) / (z * z))
    }
}

fn mu_lambda(mu: f64, k: f64, l: f64) -> f64 {
    mu * (k * std::f64::consts::PI / l).powi(2)
}

/// Largest step for which the scheme keeps accuracy and positivity:
/// `min(4·dx²/(2μ), 1/(2‖B‖∞ + ε))`.
pub fn default_dt(grid: &Grid, mu: f64, b_sup: f64) -> f64 {
    let dx = grid.min_dx();
    (4.0 * dx * dx / (2.0 * mu)).min(1.0 / (2.0 * b_sup + 1e-12))
}

/// Applies the axis-`axis` part of the discrete Laplacian, adding
/// `scale·L_axis v` into `out`.
fn add_laplacian_axis(v: &[f64], grid: &Grid, axis: usize, scale: f64, out: &mut [f64]) {
    let [nx, ny] = grid.shape();
    let h = grid.dx()[axis];
    let c = scale / (h * h);
    let (n, stride, lines) = if axis == 0 { (nx, 1, ny) } else { (ny, nx, nx) };
    for l in 0..lines {
        let base = if axis == 0 { l * nx } else { l };
        for i in 0..n {
            let k = base + i * stride;
            let left = if i == 0 { -v[k] } else { v[k - stride] };
            let right = if i == n - 1 { -v[k] } else { v[k + stride] };
            out[k] += c * (left - 2.0 * v[k] + right);
        }
    }
}

/// Solves `(I − scale·L_axis) x = rhs` line by line, in place.
fn solve_axis(x: &mut [f64], grid: &Grid, axis: usize, scale: f64) {
    let [nx, ny] = grid.shape();
    let h = grid.dx()[axis];
    let r = scale / (h * h);
    let (n, stride, lines) = if axis == 0 { (nx, 1, ny) } else { (ny, nx, nx) };
    let mut cp = vec![0.0; n];
    let mut dp = vec![0.0; n];
    for l in 0..lines {
        let base = if axis == 0 { l * nx } else { l };
        let diag = |i: usize| if i == 0 || i == n - 1 { 1.0 + 3.0 * r } else { 1.0 + 2.0 * r };
        cp[0] = -r / diag(0);
        dp[0] = x[base] / diag(0);
        for i in 1..n {
            let m = diag(i) + r * cp[i - 1];
            cp[i] = -r / m;
            dp[i] = (x[base + i * stride] + r * dp[i - 1]) / m;
        }
        x[base + (n - 1) * stride] = dp[n - 1];
        for i in (0..n - 1).rev() {
            x[base + i * stride] = dp[i] - cp[i] * x[base + (i + 1) * stride];
        }
    }
}

/// One step of the θ-scheme
/// `(I − θ dt μ Δh) w' = w + dt((1−θ) μ Δh w + B w + b)`.
///
/// In 2D, implicit Euler uses the factorization `(I − dt μ Lx)(I − dt μ Ly)`
/// and Crank–Nicolson the Douglas splitting.
pub fn step_parabolic(
    w: &Field,
    b_react: &Field,
    b_src: &Field,
    mu: f64,
    scheme: ParabolicScheme,
    dt: f64,
) -> Result<Field, ParabolicError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(ParabolicError::InvalidStep(dt));
    }
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(ParabolicError::InvalidDiffusivity(mu));
    }
    let stiff = dt * b_react.linf();
    if stiff >= 1.0 {
        return Err(ParabolicError::StiffReaction(stiff));
    }
    let grid = w.grid();
    let v = w.values();
    let mut rhs: Vec<f64> = v
        .iter()
        .zip(b_react.values().iter().zip(b_src.values()))
        .map(|(&w, (&bb, &s))| w + dt * (bb * w + s))
        .collect();
    let theta = scheme.theta();
    if grid.dim() == 1 {
        if theta < 1.0 {
            add_laplacian_axis(v, grid, 0, (1.0 - theta) * dt * mu, &mut rhs);
        }
        solve_axis(&mut rhs, grid, 0, theta * dt * mu);
    } else {
        match scheme {
            ParabolicScheme::ImplicitEuler => {
                solve_axis(&mut rhs, grid, 0, dt * mu);
                solve_axis(&mut rhs, grid, 1, dt * mu);
            }
            ParabolicScheme::CrankNicolson => {
                add_laplacian_axis(v, grid, 0, 0.5 * dt * mu, &mut rhs);
                add_laplacian_axis(v, grid, 1, dt * mu, &mut rhs);
                solve_axis(&mut rhs, grid, 0, 0.5 * dt * mu);
                add_laplacian_axis(v, grid, 1, -0.5 * dt * mu, &mut rhs);
                solve_axis(&mut rhs, grid, 1, 0.5 * dt * mu);
            }
        }
    }
    Field::new(grid.clone(), rhs).map_err(ParabolicError::from)
}

/// `n_steps` steps of size `dt` starting from `w_start` at `t0`.
pub fn solve_parabolic_window(
    problem: &ParabolicProblem,
    w_start: &Field,
    t0: f64,
    n_steps: usize,
    dt: f64,
    scheme: ParabolicScheme,
) -> Result<Trace, ParabolicError> {
    let grid = problem.grid();
    let mut trace = Trace::new(t0, w_start.clone());
    let mut w = w_start.clone();
    for k in 0..n_steps {
        let tk = t0 + k as f64 * dt;
        let s = tk + scheme.coeff_offset() * dt;
        let bb = problem.reaction.sample(grid, s);
        let src = problem.source.sample(grid, s);
        w = step_parabolic(&w, &bb, &src, problem.mu, scheme, dt)?;
        trace.push(s, t0 + (k + 1) as f64 * dt, w.clone());
    }
    Ok(trace)
}

/// Solves on `[0, t_end]` with the largest step `≤ dt` dividing `t_end`.
pub fn solve_parabolic(
    problem: &ParabolicProblem,
    t_end: f64,
    scheme: ParabolicScheme,
    dt: f64,
) -> Result<Trace, ParabolicError> {
    if !(t_end > 0.0) || !(dt > 0.0) {
        return Err(ParabolicError::InvalidStep(dt));
    }
    let n = ((t_end / dt) - 1e-9).ceil().max(1.0) as usize;
    solve_parabolic_window(problem, &problem.w0, 0.0, n, t_end / n as f64, scheme)
}

/// Coefficient norms at the trace's coefficient sample times.
struct CoeffNorms {
    react_linf: Vec<f64>,
    src_l1: Vec<f64>,
    src_linf: Vec<f64>,
    src_tv: Vec<f64>,
}

fn coeff_norms(trace: &Trace, problem: &ParabolicProblem) -> CoeffNorms {
    let grid = problem.grid();
    let mut c = CoeffNorms {
        react_linf: Vec::new(),
        src_l1: Vec::new(),
        src_linf: Vec::new(),
        src_tv: Vec::new(),
    };
    for &s in &trace.coeff_times {
        let bb = problem.reaction.sample(grid, s);
        let src = problem.source.sample(grid, s);
        c.react_linf.push(bb.linf());
        c.src_l1.push(src.l1());
        c.src_linf.push(src.linf());
        c.src_tv.push(src.tv());
    }
    c
}

/// Measured norms against the L¹, L∞ and TV a-priori bounds.
#[derive(Debug, Clone, Serialize)]
pub struct ParabolicBounds {
    pub l1: BoundSeries,
    pub linf: BoundSeries,
    pub tv: BoundSeries,
    /// Constant used in the TV bound.
    pub tv_constant: f64,
    /// Smallest constant for which the TV bound holds on this trace.
    pub tv_required_constant: f64,
    pub min_value: f64,
}

/// Evaluates the bounds with the calibrated TV constant.
pub fn check_parabolic_bounds(trace: &Trace, problem: &ParabolicProblem) -> ParabolicBounds {
    check_parabolic_bounds_with(trace, problem, calibration::PARABOLIC_TV_CONSTANT)
}

pub fn check_parabolic_bounds_with(
    trace: &Trace,
    problem: &ParabolicProblem,
    tv_constant: f64,
) -> ParabolicBounds {
    let c = coeff_norms(trace, problem);
    let dts: Vec<f64> = (0..trace.coeff_times.len()).map(|k| trace.dt(k)).collect();
    let int_b = cumulative(&dts, &c.react_linf);
    let sup_b = running_max(&c.react_linf);
    let src_l1 = cumulative(&dts, &c.src_l1);
    let src_linf = cumulative(&dts, &c.src_linf);
    let src_tv = cumulative(&dts, &c.src_tv);
    let w0 = &trace.states[0];
    let (w0_l1, w0_linf, w0_tv) = (w0.l1(), w0.linf(), w0.tv());
    let mut l1 = BoundSeries::new("parabolic_l1");
    let mut linf = BoundSeries::new("parabolic_linf");
    let mut tv = BoundSeries::new("parabolic_tv");
    let mut required: f64 = 0.0;
    for (n, (t, w)) in trace.times.iter().zip(&trace.states).enumerate() {
        let growth = int_b[n].exp();
        l1.push(*t, w.l1(), (w0_l1 + src_l1[n]) * growth);
        linf.push(*t, w.linf(), (w0_linf + src_linf[n]) * growth);
        let elapsed = t - trace.times[0];
        let base = w0_tv + src_tv[n];
        let weight = elapsed.max(0.0).sqrt() * sup_b[n] * (w0_l1 + src_l1[n]) * growth;
        let measured = w.tv();
        tv.push(*t, measured, base + tv_constant * weight);
        let excess = measured - base;
        if excess > 0.0 {
            required = required.max(if weight > 0.0 { excess / weight } else { f64::INFINITY });
        }
    }
    ParabolicBounds {
        l1,
        linf,
        tv,
        tv_constant,
        tv_required_constant: required,
        min_value: trace.min_value(),
    }
}

/// `‖w₁(t) − w₂(t)‖₁` against the two-exponential stability bound.
#[derive(Debug, Clone, Serialize)]
pub struct ParabolicStability {
    pub bound: BoundSeries,
}

pub fn parabolic_stability_experiment(
    p1: &ParabolicProblem,
    p2: &ParabolicProblem,
    t_end: f64,
    scheme: ParabolicScheme,
    dt: f64,
) -> Result<ParabolicStability, ParabolicError> {
    let tr1 = solve_parabolic(p1, t_end, scheme, dt)?;
    let tr2 = solve_parabolic(p2, t_end, scheme, dt)?;
    let grid = p1.grid();
    let dts: Vec<f64> = (0..tr1.coeff_times.len()).map(|k| tr1.dt(k)).collect();
    let mut b1 = Vec::new();
    let mut b2 = Vec::new();
    let mut db = Vec::new();
    let mut dsrc = Vec::new();
    let mut src2 = Vec::new();
    for &s in &tr1.coeff_times {
        let r1 = p1.reaction.sample(grid, s);
        let r2 = p2.reaction.sample(grid, s);
        let s1 = p1.source.sample(grid, s);
        let s2 = p2.source.sample(grid, s);
        b1.push(r1.linf());
        b2.push(r2.linf());
        db.push(r1.sub(&r2).l1());
        dsrc.push(s1.sub(&s2).l1());
        src2.push(s2.linf());
    }
    let int_b1 = cumulative(&dts, &b1);
    let int_b2 = cumulative(&dts, &b2);
    let int_db = cumulative(&dts, &db);
    let int_dsrc = cumulative(&dts, &dsrc);
    let int_src2 = cumulative(&dts, &src2);
    let dw0 = p1.w0.sub(&p2.w0).l1();
    let w02 = p2.w0.linf();
    let mut bound = BoundSeries::new("parabolic_stability");
    for n in 0..tr1.len() {
        let lhs = tr1.states[n].sub(&tr2.states[n]).l1();
        let rhs = (dw0 + int_dsrc[n]) * int_b1[n].exp()
            + int_db[n] * (w02 + int_src2[n]) * (int_b1[n] + int_b2[n]).exp();
        bound.push(tr1.times[n], lhs, rhs);
    }
    Ok(ParabolicStability { bound })
}

/// Space–time quadrature of the weak formulation for each test function:
/// `∫∫ w φ_t + μ w Δφ + (B w + b) φ + ∫ w0 φ(0)`.
///
/// Trapezoid rule over the trace times, midpoint rule over cells.
pub fn weak_residual_parabolic(
    trace: &Trace,
    problem: &ParabolicProblem,
    tests: &[TestFunction],
) -> Vec<f64> {
    let grid = problem.grid();
    let spec = grid.spec();
    let vol = grid.cell_volume();
    let wt = trapezoid_weights(&trace.times);
    let centers = grid.centers();
    let coeffs: Vec<(Field, Field)> = trace
        .times
        .iter()
        .map(|&t| (problem.reaction.sample(grid, t), problem.source.sample(grid, t)))
        .collect();
    tests
        .iter()
        .map(|phi| {
            let mut r = 0.0;
            for (n, (&t, w)) in trace.times.iter().zip(&trace.states).enumerate() {
                let (bb, src) = &coeffs[n];
                let mut s = 0.0;
                for (i, p) in centers.iter().enumerate() {
                    let wi = w.values()[i];
                    s += wi * phi.dt(spec, t, *p)
                        + problem.mu * wi * phi.laplacian(spec, t, *p)
                        + (bb.values()[i] * wi + src.values()[i]) * phi.value(spec, t, *p);
                }
                r += wt[n] * s * vol;
            }
            let t0 = trace.times[0];
            let init: f64 = centers
                .iter()
                .zip(problem.w0.values())
                .map(|(p, w)| w * phi.value(spec, t0, *p))
                .sum();
            r + init * vol
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::source::FnScalar;
    use std::f64::consts::PI;

    fn sine(g: &Arc<Grid>) -> Field {
        Field::from_fn(g, |p| (PI * p[0]).sin()).unwrap()
    }

    #[test]
    fn heat_kernel_examples() {
        let v = heat_kernel(1.0, 1.0 / (4.0 * PI), &[0.0]).unwrap();
        assert!((v - 1.0).abs() < 1e-15);
        assert!(heat_kernel(1.0, 0.0, &[0.0]).is_err());
        assert!(heat_kernel(0.3, 0.2, &[5.0, 1.0]).unwrap() > 0.0);
        // trapezoid over [-20, 20]
        let n = 40_000;
        let h = 40.0 / n as f64;
        let mut s = 0.0;
        for i in 0..=n {
            let x = -20.0 + i as f64 * h;
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            s += w * heat_kernel(0.5, 0.1, &[x]).unwrap();
        }
        assert!((s * h - 1.0).abs() < 1e-8);
    }

    #[test]
    fn green_function_properties() {
        let (mu, l, t) = (1.0, 1.0, 0.1);
        assert_eq!(
            green_interval(mu, t, 0.0, 0.3, 0.7, l, 50),
            green_interval(mu, t, 0.0, 0.7, 0.3, l, 50)
        );
        assert_eq!(green_interval(mu, t, 0.0, 0.0, 0.4, l, 50), 0.0);
        assert_eq!(green_interval(mu, t, 0.0, 1.0, 0.4, l, 50), 0.0);
        for i in 1..=50 {
            for j in 1..=50 {
                let x = i as f64 / 51.0;
                let y = j as f64 / 51.0;
                let g = green_interval(mu, t, 0.0, x, y, l, 200);
                assert!(g >= 0.0);
                assert!(g <= heat_kernel(mu, t, &[x - y]).unwrap() + 1e-8);
            }
        }
    }

    #[test]
    fn duhamel_examples() {
        let g = Grid::interval(0.0, 1.0, 128).unwrap();
        let (mu, t) = (0.1, 0.2);
        let decay = ParabolicProblem::new(mu, sine(&g));
        let w = duhamel_reference(&decay, t, 64).unwrap();
        let exact = sine(&g).scale((-mu * PI * PI * t).exp());
        assert!(w.sub(&exact).linf() < 1e-6);

        let zero = ParabolicProblem::new(mu, Field::zeros(&g));
        assert!(duhamel_reference(&zero, t, 64).unwrap().linf() < 1e-15);

        let forced = ParabolicProblem::new(mu, Field::zeros(&g))
            .with_source(Arc::new(FnScalar(|_t, p: crate::grid::Point| (PI * p[0]).sin())));
        let w = duhamel_reference(&forced, t, 64).unwrap();
        let lam = PI * PI;
        let exact = sine(&g).scale((1.0 - (-mu * lam * t).exp()) / (mu * lam));
        assert!(w.sub(&exact).linf() < 1e-5);

        let g2 = Grid::rectangle((0.0, 1.0), (0.0, 1.0), (8, 8)).unwrap();
        assert!(matches!(
            duhamel_reference(&ParabolicProblem::new(mu, Field::zeros(&g2)), t, 4),
            Err(ParabolicError::Requires1D)
        ));
    }

    #[test]
    fn discrete_eigenmode_step() {
        let g = Grid::interval(0.0, 1.0, 64).unwrap();
        let (mu, dt) = (1.0, 1e-3);
        let z = Field::zeros(&g);
        let w = step_parabolic(&sine(&g), &z, &z, mu, ParabolicScheme::ImplicitEuler, dt).unwrap();
        let h = g.dx()[0];
        let lam_h = (2.0 - 2.0 * (PI * h).cos()) / (h * h);
        let exact = sine(&g).scale(1.0 / (1.0 + dt * mu * lam_h));
        assert!(w.sub(&exact).linf() < 1e-13);
        let cont = sine(&g).scale(1.0 / (1.0 + dt * mu * PI * PI));
        assert!(w.sub(&cont).linf() < 10.0 * h * h * dt);
        let zero = step_parabolic(&z, &z, &z, mu, ParabolicScheme::CrankNicolson, dt).unwrap();
        assert_eq!(zero.linf(), 0.0);
    }

    #[test]
    fn stiff_reaction_rejected() {
        let g = Grid::interval(0.0, 1.0, 16).unwrap();
        let z = Field::zeros(&g);
        let big = Field::constant(&g, -20.0);
        assert!(matches!(
            step_parabolic(&z, &big, &z, 1.0, ParabolicScheme::ImplicitEuler, 0.05),
            Err(ParabolicError::StiffReaction(_))
        ));
    }

    #[test]
    fn two_dimensional_eigenmode() {
        let g = Grid::rectangle((0.0, 1.0), (0.0, 2.0), (32, 32)).unwrap();
        let mode = Field::from_fn(&g, |p| (PI * p[0]).sin() * (PI * p[1] / 2.0).sin()).unwrap();
        let p = ParabolicProblem::new(0.1, mode.clone());
        let t = 0.2;
        let decay = (-0.1 * (PI * PI + PI * PI / 4.0) * t).exp();
        for scheme in [ParabolicScheme::ImplicitEuler, ParabolicScheme::CrankNicolson] {
            let tr = solve_parabolic(&p, t, scheme, 1e-3).unwrap();
            let err = tr.last().sub(&mode.scale(decay)).linf();
            assert!(err < 5e-3, "{scheme:?}: {err}");
        }
    }

    #[test]
    fn saturated_l1_bound_for_constant_reaction() {
        let g = Grid::interval(0.0, 1.0, 64).unwrap();
        let p = ParabolicProblem::new(0.05, sine(&g)).with_reaction(Arc::new(Constant(1.0)));
        let tr = solve_parabolic(&p, 0.2, ParabolicScheme::ImplicitEuler, 1e-3).unwrap();
        let b = check_parabolic_bounds(&tr, &p);
        assert!(b.l1.holds(0.0) && b.linf.holds(0.0));
        assert!(tr.min_value() >= 0.0);
    }

    #[test]
    fn zero_problem_and_heat_contraction() {
        let g = Grid::interval(0.0, 1.0, 32).unwrap();
        let z = ParabolicProblem::new(1.0, Field::zeros(&g));
        let tr = solve_parabolic(&z, 0.1, ParabolicScheme::ImplicitEuler, 1e-2).unwrap();
        assert!(tr.states.iter().all(|f| f.linf() == 0.0));
        let b = check_parabolic_bounds(&tr, &z);
        assert!(b.l1.holds(0.0) && b.linf.holds(0.0) && b.tv.holds(0.0));

        let p = ParabolicProblem::new(1.0, sine(&g));
        let tr = solve_parabolic(&p, 0.1, ParabolicScheme::ImplicitEuler, 1e-2).unwrap();
        let l1: Vec<f64> = tr.states.iter().map(Field::l1).collect();
        assert!(l1.windows(2).all(|w| w[1] <= w[0]));
        let b = check_parabolic_bounds(&tr, &p);
        assert!(b.l1.holds(0.0) && b.tv.holds(0.0));
    }

    #[test]
    fn stability_with_source_shift() {
        let g = Grid::interval(0.0, 1.0, 32).unwrap();
        let p1 = ParabolicProblem::new(0.1, sine(&g));
        let p2 = p1.clone().with_source(Arc::new(Constant(0.01)));
        let r = parabolic_stability_experiment(&p1, &p2, 0.1, ParabolicScheme::ImplicitEuler, 1e-3)
            .unwrap();
        assert!(r.bound.holds(0.0));
        let same = parabolic_stability_experiment(&p1, &p1, 0.1, ParabolicScheme::ImplicitEuler, 1e-3)
            .unwrap();
        assert!(same.bound.entries.iter().all(|e| e.lhs == 0.0));
    }

    #[test]
    fn weak_residual_of_exact_eigenmode() {
        let g = Grid::interval(0.0, 1.0, 64).unwrap();
        let mu = 0.1;
        let t_end = 0.1;
        let p = ParabolicProblem::new(mu, sine(&g));
        let n = 1000;
        let dt = t_end / n as f64;
        let mut tr = Trace::new(0.0, sine(&g));
        for k in 1..=n {
            let t = k as f64 * dt;
            tr.push(t - dt, t, sine(&g).scale((-mu * PI * PI * t).exp()));
        }
        let tests = crate::weak::standard_test_functions(1, 5, t_end);
        for r in weak_residual_parabolic(&tr, &p, &tests) {
            assert!(r.abs() < 1e-6, "{r}");
        }
        let z = ParabolicProblem::new(mu, Field::zeros(&g));
        let tz = solve_parabolic(&z, t_end, ParabolicScheme::ImplicitEuler, 1e-2).unwrap();
        assert!(weak_residual_parabolic(&tz, &z, &tests).iter().all(|r| *r == 0.0));
    }
}
