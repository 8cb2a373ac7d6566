//! Linear transport `∂t u + div(c u) = A u + a` with zero inflow data.
//!
//! Two solvers are provided:
//!
//! * a characteristics oracle that integrates the representation formula
//!   along backward characteristics (RK4 on the augmented state
//!   `[X, ∫(A − div c), ∫ a·𝓔]`), locating boundary exits by bisection;
//! * a conservative finite-volume upwind scheme with zero inflow ghost
//!   cells, dimension splitting in 2D and an explicit Euler source.

use std::sync::Arc;

use serde::Serialize;

use crate::calibration;
use crate::error::HyperbolicError;
use crate::grid::{gradient, jacobian_linf, Field, Grid, Point, VectorField};
use crate::quad::simpson;
use crate::source::{Constant, ConstantVector, Scalar, Vector};
use crate::trace::{cumulative, running_max, BoundSeries, Trace};
use crate::weak::{trapezoid_weights, TestFunction};

/// Largest admissible `dt · max|c| / min dx`.
pub const CFL_LIMIT: f64 = 0.9;

/// Default number of RK4 steps per unit of backward integration time
/// (at least [`MIN_ODE_STEPS`] per path).
pub const ODE_STEPS_PER_UNIT: f64 = 2000.0;
pub const MIN_ODE_STEPS: usize = 64;

/// `∂t u + div(c u) = A u + a`, `u(0) = u0`.
#[derive(Clone)]
pub struct TransportProblem {
    pub velocity: Vector,
    pub reaction: Scalar,
    pub source: Scalar,
    pub u0: Field,
    /// Pointwise initial datum for the oracle; defaults to interpolating `u0`.
    pub initial: Option<Scalar>,
}

impl TransportProblem {
    /// Pure transport of `u0` by a zero velocity.
    pub fn new(u0: Field) -> Self {
        let dim = u0.grid().dim();
        Self {
            velocity: Arc::new(ConstantVector {
                value: [0.0; 2],
                dim,
            }),
            reaction: Arc::new(Constant(0.0)),
            source: Arc::new(Constant(0.0)),
            u0,
            initial: None,
        }
    }

    pub fn with_velocity(mut self, c: Vector) -> Self {
        self.velocity = c;
        self
    }

    pub fn with_reaction(mut self, a: Scalar) -> Self {
        self.reaction = a;
        self
    }

    pub fn with_source(mut self, a: Scalar) -> Self {
        self.source = a;
        self
    }

    pub fn with_initial(mut self, u0: Scalar) -> Self {
        self.initial = Some(u0);
        self
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.u0.grid()
    }

    fn dim(&self) -> usize {
        self.grid().dim()
    }

    fn initial_at(&self, p: Point) -> f64 {
        match &self.initial {
            Some(f) => f.eval(0.0, p),
            None => self.u0.at(p),
        }
    }

    fn c(&self, t: f64, p: Point) -> Point {
        let mut v = self.velocity.eval(t, p);
        if self.dim() == 1 {
            v[1] = 0.0;
        }
        v
    }
}

/// One stored node of a backward characteristic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PathNode {
    pub t: f64,
    pub x: Point,
    /// `ẋ = c(t, x)` at the node.
    pub velocity: Point,
    /// `∫_t^{t_end} (A − div c)` along the path.
    pub log_weight: f64,
    /// `∫_t^{t_end} a 𝓔` along the path.
    pub source_integral: f64,
}

/// Backward characteristic from `(t_end, x_end)`; nodes have decreasing time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CharPath {
    pub t_end: f64,
    pub x_end: Point,
    pub nodes: Vec<PathNode>,
    /// Entry time `T(t, x)` when the path leaves `Ω̄` before reaching `t = 0`.
    pub exit_time: Option<f64>,
}

impl CharPath {
    pub fn start_time(&self) -> f64 {
        self.exit_time.unwrap_or(0.0)
    }

    pub fn origin(&self) -> Point {
        self.nodes.last().map_or(self.x_end, |n| n.x)
    }

    /// Cubic Hermite interpolation of `X(s)`.
    pub fn position(&self, s: f64) -> Point {
        let nodes = &self.nodes;
        if s >= nodes[0].t {
            return nodes[0].x;
        }
        let k = nodes.partition_point(|n| n.t > s);
        if k >= nodes.len() {
            return nodes[nodes.len() - 1].x;
        }
        let (a, b) = (&nodes[k - 1], &nodes[k]);
        let h = b.t - a.t;
        let th = (s - a.t) / h;
        let h00 = 2.0 * th.powi(3) - 3.0 * th.powi(2) + 1.0;
        let h10 = th.powi(3) - 2.0 * th.powi(2) + th;
        let h01 = -2.0 * th.powi(3) + 3.0 * th.powi(2);
        let h11 = th.powi(3) - th.powi(2);
        std::array::from_fn(|d| h00 * a.x[d] + h10 * h * a.velocity[d] + h01 * b.x[d] + h11 * h * b.velocity[d])
    }
}

type State = [f64; 4];

fn rhs(problem: &TransportProblem, s: f64, y: &State) -> State {
    let p = [y[0], y[1]];
    let c = problem.c(s, p);
    let g = problem.reaction.eval(s, p) - problem.velocity.divergence(s, p);
    let a = problem.source.eval(s, p);
    [c[0], c[1], -g, -a * y[2].exp()]
}

fn rk4(problem: &TransportProblem, s: f64, y: &State, h: f64) -> State {
    let add = |y: &State, k: &State, f: f64| -> State {
        [y[0] + f * k[0], y[1] + f * k[1], y[2] + f * k[2], y[3] + f * k[3]]
    };
    let k1 = rhs(problem, s, y);
    let k2 = rhs(problem, s + 0.5 * h, &add(y, &k1, 0.5 * h));
    let k3 = rhs(problem, s + 0.5 * h, &add(y, &k2, 0.5 * h));
    let k4 = rhs(problem, s + h, &add(y, &k3, h));
    let mut out = *y;
    for d in 0..4 {
        out[d] += h / 6.0 * (k1[d] + 2.0 * k2[d] + 2.0 * k3[d] + k4[d]);
    }
    out
}

fn node(problem: &TransportProblem, t: f64, y: &State) -> PathNode {
    let x = [y[0], y[1]];
    PathNode {
        t,
        x,
        velocity: problem.c(t, x),
        log_weight: y[2],
        source_integral: y[3],
    }
}

fn default_dt_ode(t_end: f64) -> f64 {
    let n = ((t_end * ODE_STEPS_PER_UNIT).ceil() as usize).max(MIN_ODE_STEPS);
    t_end / n as f64
}

/// Integrates `ẋ = c(t, x)` backward from `(t_end, x_end)` to `t = 0` or to
/// the first exit from `Ω̄`.
pub fn trace_characteristic(
    problem: &TransportProblem,
    t_end: f64,
    x_end: Point,
    dt_ode: f64,
) -> CharPath {
    let spec = problem.grid().spec().clone();
    let mut y: State = [x_end[0], if problem.dim() == 2 { x_end[1] } else { 0.0 }, 0.0, 0.0];
    let mut nodes = vec![node(problem, t_end, &y)];
    let mut exit_time = None;
    if t_end <= 0.0 {
        return CharPath {
            t_end,
            x_end,
            nodes,
            exit_time,
        };
    }
    let n_steps = ((t_end / dt_ode) - 1e-9).ceil().max(1.0) as usize;
    let h = t_end / n_steps as f64;
    let tol = 1e-12 * t_end;
    for k in 0..n_steps {
        let s = t_end - k as f64 * h;
        let next = rk4(problem, s, &y, -h);
        if spec.contains_closed([next[0], next[1]]) {
            y = next;
            nodes.push(node(problem, t_end - (k + 1) as f64 * h, &y));
            continue;
        }
        // bisection on the step length: `lo` stays inside, `hi` outside
        let (mut lo, mut hi) = (0.0, h);
        let mut y_lo = y;
        while hi - lo > tol {
            let mid = 0.5 * (lo + hi);
            let trial = rk4(problem, s, &y, -mid);
            if spec.contains_closed([trial[0], trial[1]]) {
                lo = mid;
                y_lo = trial;
            } else {
                hi = mid;
            }
        }
        let t_exit = s - lo;
        if lo > 0.0 {
            nodes.push(node(problem, t_exit, &y_lo));
        }
        exit_time = Some(t_exit);
        break;
    }
    CharPath {
        t_end,
        x_end,
        nodes,
        exit_time,
    }
}

/// `𝓔(τ, t) = exp ∫_τ^t (A − div c)(s, X(s)) ds` along `path`, by composite
/// Simpson on an even subdivision of `[τ, t]` matching the path resolution.
pub fn exponential_weight(path: &CharPath, problem: &TransportProblem, tau: f64, t: f64) -> f64 {
    if t <= tau {
        return 1.0;
    }
    let h_path = if path.nodes.len() > 1 {
        (path.nodes[0].t - path.nodes[1].t).max(1e-300)
    } else {
        t - tau
    };
    let m = 2 * (((t - tau) / h_path).ceil() as usize).max(1);
    let h = (t - tau) / m as f64;
    let samples: Vec<f64> = (0..=m)
        .map(|j| {
            let s = tau + j as f64 * h;
            let p = path.position(s);
            problem.reaction.eval(s, p) - problem.velocity.divergence(s, p)
        })
        .collect();
    simpson(&samples, h).exp()
}

/// Which branch of the representation formula produced a value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Branch {
    /// The backward characteristic reaches `t = 0` inside `Ω`.
    Interior,
    /// The backward characteristic enters through `∂Ω` at `entry_time`.
    Boundary { entry_time: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleValue {
    pub value: f64,
    pub branch: Branch,
}

/// Evaluates the solution at `(t, x)` along characteristics.
pub fn eval_characteristics_solution(problem: &TransportProblem, t: f64, x: Point) -> OracleValue {
    eval_characteristics_solution_with(problem, t, x, default_dt_ode(t.max(1e-300)))
}

pub fn eval_characteristics_solution_with(
    problem: &TransportProblem,
    t: f64,
    x: Point,
    dt_ode: f64,
) -> OracleValue {
    let path = trace_characteristic(problem, t, x, dt_ode);
    let last = path.nodes[path.nodes.len() - 1];
    match path.exit_time {
        None => OracleValue {
            value: problem.initial_at(last.x) * last.log_weight.exp() + last.source_integral,
            branch: Branch::Interior,
        },
        Some(entry_time) => OracleValue {
            value: last.source_integral,
            branch: Branch::Boundary { entry_time },
        },
    }
}

/// Oracle values at every cell center of the problem grid for each time.
pub fn characteristics_trace(problem: &TransportProblem, times: &[f64]) -> Trace {
    let grid = problem.grid();
    let sample = |t: f64| -> Field {
        let v = (0..grid.len())
            .map(|k| eval_characteristics_solution(problem, t, grid.center(k)).value)
            .collect();
        Field::from_parts(grid.clone(), v)
    };
    let mut trace = Trace::new(times[0], sample(times[0]));
    for w in times.windows(2) {
        trace.push(w[0], w[1], sample(w[1]));
    }
    trace
}

/// Normal velocities on cell faces: `x` faces are `(nx+1)·ny`, `y` faces `nx·(ny+1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceVelocity {
    grid: Arc<Grid>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl FaceVelocity {
    pub fn from_fn(grid: &Arc<Grid>, f: impl Fn(Point) -> Point) -> Self {
        let [nx, ny] = grid.shape();
        let [dx, dy] = grid.dx();
        let axes = grid.spec().axes();
        let y_of = |j: usize| {
            if grid.dim() == 2 {
                axes[1].lo + (j as f64 + 0.5) * dy
            } else {
                0.0
            }
        };
        let mut x = Vec::with_capacity((nx + 1) * ny);
        for j in 0..ny {
            for i in 0..=nx {
                x.push(f([axes[0].lo + i as f64 * dx, y_of(j)])[0]);
            }
        }
        let mut y = Vec::new();
        if grid.dim() == 2 {
            y.reserve(nx * (ny + 1));
            for j in 0..=ny {
                for i in 0..nx {
                    let px = axes[0].lo + (i as f64 + 0.5) * dx;
                    y.push(f([px, axes[1].lo + j as f64 * dy])[1]);
                }
            }
        }
        Self {
            grid: grid.clone(),
            x,
            y,
        }
    }

    /// Faces interpolated from cell samples (linear extrapolation at `∂Ω`).
    pub fn from_cells(c: &VectorField) -> Self {
        Self::from_fn(c.grid(), |p| c.at(p))
    }

    pub fn from_source(grid: &Arc<Grid>, c: &dyn crate::source::VectorSource, t: f64) -> Self {
        Self::from_fn(grid, |p| c.eval(t, p))
    }

    pub fn max_abs(&self) -> f64 {
        self.x.iter().chain(&self.y).fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Discrete divergence `Σ_axes (c_{i+½} − c_{i−½}) / dx`.
    pub fn divergence(&self) -> Field {
        let g = &self.grid;
        let [nx, ny] = g.shape();
        let [dx, dy] = g.dx();
        let mut out = vec![0.0; g.len()];
        for j in 0..ny {
            for i in 0..nx {
                let mut d = (self.x[j * (nx + 1) + i + 1] - self.x[j * (nx + 1) + i]) / dx;
                if g.dim() == 2 {
                    d += (self.y[(j + 1) * nx + i] - self.y[j * nx + i]) / dy;
                }
                out[g.index(i, j)] = d;
            }
        }
        Field::from_parts(g.clone(), out)
    }

    fn cfl(&self, dt: f64) -> f64 {
        dt * self.max_abs() / self.grid.min_dx()
    }
}

/// Upwind transport sweep along `axis`.
fn sweep(u: &mut [f64], faces: &FaceVelocity, axis: usize, dt: f64) {
    let g = &faces.grid;
    let [nx, ny] = g.shape();
    let h = g.dx()[axis];
    let (n, stride, lines) = if axis == 0 { (nx, 1, ny) } else { (ny, nx, nx) };
    let face = |l: usize, f: usize| -> f64 {
        if axis == 0 {
            faces.x[l * (nx + 1) + f]
        } else {
            faces.y[f * nx + l]
        }
    };
    let mut flux = vec![0.0; n + 1];
    for l in 0..lines {
        let base = if axis == 0 { l * nx } else { l };
        let at = |i: isize| -> f64 {
            if i < 0 || i >= n as isize {
                0.0
            } else {
                u[base + i as usize * stride]
            }
        };
        for (f, fl) in flux.iter_mut().enumerate() {
            let c = face(l, f);
            *fl = c.max(0.0) * at(f as isize - 1) + c.min(0.0) * at(f as isize);
        }
        for i in 0..n {
            u[base + i * stride] -= dt / h * (flux[i + 1] - flux[i]);
        }
    }
}

fn step_with_faces(
    u: &Field,
    faces: &FaceVelocity,
    a_react: &Field,
    a_src: &Field,
    dt: f64,
) -> Result<Field, HyperbolicError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(HyperbolicError::InvalidStep(dt));
    }
    let cfl = faces.cfl(dt);
    if cfl > CFL_LIMIT {
        return Err(HyperbolicError::CflViolation {
            cfl,
            limit: CFL_LIMIT,
        });
    }
    let mut v = u.values().to_vec();
    sweep(&mut v, faces, 0, dt);
    if u.grid().dim() == 2 {
        sweep(&mut v, faces, 1, dt);
    }
    for ((x, r), s) in v.iter_mut().zip(a_react.values()).zip(a_src.values()) {
        *x += dt * (r * *x + s);
    }
    Field::new(u.grid().clone(), v).map_err(HyperbolicError::from)
}

/// One upwind step with face velocities interpolated from `c`.
pub fn fv_upwind_step(
    u: &Field,
    c: &VectorField,
    a_react: &Field,
    a_src: &Field,
    dt: f64,
) -> Result<Field, HyperbolicError> {
    step_with_faces(u, &FaceVelocity::from_cells(c), a_react, a_src, dt)
}

/// `n_steps` upwind steps from `u_start` at `t0`; coefficients at the left
/// endpoint of each step.
pub fn solve_hyperbolic_window(
    problem: &TransportProblem,
    u_start: &Field,
    t0: f64,
    n_steps: usize,
    dt: f64,
) -> Result<Trace, HyperbolicError> {
    let grid = problem.grid();
    let mut trace = Trace::new(t0, u_start.clone());
    let mut u = u_start.clone();
    for k in 0..n_steps {
        let s = t0 + k as f64 * dt;
        let faces = FaceVelocity::from_source(grid, problem.velocity.as_ref(), s);
        let ar = problem.reaction.sample(grid, s);
        let asrc = problem.source.sample(grid, s);
        u = step_with_faces(&u, &faces, &ar, &asrc, dt)?;
        trace.push(s, t0 + (k + 1) as f64 * dt, u.clone());
    }
    Ok(trace)
}

/// Solves on `[0, t_end]` with the largest step `≤ dt` dividing `t_end`.
pub fn solve_hyperbolic(
    problem: &TransportProblem,
    t_end: f64,
    dt: f64,
) -> Result<Trace, HyperbolicError> {
    if !(t_end > 0.0) || !(dt > 0.0) {
        return Err(HyperbolicError::InvalidStep(dt));
    }
    let n = ((t_end / dt) - 1e-9).ceil().max(1.0) as usize;
    solve_hyperbolic_window(problem, &problem.u0, 0.0, n, t_end / n as f64)
}

/// Largest step satisfying `dt · max|c| / min dx ≤ cfl`, given `max|c|`.
pub fn cfl_dt(grid: &Grid, c_max: f64, cfl: f64) -> f64 {
    if c_max > 0.0 {
        cfl * grid.min_dx() / c_max
    } else {
        f64::INFINITY
    }
}

/// Per-step coefficient norms at the trace's sample times.
#[derive(Debug, Clone, Default)]
struct CoeffNorms {
    react_linf: Vec<f64>,
    react_tv: Vec<f64>,
    src_l1: Vec<f64>,
    src_linf: Vec<f64>,
    src_tv: Vec<f64>,
    div_linf: Vec<f64>,
    jac_linf: Vec<f64>,
    grad_div_l1: Vec<f64>,
}

fn coeff_norms(trace: &Trace, problem: &TransportProblem) -> CoeffNorms {
    let grid = problem.grid();
    let mut c = CoeffNorms::default();
    for &s in &trace.coeff_times {
        let ar = problem.reaction.sample(grid, s);
        let asrc = problem.source.sample(grid, s);
        let faces = FaceVelocity::from_source(grid, problem.velocity.as_ref(), s);
        let div = faces.divergence();
        let cells = problem.velocity.sample(grid, s);
        c.react_linf.push(ar.linf());
        c.react_tv.push(ar.tv());
        c.src_l1.push(asrc.l1());
        c.src_linf.push(asrc.linf());
        c.src_tv.push(asrc.tv());
        c.div_linf.push(div.linf());
        c.jac_linf.push(jacobian_linf(&cells));
        c.grad_div_l1.push(gradient(&div).magnitude().l1());
    }
    c
}

fn dts(trace: &Trace) -> Vec<f64> {
    (0..trace.coeff_times.len()).map(|k| trace.dt(k)).collect()
}

/// Measured norms against the L¹, L∞ and TV bounds for linear transport.
#[derive(Debug, Clone, Serialize)]
pub struct HyperbolicBounds {
    pub l1: BoundSeries,
    pub linf: BoundSeries,
    pub tv: BoundSeries,
    pub tv_constant: f64,
    /// Smallest constant for which the TV bound holds on this trace.
    pub tv_required_constant: f64,
    pub min_value: f64,
}

pub fn check_hyperbolic_bounds(trace: &Trace, problem: &TransportProblem) -> HyperbolicBounds {
    check_hyperbolic_bounds_with(trace, problem, calibration::HYPERBOLIC_TV_CONSTANT)
}

pub fn check_hyperbolic_bounds_with(
    trace: &Trace,
    problem: &TransportProblem,
    tv_constant: f64,
) -> HyperbolicBounds {
    let c = coeff_norms(trace, problem);
    let dts = dts(trace);
    let sup_a = running_max(&c.react_linf);
    let int_a = cumulative(&dts, &c.react_linf);
    let int_div = cumulative(&dts, &c.div_linf);
    let int_jac = cumulative(&dts, &c.jac_linf);
    let src_l1 = cumulative(&dts, &c.src_l1);
    let src_linf = cumulative(&dts, &c.src_linf);
    let src_tv = cumulative(&dts, &c.src_tv);
    let tv_a_plus_graddiv: Vec<f64> = c
        .react_tv
        .iter()
        .zip(&c.grad_div_l1)
        .map(|(a, b)| a + b)
        .collect();
    let int_tv_a = cumulative(&dts, &tv_a_plus_graddiv);
    let u0 = &trace.states[0];
    let (u0_l1, u0_linf, u0_tv) = (u0.l1(), u0.linf(), u0.tv());
    let mut l1 = BoundSeries::new("transport_l1");
    let mut linf = BoundSeries::new("transport_linf");
    let mut tv = BoundSeries::new("transport_tv");
    let mut required: f64 = 0.0;
    for (n, (t, u)) in trace.times.iter().zip(&trace.states).enumerate() {
        let elapsed = t - trace.times[0];
        l1.push(*t, u.l1(), (u0_l1 + src_l1[n]) * (sup_a[n] * elapsed).exp());
        linf.push(*t, u.linf(), (u0_linf + src_linf[n]) * (int_a[n] + int_div[n]).exp());
        let growth = (int_a[n] + int_jac[n]).exp();
        let rest = u0_tv + src_tv[n] + (u0_linf + src_linf[n]) * int_tv_a[n];
        let measured = u.tv();
        tv.push(*t, measured, growth * (rest + tv_constant * u0_linf));
        let excess = measured / growth - rest;
        if excess > 0.0 {
            required = required.max(if u0_linf > 0.0 { excess / u0_linf } else { f64::INFINITY });
        }
    }
    HyperbolicBounds {
        l1,
        linf,
        tv,
        tv_constant,
        tv_required_constant: required,
        min_value: trace.min_value(),
    }
}

/// `‖u₂ − u₁‖₁` for two problems differing only in the reaction coefficient.
pub fn stability_in_a(
    p1: &TransportProblem,
    p2: &TransportProblem,
    t_end: f64,
    dt: f64,
) -> Result<BoundSeries, HyperbolicError> {
    let tr1 = solve_hyperbolic(p1, t_end, dt)?;
    let tr2 = solve_hyperbolic(p2, t_end, dt)?;
    let grid = p1.grid();
    let dts = dts(&tr1);
    let mut sup = Vec::new();
    let mut diff = Vec::new();
    let mut src = Vec::new();
    for &s in &tr1.coeff_times {
        let a1 = p1.reaction.sample(grid, s);
        let a2 = p2.reaction.sample(grid, s);
        sup.push(a1.linf().max(a2.linf()));
        diff.push(a2.sub(&a1).l1());
        src.push(p1.source.sample(grid, s).linf());
    }
    let sup = running_max(&sup);
    let int_diff = cumulative(&dts, &diff);
    let int_src = cumulative(&dts, &src);
    let u0_linf = p1.u0.linf();
    let mut out = BoundSeries::new("transport_stability_reaction");
    for n in 0..tr1.len() {
        let t = tr1.times[n];
        let lhs = tr2.states[n].sub(&tr1.states[n]).l1();
        let rhs = (t * sup[n]).exp() * (u0_linf + int_src[n]) * int_diff[n];
        out.push(t, lhs, rhs);
    }
    Ok(out)
}

/// Velocity-stability series with the constant it was assembled with.
#[derive(Debug, Clone, Serialize)]
pub struct VelocityStability {
    pub series: BoundSeries,
    pub tv_constant: f64,
    /// Smallest constant for which the bound holds on this pair.
    pub required_constant: f64,
}

/// `‖u₂ − u₁‖₁` for two problems differing only in the velocity, against
/// the explicit two-term bound with the calibrated TV constant.
pub fn stability_in_c(
    p1: &TransportProblem,
    p2: &TransportProblem,
    t_end: f64,
    dt: f64,
) -> Result<VelocityStability, HyperbolicError> {
    stability_in_c_with(p1, p2, t_end, dt, calibration::HYPERBOLIC_TV_CONSTANT)
}

pub fn stability_in_c_with(
    p1: &TransportProblem,
    p2: &TransportProblem,
    t_end: f64,
    dt: f64,
    tv_constant: f64,
) -> Result<VelocityStability, HyperbolicError> {
    let tr1 = solve_hyperbolic(p1, t_end, dt)?;
    let tr2 = solve_hyperbolic(p2, t_end, dt)?;
    let grid = p1.grid();
    let dts = dts(&tr1);
    let c1 = coeff_norms(&tr1, p1);
    let mut dc = Vec::new();
    let mut ddiv = Vec::new();
    for &s in &tr1.coeff_times {
        let f1 = FaceVelocity::from_source(grid, p1.velocity.as_ref(), s);
        let f2 = FaceVelocity::from_source(grid, p2.velocity.as_ref(), s);
        let v1 = p1.velocity.sample(grid, s);
        let v2 = p2.velocity.sample(grid, s);
        dc.push(v2.sub(&v1).linf());
        ddiv.push(f2.divergence().sub(&f1.divergence()).linf());
    }
    let sup_a = running_max(&c1.react_linf);
    let int_a = cumulative(&dts, &c1.react_linf);
    let int_jac = cumulative(&dts, &c1.jac_linf);
    let src_l1 = cumulative(&dts, &c1.src_l1);
    let src_linf = cumulative(&dts, &c1.src_linf);
    let src_tv = cumulative(&dts, &c1.src_tv);
    let int_tv_a = cumulative(&dts, &c1.react_tv);
    let int_graddiv = cumulative(&dts, &c1.grad_div_l1);
    let int_dc = cumulative(&dts, &dc);
    let int_ddiv = cumulative(&dts, &ddiv);
    let u0 = &p1.u0;
    let (u0_l1, u0_linf, u0_tv) = (u0.l1(), u0.linf(), u0.tv());
    let mut series = BoundSeries::new("transport_stability_velocity");
    let mut required: f64 = 0.0;
    for n in 0..tr1.len() {
        let t = tr1.times[n];
        let lhs = tr2.states[n].sub(&tr1.states[n]).l1();
        let first = (u0_l1 + src_l1[n]) * (sup_a[n] * t).exp() * int_ddiv[n];
        let bracket = u0_tv
            + src_tv[n]
            + (u0_linf + src_linf[n]) * (int_tv_a[n] + int_graddiv[n]);
        let growth = int_dc[n] * (int_a[n] + int_jac[n]).exp();
        series.push(t, lhs, first + growth * (bracket + tv_constant * u0_linf));
        let excess = lhs - first - growth * bracket;
        if excess > 0.0 {
            let per_unit = growth * u0_linf;
            required = required.max(if per_unit > 0.0 { excess / per_unit } else { f64::INFINITY });
        }
    }
    Ok(VelocityStability {
        series,
        tv_constant,
        required_constant: required,
    })
}

/// Empirical L¹ Lipschitz modulus in time. By the triangle inequality the
/// maximum over all pairs of snapshots is attained on consecutive ones.
pub fn time_lipschitz_check(trace: &Trace) -> f64 {
    (0..trace.len().saturating_sub(1))
        .map(|k| trace.states[k + 1].sub(&trace.states[k]).l1() / trace.dt(k))
        .fold(0.0, f64::max)
}

/// Space–time quadrature of the weak formulation for each test function:
/// `∫∫ u (φ_t + c·∇φ) + (A u + a) φ + ∫ u0 φ(0)`.
pub fn weak_residual_hyperbolic(
    trace: &Trace,
    problem: &TransportProblem,
    tests: &[TestFunction],
) -> Vec<f64> {
    let grid = problem.grid();
    let spec = grid.spec();
    let vol = grid.cell_volume();
    let wt = trapezoid_weights(&trace.times);
    let centers = grid.centers();
    let coeffs: Vec<(VectorField, Field, Field)> = trace
        .times
        .iter()
        .map(|&t| {
            (
                problem.velocity.sample(grid, t),
                problem.reaction.sample(grid, t),
                problem.source.sample(grid, t),
            )
        })
        .collect();
    tests
        .iter()
        .map(|phi| {
            let mut r = 0.0;
            for (n, (&t, u)) in trace.times.iter().zip(&trace.states).enumerate() {
                let (c, ar, asrc) = &coeffs[n];
                let mut s = 0.0;
                for (i, p) in centers.iter().enumerate() {
                    let ui = u.values()[i];
                    let g = phi.grad(spec, t, *p);
                    let cv = c.values()[i];
                    s += ui * (phi.dt(spec, t, *p) + cv[0] * g[0] + cv[1] * g[1])
                        + (ar.values()[i] * ui + asrc.values()[i]) * phi.value(spec, t, *p);
                }
                r += wt[n] * s * vol;
            }
            let t0 = trace.times[0];
            let init: f64 = centers
                .iter()
                .zip(problem.u0.values())
                .map(|(p, u)| u * phi.value(spec, t0, *p))
                .sum();
            r + init * vol
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::source::{FnScalar, FnVector};

    fn unit_grid(n: usize) -> Arc<Grid> {
        Grid::interval(0.0, 1.0, n).unwrap()
    }

    fn constant_c(v: f64) -> Vector {
        Arc::new(ConstantVector {
            value: [v, 0.0],
            dim: 1,
        })
    }

    #[test]
    fn characteristic_examples() {
        let g = unit_grid(16);
        let still = TransportProblem::new(Field::zeros(&g));
        let p = trace_characteristic(&still, 0.5, [0.4, 0.0], 1e-2);
        assert!(p.exit_time.is_none());
        assert!(p.nodes.iter().all(|n| n.x[0] == 0.4));

        let moving = still.clone().with_velocity(constant_c(1.0));
        let p = trace_characteristic(&moving, 0.5, [0.3, 0.0], 1e-2);
        assert!((p.exit_time.unwrap() - 0.2).abs() < 1e-8);
        let p = trace_characteristic(&moving, 0.5, [0.7, 0.0], 1e-2);
        assert!(p.exit_time.is_none());
        assert!((p.origin()[0] - 0.2).abs() < 1e-8);
    }

    #[test]
    fn exponential_weight_examples() {
        let g = unit_grid(16);
        let base = TransportProblem::new(Field::zeros(&g)).with_velocity(constant_c(0.3));
        let path = trace_characteristic(&base, 0.5, [0.8, 0.0], 1e-2);
        assert!((exponential_weight(&path, &base, 0.0, 0.5) - 1.0).abs() < 1e-14);

        let lam = 0.7;
        let grow = TransportProblem::new(Field::zeros(&g)).with_reaction(Arc::new(Constant(lam)));
        let path = trace_characteristic(&grow, 0.5, [0.5, 0.0], 1e-2);
        let e = exponential_weight(&path, &grow, 0.1, 0.5);
        assert!((e - (lam * 0.4).exp()).abs() < 1e-10);

        // c(x) = x on [0, 2]: div c = 1, X(s) = x e^{s − t}
        let g2 = Grid::interval(0.0, 2.0, 16).unwrap();
        let stretch = TransportProblem::new(Field::zeros(&g2)).with_velocity(Arc::new(
            FnVector::with_divergence(1, |_t, p: Point| [p[0], 0.0], |_t, _p| 1.0),
        ));
        let t = 0.6;
        let path = trace_characteristic(&stretch, t, [1.5, 0.0], 1e-3);
        assert!((path.origin()[0] - 1.5 * (-t).exp()).abs() < 1e-10);
        assert!((exponential_weight(&path, &stretch, 0.0, t) - (-t).exp()).abs() < 1e-8);
    }

    #[test]
    fn oracle_examples() {
        let g = unit_grid(64);
        let u0 = Field::from_fn(&g, |p| p[0] * (1.0 - p[0])).unwrap();
        let frozen = TransportProblem::new(u0.clone());
        let v = eval_characteristics_solution(&frozen, 0.3, [0.41, 0.0]);
        assert!((v.value - u0.at([0.41, 0.0])).abs() < 1e-14);

        let bump = |x: f64| {
            if x > 0.0 && x < 0.2 {
                (std::f64::consts::PI * x / 0.2).sin().powi(2)
            } else {
                0.0
            }
        };
        let shift = TransportProblem::new(Field::from_fn(&g, |p| bump(p[0])).unwrap())
            .with_velocity(constant_c(1.0))
            .with_initial(Arc::new(FnScalar(move |_t, p: Point| bump(p[0]))));
        for x in [0.1, 0.3, 0.45, 0.55, 0.6, 0.69, 0.8] {
            let v = eval_characteristics_solution(&shift, 0.5, [x, 0.0]);
            assert!((v.value - bump(x - 0.5)).abs() < 1e-8, "x = {x}");
            assert_eq!(matches!(v.branch, Branch::Boundary { .. }), x < 0.5);
        }

        let accumulate =
            TransportProblem::new(Field::zeros(&g)).with_source(Arc::new(Constant(1.0)));
        let v = eval_characteristics_solution(&accumulate, 0.35, [0.2, 0.0]);
        assert!((v.value - 0.35).abs() < 1e-12);
    }

    #[test]
    fn upwind_step_examples() {
        let g = unit_grid(32);
        let z = Field::zeros(&g);
        let c = VectorField::from_components(&Field::constant(&g, 1.0), None);
        assert_eq!(fv_upwind_step(&z, &c, &z, &z, 0.01).unwrap().linf(), 0.0);

        let u = Field::from_fn(&g, |p| p[0]).unwrap();
        let ar = Field::constant(&g, 2.0);
        let asrc = Field::constant(&g, 0.5);
        let still = VectorField::zeros(&g);
        let out = fv_upwind_step(&u, &still, &ar, &asrc, 0.1).unwrap();
        for i in 0..g.len() {
            let x = u.values()[i];
            assert!((out.values()[i] - (x + 0.1 * (2.0 * x + 0.5))).abs() < 1e-15);
        }
        assert!(matches!(
            fv_upwind_step(&u, &c, &z, &z, 0.1),
            Err(HyperbolicError::CflViolation { .. })
        ));
    }

    #[test]
    fn ode_exactness_and_saturated_bound() {
        let g = unit_grid(16);
        let u0 = Field::from_fn(&g, |p| 1.0 + p[0]).unwrap();
        let k = 0.8;
        let p = TransportProblem::new(u0.clone()).with_reaction(Arc::new(Constant(k)));
        let t = 0.1;
        let tr = solve_hyperbolic(&p, t, 1e-6).unwrap();
        assert!(tr.last().sub(&u0.scale((k * t).exp())).linf() < 1e-6);
        let b = check_hyperbolic_bounds(&tr, &p);
        assert!(b.l1.holds(0.0) && b.linf.holds(0.0));
        let last = b.l1.entries.last().unwrap();
        assert!((last.lhs - last.rhs).abs() / last.rhs < 1e-6);
    }

    #[test]
    fn front_advances_with_speed() {
        let g = unit_grid(200);
        let step = Field::from_fn(&g, |p| if p[0] < 0.3 { 1.0 } else { 0.0 }).unwrap();
        let p = TransportProblem::new(step).with_velocity(constant_c(1.0));
        let tr = solve_hyperbolic(&p, 0.4, 0.5 * g.dx()[0]).unwrap();
        // nothing has reached the outflow boundary yet
        let mass = tr.last().integral();
        assert!((mass - 0.3).abs() < 1e-12);
        let half = (100..g.len()).find(|&i| tr.last().values()[i] < 0.5).unwrap();
        assert!((g.center(half)[0] - 0.7).abs() < 0.05);
        assert!(tr.min_value() >= -1e-12);
    }

    #[test]
    fn stability_in_a_constant_shift() {
        let g = unit_grid(32);
        let u0 = Field::from_fn(&g, |p| (std::f64::consts::PI * p[0]).sin()).unwrap();
        let (a1, d) = (0.5, 0.1);
        let p1 = TransportProblem::new(u0.clone()).with_reaction(Arc::new(Constant(a1)));
        let p2 = TransportProblem::new(u0.clone()).with_reaction(Arc::new(Constant(a1 + d)));
        let s = stability_in_a(&p1, &p2, 0.5, 1e-4).unwrap();
        assert!(s.holds(0.0));
        let last = s.entries.last().unwrap();
        let exact = ((d * 0.5f64).exp() - 1.0) * (a1 * 0.5f64).exp() * u0.l1();
        assert!((last.lhs - exact).abs() / exact < 1e-3);
        let same = stability_in_a(&p1, &p1, 0.5, 1e-3).unwrap();
        assert!(same.entries.iter().all(|e| e.lhs == 0.0));
    }

    #[test]
    fn time_lipschitz_examples() {
        let g = unit_grid(32);
        let still = TransportProblem::new(Field::constant(&g, 1.0));
        let tr = solve_hyperbolic(&still, 0.1, 1e-2).unwrap();
        assert_eq!(time_lipschitz_check(&tr), 0.0);
    }
}
