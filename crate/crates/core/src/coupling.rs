//! The coupled system
//!
//! ```text
//! ∂t u + div(u v(t, w)) = α(t, x, w) u + a
//! ∂t w − μ Δw           = β(t, x, u, w) w + b
//! ```
//!
//! solved by Picard iteration on time windows: the velocity and reaction
//! coefficients are frozen at the previous iterate, the two linear problems
//! are solved independently, and the window is accepted once successive
//! iterates agree in `sup_t (‖Δu‖₁ + ‖Δw‖₁)`.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::calibration;
use crate::error::CouplingError;
use crate::expr::{parse, sample_field, CoeffExpr, Env, SlotKind};
use crate::grid::{DomainSpec, Field, Grid, VectorField};
use crate::hyperbolic::{solve_hyperbolic_window, TransportProblem, CFL_LIMIT};
use crate::nonlocal::{make_kernel, velocity, verify_hypothesis_v, Kernel, VelocityReport};
use crate::parabolic::{solve_parabolic_window, ParabolicProblem, ParabolicScheme};
use crate::source::{ExprSource, FieldSeries, Scalar, VectorSeries};
use crate::trace::{cumulative, BoundSeries};

/// Version tag written into every JSON report.
pub const REPORT_SCHEMA: &str = "hyperpara.report/1";

/// Iterate used to start a Picard window.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub enum InitialIterate {
    /// The window's initial datum held constant in time.
    #[default]
    Datum,
    /// Identically zero.
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PicardOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub initial: InitialIterate,
}

impl Default for PicardOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 12,
            initial: InitialIterate::Datum,
        }
    }
}

/// A validated coupled problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub domain: DomainSpec,
    pub cells: Vec<usize>,
    pub mu: f64,
    pub ell: f64,
    pub kappa: f64,
    pub attract: f64,
    pub k_alpha: f64,
    pub k_beta: f64,
    pub alpha: CoeffExpr,
    pub beta: CoeffExpr,
    pub a: CoeffExpr,
    pub b: CoeffExpr,
    pub u0: CoeffExpr,
    pub w0: CoeffExpr,
    pub t_end: f64,
    pub dt: f64,
    pub snapshot_every: usize,
    pub parabolic_scheme: ParabolicScheme,
    pub picard: PicardOptions,
}

impl Scenario {
    /// Scenario with the given expressions and defaults elsewhere:
    /// `μ = 0.05`, `ℓ = 0.25`, `κ = 0.5`, attraction, `K_α = K_β = 1`,
    /// `T = 0.5`, `dt = 0.0025`, implicit Euler.
    pub fn from_sources(
        domain: DomainSpec,
        cells: Vec<usize>,
        [alpha, beta, a, b, u0, w0]: [&str; 6],
    ) -> Result<Self, CouplingError> {
        Ok(Self {
            domain,
            cells,
            mu: 0.05,
            ell: 0.25,
            kappa: 0.5,
            attract: 1.0,
            k_alpha: 1.0,
            k_beta: 1.0,
            alpha: parse(alpha, SlotKind::Alpha)?,
            beta: parse(beta, SlotKind::Beta)?,
            a: parse(a, SlotKind::SourceA)?,
            b: parse(b, SlotKind::SourceB)?,
            u0: parse(u0, SlotKind::Init)?,
            w0: parse(w0, SlotKind::Init)?,
            t_end: 0.5,
            dt: 0.0025,
            snapshot_every: 10,
            parabolic_scheme: ParabolicScheme::ImplicitEuler,
            picard: PicardOptions::default(),
        })
    }

    pub fn grid(&self) -> Result<Arc<Grid>, CouplingError> {
        Ok(Grid::new(self.domain.clone(), &self.cells)?)
    }

    /// Number of steps and the step actually used (`T / n_steps`).
    pub fn steps(&self) -> (usize, f64) {
        let n = ((self.t_end / self.dt) - 1e-9).ceil().max(1.0) as usize;
        (n, self.t_end / n as f64)
    }

    /// Checks every field; errors carry the scenario-file key path.
    pub fn validate(&self) -> Result<(), CouplingError> {
        let bad = |key: &str, msg: String| {
            Err(CouplingError::InvalidScenario {
                key: key.into(),
                msg,
            })
        };
        for (key, v) in [
            ("model.mu", self.mu),
            ("model.ell", self.ell),
            ("time.T", self.t_end),
            ("time.dt", self.dt),
            ("model.K_alpha", self.k_alpha),
            ("model.K_beta", self.k_beta),
            ("schemes.picard_tol", self.picard.tol),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(key, format!("must be positive and finite, got {v}"));
            }
        }
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return bad("model.kappa", format!("must be nonnegative, got {}", self.kappa));
        }
        if !self.attract.is_finite() || self.attract.abs() != 1.0 {
            return bad("model.attract", format!("must be +1 or -1, got {}", self.attract));
        }
        if self.dt > self.t_end {
            return bad("time.dt", format!("{} exceeds T = {}", self.dt, self.t_end));
        }
        if self.snapshot_every == 0 {
            return bad("time.snapshot_every", "must be at least 1".into());
        }
        if self.picard.max_iter == 0 {
            return bad("schemes.picard_max_iter", "must be at least 1".into());
        }
        let grid = match self.grid() {
            Ok(g) => g,
            Err(e) => return bad("domain", e.to_string()),
        };
        // |v| < κ, so this bounds the CFL number of every step
        let cfl = self.steps().1 * self.kappa / grid.min_dx();
        if cfl > CFL_LIMIT {
            return bad("time.dt", format!("dt·kappa/dx = {cfl:.3} exceeds {CFL_LIMIT}"));
        }
        if let Err(e) = make_kernel(self.ell, &grid) {
            return bad("model.ell", e.to_string());
        }
        Ok(())
    }
}

/// A scenario with its grid, kernel, sampled data and control sources.
#[derive(Clone)]
pub struct Model {
    pub scenario: Scenario,
    pub grid: Arc<Grid>,
    pub kernel: Kernel,
    pub u0: Field,
    pub w0: Field,
    pub a: Scalar,
    pub b: Scalar,
    pub n_steps: usize,
    pub dt: f64,
}

impl Model {
    pub fn new(scenario: &Scenario) -> Result<Self, CouplingError> {
        scenario.validate()?;
        let grid = scenario.grid()?;
        let kernel = make_kernel(scenario.ell, &grid)?;
        let u0 = sample_field(&scenario.u0, &grid, 0.0, None, None)?;
        let w0 = sample_field(&scenario.w0, &grid, 0.0, None, None)?;
        let control = |e: &CoeffExpr| -> Scalar {
            Arc::new(ExprSource::new(e.clone()).expect("control slots exclude u and w"))
        };
        let (n_steps, dt) = scenario.steps();
        Ok(Self {
            scenario: scenario.clone(),
            grid,
            kernel,
            u0,
            w0,
            a: control(&scenario.a),
            b: control(&scenario.b),
            n_steps,
            dt,
        })
    }

    fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }
}

/// Coefficients frozen along one Picard iterate.
#[derive(Clone)]
pub struct Frozen {
    pub velocity: Arc<VectorSeries>,
    pub reaction_u: Arc<FieldSeries>,
    pub reaction_w: Arc<FieldSeries>,
}

/// `c = v(t, w)`, `A = α(t, x, w)`, `B = β(t, x, u, w)` at each stored time,
/// linear in time between snapshots.
pub fn freeze_coefficients(
    model: &Model,
    times: &[f64],
    u: &[Field],
    w: &[Field],
) -> Result<Frozen, CouplingError> {
    let s = &model.scenario;
    let mut vs = Vec::with_capacity(times.len());
    let mut aa = Vec::with_capacity(times.len());
    let mut bb = Vec::with_capacity(times.len());
    for ((&t, ui), wi) in times.iter().zip(u).zip(w) {
        vs.push(velocity(wi, &model.kernel, s.kappa, s.attract));
        aa.push(sample_field(&s.alpha, &model.grid, t, None, Some(wi))?);
        bb.push(sample_field(&s.beta, &model.grid, t, Some(ui), Some(wi))?);
    }
    Ok(Frozen {
        velocity: Arc::new(VectorSeries::new(times.to_vec(), vs)),
        reaction_u: Arc::new(FieldSeries::new(times.to_vec(), aa)),
        reaction_w: Arc::new(FieldSeries::new(times.to_vec(), bb)),
    })
}

/// Successive differences of one window's Picard iterates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowLog {
    pub t0: f64,
    pub t1: f64,
    pub diffs: Vec<f64>,
    pub accepted: bool,
}

/// Converged iterate on one window.
#[derive(Debug, Clone)]
pub struct WindowSolution {
    pub times: Vec<f64>,
    pub u: Vec<Field>,
    pub w: Vec<Field>,
    pub diffs: Vec<f64>,
}

fn sup_l1_sum(u1: &[Field], u2: &[Field], w1: &[Field], w2: &[Field]) -> f64 {
    (0..u1.len())
        .map(|k| u1[k].sub(&u2[k]).l1() + w1[k].sub(&w2[k]).l1())
        .fold(0.0, f64::max)
}

/// Picard iteration on `[t0, t0 + n_steps·dt]` from `(u_start, w_start)`.
///
/// Fails with `NoContraction` when the difference grows after the second
/// iterate or `max_iter` is reached.
pub fn picard_window(
    model: &Model,
    first_step: usize,
    n_steps: usize,
    u_start: &Field,
    w_start: &Field,
    opts: &PicardOptions,
) -> Result<WindowSolution, CouplingError> {
    let s = &model.scenario;
    let dt = model.dt;
    let t0 = model.time(first_step);
    let times: Vec<f64> = (0..=n_steps).map(|k| model.time(first_step + k)).collect();
    let (mut u_it, mut w_it) = match opts.initial {
        InitialIterate::Datum => (vec![u_start.clone(); n_steps + 1], vec![w_start.clone(); n_steps + 1]),
        InitialIterate::Zero => {
            let z = Field::zeros(&model.grid);
            (vec![z.clone(); n_steps + 1], vec![z; n_steps + 1])
        }
    };
    let mut diffs = Vec::new();
    for _ in 0..opts.max_iter {
        let frozen = freeze_coefficients(model, &times, &u_it, &w_it)?;
        let hyp = TransportProblem::new(u_start.clone())
            .with_velocity(frozen.velocity)
            .with_reaction(frozen.reaction_u)
            .with_source(model.a.clone());
        let par = ParabolicProblem::new(s.mu, w_start.clone())
            .with_reaction(frozen.reaction_w)
            .with_source(model.b.clone());
        let (tu, tw) = std::thread::scope(|sc| {
            let hu = sc.spawn(|| solve_hyperbolic_window(&hyp, u_start, t0, n_steps, dt));
            let tw = solve_parabolic_window(&par, w_start, t0, n_steps, dt, s.parabolic_scheme);
            (hu.join().expect("transport solve panicked"), tw)
        });
        let (tu, tw) = (tu?, tw?);
        let d = sup_l1_sum(&tu.states, &u_it, &tw.states, &w_it);
        diffs.push(d);
        u_it = tu.states;
        w_it = tw.states;
        if d < opts.tol {
            return Ok(WindowSolution {
                times,
                u: u_it,
                w: w_it,
                diffs,
            });
        }
        let n = diffs.len();
        if n >= 3 && diffs[n - 1] >= diffs[n - 2] {
            break;
        }
    }
    Err(CouplingError::NoContraction {
        t0,
        t1: t0 + n_steps as f64 * dt,
        diffs,
    })
}

/// Full coupled solution with the Picard log of every window attempt.
#[derive(Debug, Clone)]
pub struct CoupledTrace {
    pub times: Vec<f64>,
    pub u: Vec<Field>,
    pub w: Vec<Field>,
    pub windows: Vec<WindowLog>,
}

/// Norms of both components at one time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoupledNormRow {
    pub t: f64,
    pub u_l1: f64,
    pub u_linf: f64,
    pub u_tv: f64,
    pub w_l1: f64,
    pub w_linf: f64,
    pub w_tv: f64,
}

impl CoupledTrace {
    pub fn norms(&self) -> Vec<CoupledNormRow> {
        self.times
            .iter()
            .zip(self.u.iter().zip(&self.w))
            .map(|(&t, (u, w))| CoupledNormRow {
                t,
                u_l1: u.l1(),
                u_linf: u.linf(),
                u_tv: u.tv(),
                w_l1: w.l1(),
                w_linf: w.linf(),
                w_tv: w.tv(),
            })
            .collect()
    }

    pub fn accepted_windows(&self) -> impl Iterator<Item = &WindowLog> {
        self.windows.iter().filter(|w| w.accepted)
    }
}

/// Solves on `[0, T]` by chained Picard windows. Each window starts at the
/// size suggested by the contraction estimate and is halved on
/// `NoContraction`; a window shorter than `4·dt` is a `WindowCollapse`.
pub fn solve_coupled(scenario: &Scenario) -> Result<CoupledTrace, CouplingError> {
    let model = Model::new(scenario)?;
    solve_model(&model, &scenario.picard)
}

pub fn solve_model(model: &Model, opts: &PicardOptions) -> Result<CoupledTrace, CouplingError> {
    let velocity_report = initial_velocity_report(model)?;
    let consts = HypothesisConstants::declared(&model.scenario, &velocity_report);
    let controls = ControlNorms::sample(model, 0.0)?;
    let mut trace = CoupledTrace {
        times: vec![0.0],
        u: vec![model.u0.clone()],
        w: vec![model.w0.clone()],
        windows: Vec::new(),
    };
    let mut k = 0;
    while k < model.n_steps {
        let remaining = model.n_steps - k;
        let u_start = trace.u.last().expect("nonempty").clone();
        let w_start = trace.w.last().expect("nonempty").clone();
        let data = DataNorms::of(&u_start, &w_start);
        let mut steps = window_steps(&consts, &data, &controls, k, model.dt, remaining);
        loop {
            let t0 = model.time(k);
            if steps < 4.min(remaining) {
                return Err(CouplingError::WindowCollapse {
                    t0,
                    window: steps as f64 * model.dt,
                    min: 4.0 * model.dt,
                });
            }
            match picard_window(model, k, steps, &u_start, &w_start, opts) {
                Ok(sol) => {
                    trace.windows.push(WindowLog {
                        t0,
                        t1: model.time(k + steps),
                        diffs: sol.diffs,
                        accepted: true,
                    });
                    trace.times.extend_from_slice(&sol.times[1..]);
                    trace.u.extend(sol.u.into_iter().skip(1));
                    trace.w.extend(sol.w.into_iter().skip(1));
                    k += steps;
                    break;
                }
                Err(CouplingError::NoContraction { t0, t1, diffs }) => {
                    trace.windows.push(WindowLog {
                        t0,
                        t1,
                        diffs,
                        accepted: false,
                    });
                    steps /= 2;
                }
                Err(e) => return Err(e),
            }
        }
    }
    Ok(trace)
}

/// Norms of the initial data entering the iteration constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DataNorms {
    pub u0_l1: f64,
    pub u0_linf: f64,
    pub u0_tv: f64,
    pub w0_l1: f64,
    pub w0_linf: f64,
    pub w0_tv: f64,
}

impl DataNorms {
    pub fn of(u0: &Field, w0: &Field) -> Self {
        Self {
            u0_l1: u0.l1(),
            u0_linf: u0.linf(),
            u0_tv: u0.tv(),
            w0_l1: w0.l1(),
            w0_linf: w0.linf(),
            w0_tv: w0.tv(),
        }
    }
}

/// Running time integrals of the control norms at step boundaries.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlNorms {
    pub a_l1: Vec<f64>,
    pub a_linf: Vec<f64>,
    pub a_tv: Vec<f64>,
    pub b_l1: Vec<f64>,
    pub b_linf: Vec<f64>,
    pub b_tv: Vec<f64>,
}

impl ControlNorms {
    /// Left sums over the steps; the parabolic source is sampled at
    /// `t_k + offset·dt` to match the scheme.
    pub fn sample(model: &Model, b_offset: f64) -> Result<Self, CouplingError> {
        let dts = vec![model.dt; model.n_steps];
        let mut raw = [(); 6].map(|_| Vec::with_capacity(model.n_steps));
        for k in 0..model.n_steps {
            let t = model.time(k);
            let a = model.a.sample(&model.grid, t);
            let b = model.b.sample(&model.grid, t + b_offset * model.dt);
            for (slot, v) in raw.iter_mut().zip([a.l1(), a.linf(), a.tv(), b.l1(), b.linf(), b.tv()]) {
                if !v.is_finite() {
                    return Err(CouplingError::InvalidScenario {
                        key: "coefficients".into(),
                        msg: format!("non-finite control norm at t = {t}"),
                    });
                }
                slot.push(v);
            }
        }
        let [a_l1, a_linf, a_tv, b_l1, b_linf, b_tv] = raw.map(|f| cumulative(&dts, &f));
        Ok(Self {
            a_l1,
            a_linf,
            a_tv,
            b_l1,
            b_linf,
            b_tv,
        })
    }

    /// Integral over steps `[k0, k1)`.
    fn over(v: &[f64], k0: usize, k1: usize) -> f64 {
        v[k1] - v[k0]
    }
}

/// Constants entering the iteration bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HypothesisConstants {
    pub k_alpha: f64,
    pub k_beta: f64,
    pub k_v: f64,
    pub c_v: f64,
    pub tv_parabolic: f64,
    pub tv_transport: f64,
}

impl HypothesisConstants {
    /// Declared `K_α`, `K_β` with empirical `K_v`, `C_v`.
    pub fn declared(s: &Scenario, v: &VelocityReport) -> Self {
        Self {
            k_alpha: s.k_alpha,
            k_beta: s.k_beta,
            k_v: v.k_v(),
            c_v: v.c_v(),
            tv_parabolic: calibration::PARABOLIC_TV_CONSTANT,
            tv_transport: calibration::HYPERBOLIC_TV_CONSTANT,
        }
    }

    /// Combined Lipschitz constant `max(K_α, K_β, K_v)`.
    pub fn combined(&self) -> f64 {
        self.k_alpha.max(self.k_beta).max(self.k_v)
    }
}

/// The iteration constants at elapsed time `t` of a window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterationConstants {
    pub t: f64,
    pub c_w1: f64,
    pub c_winf: f64,
    pub c_wtv: f64,
    pub c_u1: f64,
    pub c_uinf: f64,
    pub c_utv: f64,
    pub c_uw: f64,
}

/// Control integrals over a window `[t0, t0 + t]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ControlIntegrals {
    pub a_l1: f64,
    pub a_linf: f64,
    pub a_tv: f64,
    pub b_l1: f64,
    pub b_linf: f64,
    pub b_tv: f64,
}

impl ControlIntegrals {
    fn between(c: &ControlNorms, k0: usize, k1: usize) -> Self {
        Self {
            a_l1: ControlNorms::over(&c.a_l1, k0, k1),
            a_linf: ControlNorms::over(&c.a_linf, k0, k1),
            a_tv: ControlNorms::over(&c.a_tv, k0, k1),
            b_l1: ControlNorms::over(&c.b_l1, k0, k1),
            b_linf: ControlNorms::over(&c.b_linf, k0, k1),
            b_tv: ControlNorms::over(&c.b_tv, k0, k1),
        }
    }
}

/// `C_{w,1}`, `C_{w,∞}`, `C_w^TV`, `C_{u,1}`, `C_{u,∞}`, `C_u^TV` and the
/// contraction constant `C_{u,w}` at elapsed time `t`.
pub fn iteration_constants(
    k: &HypothesisConstants,
    d: &DataNorms,
    c: &ControlIntegrals,
    t: f64,
) -> IterationConstants {
    let eb = (k.k_beta * t).exp();
    let c_w1 = eb * (d.w0_l1 + c.b_l1);
    let c_winf = eb * (d.w0_linf + c.b_linf);
    let c_wtv = d.w0_tv + c.b_tv + k.tv_parabolic * t.sqrt() * k.k_beta * c_w1;
    let grow_a = k.k_alpha * t * (1.0 + c_winf);
    let grow_v = k.k_v * t * c_w1;
    let c_u1 = (d.u0_l1 + c.a_l1) * grow_a.exp();
    let c_uinf = (d.u0_linf + c.a_linf) * (grow_a + grow_v).exp();
    let c_utv = (grow_a + grow_v).exp() * (d.u0_tv + k.tv_transport * d.u0_linf + c.a_tv)
        + c_uinf * (k.k_alpha * t * (1.0 + c_winf + c_wtv) + k.c_v * t * c_w1);
    let c_uw = k.k_beta * eb * c_winf
        + c_u1 * k.c_v
        + k.k_v * c_utv
        + k.k_alpha * grow_a.exp() * (d.u0_linf + c.a_linf);
    IterationConstants {
        t,
        c_w1,
        c_winf,
        c_wtv,
        c_u1,
        c_uinf,
        c_utv,
        c_uw,
    }
}

/// Largest window (in steps, within `[8, remaining]`) satisfying
/// `C_{u,w}(t) t < ½` from step `k`.
fn window_steps(
    consts: &HypothesisConstants,
    data: &DataNorms,
    controls: &ControlNorms,
    k: usize,
    dt: f64,
    remaining: usize,
) -> usize {
    let lo = 8.min(remaining);
    let ok = |m: usize| {
        let t = m as f64 * dt;
        let c = iteration_constants(consts, data, &ControlIntegrals::between(controls, k, k + m), t);
        c.c_uw * t < 0.5
    };
    let mut m = lo;
    while m < remaining && ok(m + 1) {
        m += 1;
    }
    m
}

/// Synthetic samples in the linear regime of the velocity map plus `w0`.
fn initial_velocity_report(model: &Model) -> Result<VelocityReport, CouplingError> {
    let g = &model.grid;
    let spec = g.spec().clone();
    let mut samples = vec![model.w0.clone()];
    for (k, c) in [0.3, 0.5, 0.7].iter().enumerate() {
        let f = Field::from_fn(g, |p| {
            let mut r2 = 0.0;
            for (d, ax) in spec.axes().iter().enumerate() {
                let z = (p[d] - ax.lo) / ax.length() - c;
                r2 += z * z;
            }
            1e-3 * (k + 1) as f64 * (-r2 / 0.01).exp()
        })?;
        samples.push(f);
    }
    Ok(verify_hypothesis_v(&model.kernel, model.scenario.kappa, &samples)?)
}

/// Sampled hypothesis quotients for `α` and `β` over the states of a trace.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct SampledReactionConstants {
    pub alpha_lipschitz: f64,
    pub alpha_growth: f64,
    pub alpha_tv: f64,
    pub beta_lipschitz: f64,
    pub beta_sup: f64,
}

impl SampledReactionConstants {
    pub fn k_alpha(&self) -> f64 {
        self.alpha_lipschitz.max(self.alpha_growth).max(self.alpha_tv)
    }

    pub fn k_beta(&self) -> f64 {
        self.beta_lipschitz.max(self.beta_sup)
    }
}

/// Centered-difference estimates of the `α`, `β` hypotheses at every
/// stored state of `trace`.
pub fn sample_reaction_constants(
    scenario: &Scenario,
    grid: &Arc<Grid>,
    trace: &CoupledTrace,
) -> Result<SampledReactionConstants, CouplingError> {
    let mut r = SampledReactionConstants::default();
    let h = 1e-6;
    let centers = grid.centers();
    for ((&t, u), w) in trace.times.iter().zip(&trace.u).zip(&trace.w) {
        for (i, p) in centers.iter().enumerate() {
            let (ui, wi) = (u.values()[i], w.values()[i]);
            let env = Env::at(t, p[0], p[1]);
            let al = |w: f64| scenario.alpha.eval(&env.with_w(w));
            let be = |u: f64, w: f64| scenario.beta.eval(&env.with_u(u).with_w(w));
            let da = (al(wi + h)? - al(wi - h)?).abs() / (2.0 * h);
            let du = (be(ui + h, wi)? - be(ui - h, wi)?).abs() / (2.0 * h);
            let dw = (be(ui, wi + h)? - be(ui, wi - h)?).abs() / (2.0 * h);
            r.alpha_lipschitz = r.alpha_lipschitz.max(da);
            if 1.0 + wi > 0.0 {
                r.alpha_growth = r.alpha_growth.max(al(wi)? / (1.0 + wi));
            }
            r.beta_lipschitz = r.beta_lipschitz.max(du.max(dw));
            r.beta_sup = r.beta_sup.max(be(ui, wi)?);
        }
        let a = sample_field(&scenario.alpha, grid, t, None, Some(w))?;
        r.alpha_tv = r.alpha_tv.max(a.tv_interior() / (1.0 + w.linf() + w.tv_interior()));
    }
    Ok(r)
}

/// One tracked inequality with its verdict.
#[derive(Debug, Clone, Serialize)]
pub struct InequalityCheck {
    pub name: String,
    pub pass: bool,
    pub worst_margin: f64,
    pub max_ratio: f64,
    pub series: BoundSeries,
}

impl InequalityCheck {
    fn new(series: BoundSeries) -> Self {
        Self {
            name: series.name.clone(),
            pass: series.holds(1e-9),
            worst_margin: series.worst_margin(),
            max_ratio: series.max_ratio(),
            series,
        }
    }
}

/// A-priori ledger of a coupled run.
#[derive(Debug, Clone, Serialize)]
pub struct BoundsReport {
    pub schema: &'static str,
    pub constants: HypothesisConstants,
    pub velocity: VelocityReport,
    pub sampled: SampledReactionConstants,
    /// Combined Lipschitz constant `max(K_α, K_β, K_v)`.
    pub combined_constant: f64,
    /// Window length satisfying `C_{u,w}(t*) t* < ½` from `t = 0`.
    pub window_size: f64,
    pub iteration_constants: Vec<IterationConstants>,
    pub inequalities: Vec<InequalityCheck>,
    /// Declared constants smaller than their sampled quotients.
    pub flags: Vec<String>,
    pub pass: bool,
}

/// Builds the ledger: iteration constants at every time, the six
/// a-priori inequalities, and flags for under-declared constants.
pub fn compute_bounds_report(
    trace: &CoupledTrace,
    scenario: &Scenario,
) -> Result<BoundsReport, CouplingError> {
    let model = Model::new(scenario)?;
    let stride = (trace.w.len() / 256).max(1);
    let mut samples: Vec<Field> = trace.w.iter().step_by(stride).cloned().collect();
    if samples.last() != trace.w.last() {
        samples.push(trace.w.last().expect("nonempty").clone());
    }
    let velocity = verify_hypothesis_v(&model.kernel, scenario.kappa, &samples)?;
    let consts = HypothesisConstants::declared(scenario, &velocity);
    let sampled = sample_reaction_constants(scenario, &model.grid, trace)?;
    let controls_u = ControlNorms::sample(&model, 0.0)?;
    let controls_w = ControlNorms::sample(&model, scenario.parabolic_scheme.coeff_offset())?;
    let data = DataNorms::of(&model.u0, &model.w0);
    let c = consts.combined();

    let mut names = [
        "w_l1",
        "w_linf",
        "u_l1",
        "u_linf",
        "w_tv",
        "u_tv",
    ]
    .map(BoundSeries::new);
    let mut rows = Vec::with_capacity(trace.times.len());
    for (k, &t) in trace.times.iter().enumerate() {
        let mut ints = ControlIntegrals::between(&controls_u, 0, k);
        let w_ints = ControlIntegrals::between(&controls_w, 0, k);
        ints.b_l1 = w_ints.b_l1;
        ints.b_linf = w_ints.b_linf;
        ints.b_tv = w_ints.b_tv;
        let ic = iteration_constants(&consts, &data, &ints, t);
        let (u, w) = (&trace.u[k], &trace.w[k]);
        let w1 = (c * t).exp() * (data.w0_l1 + ints.b_l1);
        let winf = (c * t).exp() * (data.w0_linf + ints.b_linf);
        let cw = w1.max(winf);
        names[0].push(t, w.l1(), w1);
        names[1].push(t, w.linf(), winf);
        names[2].push(t, u.l1(), (data.u0_l1 + ints.a_l1) * (c * t * (1.0 + cw)).exp());
        names[3].push(t, u.linf(), (data.u0_linf + ints.a_linf) * (c * t * (1.0 + 2.0 * cw)).exp());
        names[4].push(t, w.tv(), ic.c_wtv);
        names[5].push(t, u.tv(), ic.c_utv);
        rows.push(ic);
    }
    let inequalities: Vec<InequalityCheck> = names.into_iter().map(InequalityCheck::new).collect();
    let mut flags = Vec::new();
    if sampled.k_alpha() > scenario.k_alpha * (1.0 + 1e-6) {
        flags.push(format!(
            "sampled K_alpha {:.6e} exceeds declared {:.6e}",
            sampled.k_alpha(),
            scenario.k_alpha
        ));
    }
    if sampled.k_beta() > scenario.k_beta * (1.0 + 1e-6) {
        flags.push(format!(
            "sampled K_beta {:.6e} exceeds declared {:.6e}",
            sampled.k_beta(),
            scenario.k_beta
        ));
    }
    let controls0 = ControlNorms::sample(&model, 0.0)?;
    let window = window_steps(&consts, &data, &controls0, 0, model.dt, model.n_steps) as f64 * model.dt;
    let pass = inequalities.iter().all(|i| i.pass);
    Ok(BoundsReport {
        schema: REPORT_SCHEMA,
        constants: consts,
        velocity,
        sampled,
        combined_constant: c,
        window_size: window,
        iteration_constants: rows,
        inequalities,
        flags,
        pass,
    })
}

/// What a perturbation experiment modifies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Target {
    U0,
    W0,
    A,
    B,
}

impl Target {
    fn is_control(self) -> bool {
        matches!(self, Target::A | Target::B)
    }
}

/// Spatial profile of a perturbation. Both variants are nonnegative and
/// vanish on `∂Ω`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum Shape {
    /// `Π_d sin(π ξ_d)` with `ξ_d = (x_d − lo_d) / L_d`.
    #[default]
    Bump,
    /// The bump times `1 + ½ sin(k π ξ_1 + φ)` with `k ∈ 1..=4` and `φ`
    /// drawn from the seed.
    Seeded(u64),
}

impl Shape {
    /// The profile as a `t, x, y` expression over `spec`.
    pub fn expression(&self, spec: &DomainSpec) -> String {
        let names = ["x", "y"];
        let xi = |d: usize| {
            let ax = spec.axes()[d];
            format!("({} - {:?})/{:?}", names[d], ax.lo, ax.length())
        };
        let bump = (0..spec.dim())
            .map(|d| format!("sin(pi*{})", xi(d)))
            .collect::<Vec<_>>()
            .join("*");
        match *self {
            Shape::Bump => bump,
            Shape::Seeded(seed) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let k = rng.random_range(1..=4u32);
                let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                format!("{bump}*(1 + 0.5*sin({k}*pi*{} + {phase:?}))", xi(0))
            }
        }
    }
}

/// `scenario` with `target` replaced by `target + δ·shape`.
pub fn perturbed(scenario: &Scenario, target: Target, delta: f64) -> Result<Scenario, CouplingError> {
    perturbed_with(scenario, target, delta, &Shape::Bump)
}

pub fn perturbed_with(
    scenario: &Scenario,
    target: Target,
    delta: f64,
    shape: &Shape,
) -> Result<Scenario, CouplingError> {
    let profile = shape.expression(&scenario.domain);
    let mut out = scenario.clone();
    let slot = match target {
        Target::U0 => &mut out.u0,
        Target::W0 => &mut out.w0,
        Target::A => &mut out.a,
        Target::B => &mut out.b,
    };
    let src = format!("({}) + {:?}*{}", slot.ast(), delta, profile);
    *slot = parse(&src, slot.slot())?;
    Ok(out)
}

/// `Q(t) = (‖Δu(t)‖₁ + ‖Δw(t)‖₁) / denominator(t)` at one perturbation level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuotientRow {
    pub t: f64,
    pub lhs: f64,
    pub denominator: f64,
    pub quotient: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerturbationLevel {
    pub delta: f64,
    pub rows: Vec<QuotientRow>,
}

/// Quotients at every level and the ratios between consecutive levels.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerturbationReport {
    pub schema: &'static str,
    pub target: Target,
    pub shape: Shape,
    pub levels: Vec<PerturbationLevel>,
    /// `Q_{δ_{j+1}}(t) / Q_{δ_j}(t)` over `t` where both are defined.
    pub ratio_min: Option<f64>,
    pub ratio_max: Option<f64>,
    pub max_lhs: f64,
}

/// Perturbs `target` by `δ·shape` for each `δ`. Data targets are measured
/// against `‖Δu0‖₁ + ‖Δw0‖₁`, control targets against the space-time `L¹`
/// norm of the control difference up to `t`.
pub fn perturbation_experiment(
    scenario: &Scenario,
    target: Target,
    deltas: &[f64],
    shape: &Shape,
) -> Result<PerturbationReport, CouplingError> {
    let base = solve_coupled(scenario)?;
    let base_model = Model::new(scenario)?;
    let mut levels = Vec::with_capacity(deltas.len());
    let mut max_lhs: f64 = 0.0;
    for &delta in deltas {
        let ps = perturbed_with(scenario, target, delta, shape)?;
        let pm = Model::new(&ps)?;
        let pert = solve_model(&pm, &ps.picard)?;
        let denominators: Vec<f64> = if target.is_control() {
            let dts = vec![pm.dt; pm.n_steps];
            let diffs: Vec<f64> = (0..pm.n_steps)
                .map(|k| {
                    let t = pm.time(k);
                    let (p, q) = match target {
                        Target::A => (&pm.a, &base_model.a),
                        _ => (&pm.b, &base_model.b),
                    };
                    p.sample(&pm.grid, t).sub(&q.sample(&pm.grid, t)).l1()
                })
                .collect();
            cumulative(&dts, &diffs)
        } else {
            let d = pm.u0.sub(&base_model.u0).l1() + pm.w0.sub(&base_model.w0).l1();
            vec![d; base.times.len()]
        };
        let rows = base
            .times
            .iter()
            .enumerate()
            .map(|(k, &t)| {
                let lhs = pert.u[k].sub(&base.u[k]).l1() + pert.w[k].sub(&base.w[k]).l1();
                max_lhs = max_lhs.max(lhs);
                let den = denominators[k];
                QuotientRow {
                    t,
                    lhs,
                    denominator: den,
                    quotient: (den > 0.0).then(|| lhs / den),
                }
            })
            .collect();
        levels.push(PerturbationLevel { delta, rows });
    }
    let mut ratios = Vec::new();
    for pair in levels.windows(2) {
        for (r0, r1) in pair[0].rows.iter().zip(&pair[1].rows) {
            if let (Some(q0), Some(q1)) = (r0.quotient, r1.quotient) {
                if q0 > 0.0 {
                    ratios.push(q1 / q0);
                }
            }
        }
    }
    Ok(PerturbationReport {
        schema: REPORT_SCHEMA,
        target,
        shape: *shape,
        levels,
        ratio_min: ratios.iter().copied().reduce(f64::min),
        ratio_max: ratios.iter().copied().reduce(f64::max),
        max_lhs,
    })
}

/// Perturbs `u0` or `w0` by `δ·shape` for each `δ` and reports the
/// quotients against `‖Δu0‖₁ + ‖Δw0‖₁`.
pub fn lipschitz_in_data_experiment(
    scenario: &Scenario,
    target: Target,
    deltas: &[f64],
) -> Result<PerturbationReport, CouplingError> {
    if target.is_control() {
        return Err(CouplingError::InvalidScenario {
            key: "target".into(),
            msg: format!("{target:?} is a control, not an initial datum"),
        });
    }
    perturbation_experiment(scenario, target, deltas, &Shape::Bump)
}

/// Perturbs `a` or `b` by `δ·shape` for each `δ` and reports the quotients
/// against `‖Δa‖_{L¹([0,t]×Ω)} + ‖Δb‖_{L¹([0,t]×Ω)}`.
pub fn stability_in_controls_experiment(
    scenario: &Scenario,
    target: Target,
    deltas: &[f64],
) -> Result<PerturbationReport, CouplingError> {
    if !target.is_control() {
        return Err(CouplingError::InvalidScenario {
            key: "target".into(),
            msg: format!("{target:?} is an initial datum, not a control"),
        });
    }
    perturbation_experiment(scenario, target, deltas, &Shape::Bump)
}

/// Minima of both components; the audit measures, it does not gate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PositivityReport {
    pub u_min: f64,
    pub w_min: f64,
    pub pass: bool,
}

pub fn positivity_audit(trace: &CoupledTrace) -> PositivityReport {
    let min = |fs: &[Field]| fs.iter().map(Field::min).fold(f64::INFINITY, f64::min);
    let (u_min, w_min) = (min(&trace.u), min(&trace.w));
    PositivityReport {
        u_min,
        w_min,
        pass: u_min >= -1e-12 && w_min >= -1e-12,
    }
}

/// Samples `expr` (an `Init` slot) on the scenario grid.
pub fn sample_datum(scenario: &Scenario, expr: &CoeffExpr) -> Result<Field, CouplingError> {
    Ok(sample_field(expr, &scenario.grid()?, 0.0, None, None)?)
}

/// Velocity fields of a trace's `w` snapshots.
pub fn velocities(model: &Model, w: &[Field]) -> Vec<VectorField> {
    w.iter()
        .map(|wi| velocity(wi, &model.kernel, model.scenario.kappa, model.scenario.attract))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scenario(exprs: [&str; 6]) -> Scenario {
        let mut s =
            Scenario::from_sources(DomainSpec::interval(0.0, 1.0).unwrap(), vec![64], exprs).unwrap();
        s.t_end = 0.1;
        s.dt = 0.005;
        s
    }

    #[test]
    fn freeze_examples() {
        let s = scenario(["1-w", "-u", "0", "0", "0", "0"]);
        let m = Model::new(&s).unwrap();
        let z = Field::zeros(&m.grid);
        let w = Field::constant(&m.grid, 0.25);
        let u = Field::from_fn(&m.grid, |p| p[0] * p[0]).unwrap();
        let f = freeze_coefficients(&m, &[0.0, 0.1], &[u.clone(), u.clone()], &[z.clone(), w.clone()]).unwrap();
        assert_eq!(f.velocity.fields()[0].linf(), 0.0);
        assert!(f.reaction_u.fields()[1].values().iter().all(|&a| (a - 0.75).abs() < 1e-15));
        assert_eq!(f.reaction_w.fields()[0], u.scale(-1.0));
    }

    #[test]
    fn zero_scenario_converges_immediately() {
        let s = scenario(["1-w", "-u", "0", "0", "0", "0"]);
        let tr = solve_coupled(&s).unwrap();
        assert!(tr.accepted_windows().all(|w| w.diffs == vec![0.0]));
        assert!(tr.u.iter().chain(&tr.w).all(|f| f.linf() == 0.0));
        let r = compute_bounds_report(&tr, &s).unwrap();
        assert!(r.pass);
        assert!(positivity_audit(&tr).pass);
    }

    #[test]
    fn decoupled_scenario_converges_in_two_iterations() {
        let mut s = scenario(["0.5", "-1", "x", "1", "sin(pi*x)", "sin(pi*x)"]);
        s.kappa = 0.0;
        let m = Model::new(&s).unwrap();
        let sol = picard_window(&m, 0, 10, &m.u0, &m.w0, &s.picard).unwrap();
        assert_eq!(sol.diffs.len(), 2);
        assert!(sol.diffs[1] < 1e-14);
    }

    #[test]
    fn iteration_constants_reduce_to_data_at_zero() {
        let k = HypothesisConstants {
            k_alpha: 1.0,
            k_beta: 2.0,
            k_v: 3.0,
            c_v: 4.0,
            tv_parabolic: 1.0,
            tv_transport: 1.0,
        };
        let d = DataNorms {
            u0_l1: 1.0,
            u0_linf: 2.0,
            u0_tv: 3.0,
            w0_l1: 4.0,
            w0_linf: 5.0,
            w0_tv: 6.0,
        };
        let c = iteration_constants(&k, &d, &ControlIntegrals::default(), 0.0);
        assert_eq!((c.c_w1, c.c_winf, c.c_wtv), (4.0, 5.0, 6.0));
        assert_eq!((c.c_u1, c.c_uinf, c.c_utv), (1.0, 2.0, 5.0));
        // K_β C_{w,∞} + C_{u,1} C_v + K_v C_u^TV + K_α ‖u0‖∞
        assert_eq!(c.c_uw, 2.0 * 5.0 + 4.0 + 3.0 * 5.0 + 2.0);
    }

    #[test]
    fn perturbation_expression_is_slot_valid() {
        let s = scenario(["1-w", "-u", "0.1", "0.1", "1", "1"]);
        let p = perturbed(&s, Target::B, 0.01).unwrap();
        let m0 = Model::new(&s).unwrap();
        let m1 = Model::new(&p).unwrap();
        let d = m1.b.sample(&m1.grid, 0.0).sub(&m0.b.sample(&m0.grid, 0.0));
        assert!((d.max() - 0.01).abs() < 1e-4 && d.min() > 0.0);
        assert!(matches!(
            lipschitz_in_data_experiment(&s, Target::A, &[0.1]),
            Err(CouplingError::InvalidScenario { .. })
        ));
    }

    #[test]
    fn invalid_scenarios_are_rejected() {
        let mut s = scenario(["1-w", "-u", "0", "0", "0", "0"]);
        s.dt = -1.0;
        assert!(matches!(s.validate(), Err(CouplingError::InvalidScenario { .. })));
        let mut s = scenario(["1-w", "-u", "0", "0", "0", "0"]);
        s.kappa = 50.0;
        assert!(matches!(s.validate(), Err(CouplingError::InvalidScenario { .. })));
    }
}
