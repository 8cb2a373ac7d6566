//! Seeded random problem suites for bound checks and constant calibration.
//!
//! Coefficients are short trigonometric sums with analytic derivatives, so
//! every draw is smooth, bounded and reproducible from its seed.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::grid::{Field, Grid, Point};
use crate::hyperbolic::TransportProblem;
use crate::parabolic::ParabolicProblem;
use crate::source::{ScalarSource, VectorSource};

/// `offset + Σ_j c_j sin(k_j·x + ω_j t + φ_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrigSum {
    pub offset: f64,
    pub terms: Vec<TrigTerm>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrigTerm {
    pub coef: f64,
    pub wave: [f64; 2],
    pub omega: f64,
    pub phase: f64,
}

impl TrigSum {
    pub fn constant(offset: f64) -> Self {
        Self {
            offset,
            terms: Vec::new(),
        }
    }

    /// `n_terms` random modes with `|Σ c_j| ≤ amplitude`, wave numbers up
    /// to `max_wave`.
    pub fn random(
        rng: &mut impl Rng,
        dim: usize,
        n_terms: usize,
        amplitude: f64,
        max_wave: f64,
        offset: f64,
    ) -> Self {
        let weights: Vec<f64> = (0..n_terms).map(|_| rng.random_range(0.2..1.0)).collect();
        let total: f64 = weights.iter().sum();
        let terms = weights
            .iter()
            .map(|w| {
                let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                let ky = if dim == 2 {
                    rng.random_range(-max_wave..max_wave)
                } else {
                    0.0
                };
                TrigTerm {
                    coef: sign * amplitude * w / total,
                    wave: [rng.random_range(-max_wave..max_wave), ky],
                    omega: rng.random_range(-3.0..3.0),
                    phase: rng.random_range(0.0..std::f64::consts::TAU),
                }
            })
            .collect();
        Self { offset, terms }
    }

    /// `Σ |c_j|`: the largest deviation from the offset.
    pub fn amplitude(&self) -> f64 {
        self.terms.iter().map(|t| t.coef.abs()).sum()
    }

    fn arg(t: &TrigTerm, time: f64, p: Point) -> f64 {
        t.wave[0] * p[0] + t.wave[1] * p[1] + t.omega * time + t.phase
    }

    pub fn value(&self, time: f64, p: Point) -> f64 {
        self.offset
            + self
                .terms
                .iter()
                .map(|t| t.coef * Self::arg(t, time, p).sin())
                .sum::<f64>()
    }

    pub fn partial(&self, axis: usize, time: f64, p: Point) -> f64 {
        self.terms
            .iter()
            .map(|t| t.coef * t.wave[axis] * Self::arg(t, time, p).cos())
            .sum()
    }
}

impl ScalarSource for TrigSum {
    fn eval(&self, t: f64, p: Point) -> f64 {
        self.value(t, p)
    }
}

/// Velocity with one [`TrigSum`] per component and analytic divergence.
#[derive(Debug, Clone, PartialEq)]
pub struct TrigVelocity {
    pub components: [TrigSum; 2],
    pub dim: usize,
}

impl VectorSource for TrigVelocity {
    fn eval(&self, t: f64, p: Point) -> Point {
        let y = if self.dim == 2 {
            self.components[1].value(t, p)
        } else {
            0.0
        };
        [self.components[0].value(t, p), y]
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn divergence(&self, t: f64, p: Point) -> f64 {
        let mut d = self.components[0].partial(0, t, p);
        if self.dim == 2 {
            d += self.components[1].partial(1, t, p);
        }
        d
    }
}

/// Suite member: a problem with its horizon and step.
#[derive(Clone)]
pub struct Case<P> {
    pub problem: P,
    pub t_end: f64,
    pub dt: f64,
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn suite_grid(index: usize) -> Arc<Grid> {
    if index % 4 == 3 {
        Grid::rectangle((0.0, 1.0), (0.0, 1.0), (24, 24)).expect("valid suite grid")
    } else {
        Grid::interval(0.0, 1.0, 64 + 32 * (index % 3)).expect("valid suite grid")
    }
}

/// Nonnegative smooth field vanishing near `∂Ω` plus a nonnegative offset.
fn nonneg_datum(rng: &mut impl Rng, grid: &Arc<Grid>) -> Field {
    let level = rng.random_range(0.0..0.3);
    let bumps: Vec<(Point, f64, f64)> = (0..3)
        .map(|_| {
            (
                [rng.random_range(0.2..0.8), rng.random_range(0.2..0.8)],
                rng.random_range(0.1..0.25),
                rng.random_range(0.2..2.0),
            )
        })
        .collect();
    let dim = grid.dim();
    Field::from_fn(grid, |p| {
        level
            + bumps
                .iter()
                .map(|(c, w, h)| {
                    let mut r2 = (p[0] - c[0]).powi(2);
                    if dim == 2 {
                        r2 += (p[1] - c[1]).powi(2);
                    }
                    h * (-r2 / (w * w)).exp()
                })
                .sum::<f64>()
    })
    .expect("finite datum")
}

fn random_parabolic(rng: &mut impl Rng, grid: &Arc<Grid>) -> ParabolicProblem {
    let dim = grid.dim();
    let mu = rng.random_range(0.01..0.2);
    let (amp, offset) = (rng.random_range(0.5..3.0), rng.random_range(-1.0..1.0));
    let react = TrigSum::random(rng, dim, 3, amp, 12.0, offset);
    let src_amp = rng.random_range(0.0..1.0);
    let src = TrigSum::random(rng, dim, 2, src_amp, 10.0, src_amp);
    ParabolicProblem::new(mu, nonneg_datum(rng, grid))
        .with_reaction(Arc::new(react))
        .with_source(Arc::new(src))
}

/// `count` parabolic problems with bounded `B`, `b ≥ 0`, `w0 ≥ 0`.
pub fn parabolic_suite(seed: u64, count: usize) -> Vec<Case<ParabolicProblem>> {
    let mut r = rng(seed);
    (0..count)
        .map(|i| {
            let grid = suite_grid(i);
            Case {
                problem: random_parabolic(&mut r, &grid),
                t_end: 0.5,
                dt: 2e-3,
            }
        })
        .collect()
}

/// `count` pairs of parabolic problems on a common grid with independent
/// data, reactions and sources.
pub fn parabolic_pair_suite(
    seed: u64,
    count: usize,
) -> Vec<(ParabolicProblem, ParabolicProblem, f64, f64)> {
    let mut r = rng(seed);
    (0..count)
        .map(|i| {
            let grid = suite_grid(i);
            let p1 = random_parabolic(&mut r, &grid);
            let mut p2 = random_parabolic(&mut r, &grid);
            p2.mu = p1.mu;
            (p1, p2, 0.5, 2e-3)
        })
        .collect()
}

fn random_velocity(rng: &mut impl Rng, dim: usize, c_max: f64) -> TrigVelocity {
    let mut comp = || {
        let offset = rng.random_range(-0.5 * c_max..0.5 * c_max);
        TrigSum::random(rng, dim, 2, 0.5 * c_max, 6.0, offset)
    };
    TrigVelocity {
        components: [comp(), comp()],
        dim,
    }
}

fn random_transport(rng: &mut impl Rng, grid: &Arc<Grid>) -> TransportProblem {
    let dim = grid.dim();
    let c = random_velocity(rng, dim, 1.0);
    let (amp, offset) = (rng.random_range(0.3..2.0), rng.random_range(-1.0..1.0));
    let react = TrigSum::random(rng, dim, 3, amp, 10.0, offset);
    let src_amp = rng.random_range(0.0..1.0);
    let src = TrigSum::random(rng, dim, 2, src_amp, 8.0, src_amp);
    TransportProblem::new(nonneg_datum(rng, grid))
        .with_velocity(Arc::new(c))
        .with_reaction(Arc::new(react))
        .with_source(Arc::new(src))
}

/// Step for `|c| ≤ 1` at CFL 0.8.
fn transport_dt(grid: &Grid) -> f64 {
    0.8 * grid.min_dx()
}

/// `count` transport problems with `|c| ≤ 1`, bounded `A`, `a ≥ 0`, `u0 ≥ 0`.
pub fn hyperbolic_suite(seed: u64, count: usize) -> Vec<Case<TransportProblem>> {
    let mut r = rng(seed);
    (0..count)
        .map(|i| {
            let grid = suite_grid(i);
            Case {
                problem: random_transport(&mut r, &grid),
                t_end: 0.5,
                dt: transport_dt(&grid),
            }
        })
        .collect()
}

/// Pairs differing only in the reaction coefficient.
pub fn reaction_pair_suite(
    seed: u64,
    count: usize,
) -> Vec<(TransportProblem, TransportProblem, f64, f64)> {
    let mut r = rng(seed);
    (0..count)
        .map(|i| {
            let grid = suite_grid(i);
            let p1 = random_transport(&mut r, &grid);
            let dim = grid.dim();
            let (amp, offset) = (r.random_range(0.3..2.0), r.random_range(-1.0..1.0));
            let react = TrigSum::random(&mut r, dim, 3, amp, 10.0, offset);
            let p2 = p1.clone().with_reaction(Arc::new(react));
            (p1, p2, 0.5, transport_dt(&grid))
        })
        .collect()
}

/// Pairs differing only in the velocity.
pub fn velocity_pair_suite(
    seed: u64,
    count: usize,
) -> Vec<(TransportProblem, TransportProblem, f64, f64)> {
    let mut r = rng(seed);
    (0..count)
        .map(|i| {
            let grid = suite_grid(i);
            let p1 = random_transport(&mut r, &grid);
            let p2 = p1.clone().with_velocity(Arc::new(random_velocity(&mut r, grid.dim(), 1.0)));
            (p1, p2, 0.5, transport_dt(&grid))
        })
        .collect()
}
