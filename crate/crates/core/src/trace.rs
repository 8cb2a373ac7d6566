//! Time traces produced by the solvers and the bound ledgers built on them.

use serde::Serialize;

use crate::grid::Field;

/// Solution snapshots at every step.
///
/// `coeff_times[k]` is the time at which the coefficients driving step
/// `k → k+1` were sampled; bound checks reuse it so that their time
/// quadratures match the scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub times: Vec<f64>,
    pub states: Vec<Field>,
    pub coeff_times: Vec<f64>,
}

/// `(t, ‖f‖₁, ‖f‖∞, TV(f))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormRow {
    pub t: f64,
    pub l1: f64,
    pub linf: f64,
    pub tv: f64,
}

impl Trace {
    pub fn new(t0: f64, state: Field) -> Self {
        Self {
            times: vec![t0],
            states: vec![state],
            coeff_times: Vec::new(),
        }
    }

    pub fn push(&mut self, coeff_t: f64, t: f64, state: Field) {
        self.coeff_times.push(coeff_t);
        self.times.push(t);
        self.states.push(state);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> &Field {
        self.states.last().expect("trace holds the initial state")
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().expect("trace holds the initial time")
    }

    /// Length of step `k`.
    pub fn dt(&self, k: usize) -> f64 {
        self.times[k + 1] - self.times[k]
    }

    pub fn norms(&self) -> Vec<NormRow> {
        self.times
            .iter()
            .zip(&self.states)
            .map(|(&t, f)| NormRow {
                t,
                l1: f.l1(),
                linf: f.linf(),
                tv: f.tv(),
            })
            .collect()
    }

    pub fn min_value(&self) -> f64 {
        self.states.iter().map(Field::min).fold(f64::INFINITY, f64::min)
    }

    /// `sup_k ‖self_k − other_k‖₁` over common snapshots.
    pub fn sup_l1_distance(&self, other: &Trace) -> f64 {
        self.states
            .iter()
            .zip(&other.states)
            .map(|(a, b)| a.sub(b).l1())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundEntry {
    pub t: f64,
    pub lhs: f64,
    pub rhs: f64,
}

impl BoundEntry {
    pub fn margin(&self) -> f64 {
        self.rhs - self.lhs
    }

    /// `lhs ≤ rhs + rel·|rhs|`
    pub fn holds(&self, rel: f64) -> bool {
        self.lhs <= self.rhs + rel * self.rhs.abs()
    }
}

/// One inequality tracked over time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundSeries {
    pub name: String,
    pub entries: Vec<BoundEntry>,
}

impl BoundSeries {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, t: f64, lhs: f64, rhs: f64) {
        self.entries.push(BoundEntry { t, lhs, rhs });
    }

    pub fn holds(&self, rel: f64) -> bool {
        self.entries.iter().all(|e| e.holds(rel))
    }

    /// Smallest `rhs − lhs`.
    pub fn worst_margin(&self) -> f64 {
        self.entries
            .iter()
            .map(BoundEntry::margin)
            .fold(f64::INFINITY, f64::min)
    }

    /// Largest `lhs / rhs` (0 when both vanish).
    pub fn max_ratio(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| {
                if e.rhs > 0.0 {
                    e.lhs / e.rhs
                } else if e.lhs > 0.0 {
                    f64::INFINITY
                } else {
                    0.0
                }
            })
            .fold(0.0, f64::max)
    }
}

/// Running left-endpoint sums `Σ_{k<n} dt_k · f_k` for `n = 0..=N`.
pub(crate) fn cumulative(dts: &[f64], f: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(dts.len() + 1);
    let mut s = 0.0;
    out.push(0.0);
    for (dt, v) in dts.iter().zip(f) {
        s += dt * v;
        out.push(s);
    }
    out
}

/// Running maxima `max_{k<n} f_k` (0 for `n = 0`).
pub(crate) fn running_max(f: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(f.len() + 1);
    let mut m: f64 = 0.0;
    out.push(0.0);
    for v in f {
        m = m.max(*v);
        out.push(m);
    }
    out
}
