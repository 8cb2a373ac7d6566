//! Smooth test functions `φ(t, x) = Π_k sin(m_k π (x_k − lo_k)/L_k) · (1 − t/T)²`
//! for the weak formulations. They vanish on `∂Ω` and at `t = T`.

use crate::grid::{DomainSpec, Point};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestFunction {
    pub modes: [u32; 2],
    pub t_end: f64,
}

impl TestFunction {
    pub fn new(modes: [u32; 2], t_end: f64) -> Self {
        Self { modes, t_end }
    }

    fn time(&self, t: f64) -> (f64, f64) {
        let s = 1.0 - t / self.t_end;
        (s * s, -2.0 * s / self.t_end)
    }

    /// Per-axis `(sin, k·cos, −k²·sin)` with `k = mπ/L`.
    fn axis(&self, spec: &DomainSpec, p: Point, axis: usize) -> (f64, f64, f64) {
        if axis >= spec.dim() {
            return (1.0, 0.0, 0.0);
        }
        let a = spec.axes()[axis];
        let k = self.modes[axis] as f64 * std::f64::consts::PI / a.length();
        let arg = k * (p[axis] - a.lo);
        (arg.sin(), k * arg.cos(), -k * k * arg.sin())
    }

    pub fn value(&self, spec: &DomainSpec, t: f64, p: Point) -> f64 {
        let (x, _, _) = self.axis(spec, p, 0);
        let (y, _, _) = self.axis(spec, p, 1);
        x * y * self.time(t).0
    }

    pub fn dt(&self, spec: &DomainSpec, t: f64, p: Point) -> f64 {
        let (x, _, _) = self.axis(spec, p, 0);
        let (y, _, _) = self.axis(spec, p, 1);
        x * y * self.time(t).1
    }

    pub fn grad(&self, spec: &DomainSpec, t: f64, p: Point) -> Point {
        let (x, dx, _) = self.axis(spec, p, 0);
        let (y, dy, _) = self.axis(spec, p, 1);
        let s = self.time(t).0;
        [dx * y * s, x * dy * s]
    }

    pub fn laplacian(&self, spec: &DomainSpec, t: f64, p: Point) -> f64 {
        let (x, _, xx) = self.axis(spec, p, 0);
        let (y, _, yy) = self.axis(spec, p, 1);
        (xx * y + x * yy) * self.time(t).0
    }
}

/// `count` test functions with increasing modes (diagonal modes in 2D).
pub fn standard_test_functions(dim: usize, count: usize, t_end: f64) -> Vec<TestFunction> {
    (1..=count as u32)
        .map(|m| {
            let my = if dim == 2 { 1 + (m - 1) % 2 } else { 0 };
            TestFunction::new([m, my], t_end)
        })
        .collect()
}

/// Trapezoid weights for the (possibly nonuniform) time nodes.
pub(crate) fn trapezoid_weights(times: &[f64]) -> Vec<f64> {
    let n = times.len();
    let mut w = vec![0.0; n];
    for k in 0..n.saturating_sub(1) {
        let h = times[k + 1] - times[k];
        w[k] += 0.5 * h;
        w[k + 1] += 0.5 * h;
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivatives_match_differences() {
        let spec = DomainSpec::rectangle((0.0, 1.0), (0.0, 2.0)).unwrap();
        let phi = TestFunction::new([2, 1], 0.5);
        let (t, p, h) = (0.1, [0.3, 0.7], 1e-5);
        let fd_t = (phi.value(&spec, t + h, p) - phi.value(&spec, t - h, p)) / (2.0 * h);
        assert!((fd_t - phi.dt(&spec, t, p)).abs() < 1e-8);
        let g = phi.grad(&spec, t, p);
        let fd_x = (phi.value(&spec, t, [p[0] + h, p[1]]) - phi.value(&spec, t, [p[0] - h, p[1]]))
            / (2.0 * h);
        assert!((fd_x - g[0]).abs() < 1e-8);
        assert!(phi.value(&spec, 0.5, p).abs() < 1e-15);
        assert!(phi.value(&spec, 0.2, [1.0, 0.3]).abs() < 1e-14);
    }
}
