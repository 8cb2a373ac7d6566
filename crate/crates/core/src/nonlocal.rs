//! Averaging kernel, boundary-renormalized convolution and the nonlocal
//! velocity `v(w) = κ ∇(w ∗_Ω η) / √(1 + |∇(w ∗_Ω η)|²)`.
//!
//! The kernel is `η(x) = ℓ̄ (ℓ⁴ − |x|⁴)⁴` on `|x| ≤ ℓ`, normalized to unit
//! mass in the grid's dimension. Stencil weights are exact cell averages of
//! `η` (Gauss–Legendre; the profile is polynomial inside its support), so the
//! discrete kernel mass matches the continuous one to rounding.

use std::sync::Arc;

use serde::Serialize;

use crate::error::KernelError;
use crate::grid::{gradient, jacobian_linf, divergence, hessian_l1, Field, Grid, Point, VectorField};
use crate::quad::GaussRule;

/// Nodes per axis; the profile has degree 16 in each coordinate.
const GL_X: usize = 12;
const GL_Y: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
struct StencilEntry {
    di: isize,
    dj: isize,
    weight: f64,
}

#[derive(Debug, Clone)]
pub struct Kernel {
    ell: f64,
    dim: usize,
    /// `ℓ̄ · ℓ¹⁶`, so that `η(r) = scale · (1 − (r/ℓ)⁴)⁴`.
    scale: f64,
    grid: Arc<Grid>,
    stencil: Vec<StencilEntry>,
    denominators: Vec<f64>,
}

/// `∫ (1 − s⁴)⁴` over the unit ball of `R^dim`, by Gauss–Legendre in the radius.
fn unit_mass(dim: usize) -> f64 {
    let rule = GaussRule::new(GL_X);
    match dim {
        1 => 2.0 * rule.integrate(0.0, 1.0, |s| (1.0 - s.powi(4)).powi(4)),
        _ => {
            2.0 * std::f64::consts::PI
                * rule.integrate(0.0, 1.0, |s| s * (1.0 - s.powi(4)).powi(4))
        }
    }
}

impl Kernel {
    pub fn ell(&self) -> f64 {
        self.ell
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    /// The constant `ℓ̄` in `η(x) = ℓ̄ (ℓ⁴ − |x|⁴)⁴`.
    pub fn ell_bar(&self) -> f64 {
        self.scale / self.ell.powi(16)
    }

    /// Radial profile `η̃(r)`.
    pub fn profile(&self, r: f64) -> f64 {
        let r = r.abs();
        if r >= self.ell {
            return 0.0;
        }
        let s = r / self.ell;
        self.scale * (1.0 - s.powi(4)).powi(4)
    }

    pub fn eval(&self, z: Point) -> f64 {
        let r2 = if self.dim == 1 { z[0] * z[0] } else { z[0] * z[0] + z[1] * z[1] };
        self.profile(r2.sqrt())
    }

    /// Per-cell `Σ_{y ∈ Ω} η(x − y)·vol`, the discrete `∫_Ω η(x − y) dy`.
    pub fn denominators(&self) -> &[f64] {
        &self.denominators
    }

    /// Number of nonzero stencil entries.
    pub fn stencil_len(&self) -> usize {
        self.stencil.len()
    }

    /// `Σ_stencil weight · vol`: the full discrete kernel mass.
    pub fn stencil_mass(&self) -> f64 {
        self.stencil.iter().map(|e| e.weight).sum::<f64>() * self.grid.cell_volume()
    }

    /// `∫ η(z) dz` over the box `[x0, x1] × [y0, y1]` (the `y` range is
    /// ignored in 1D).
    fn box_mass(&self, x: (f64, f64), y: (f64, f64)) -> f64 {
        let ell = self.ell;
        let gx = GaussRule::new(GL_X);
        let (x0, x1) = (x.0.max(-ell), x.1.min(ell));
        if x1 <= x0 {
            return 0.0;
        }
        if self.dim == 1 {
            // polynomial in x: exact
            return gx.integrate(x0, x1, |s| self.profile(s));
        }
        let (y0, y1) = (y.0.max(-ell), y.1.min(ell));
        if y1 <= y0 {
            return 0.0;
        }
        // Split y where the disk boundary crosses the x edges so the inner
        // integral is smooth on each piece.
        let mut cuts = vec![y0, y1];
        for xe in [x.0, x.1] {
            if xe.abs() < ell {
                let yc = (ell * ell - xe * xe).sqrt();
                for c in [-yc, yc] {
                    if c > y0 && c < y1 {
                        cuts.push(c);
                    }
                }
            }
        }
        cuts.sort_by(f64::total_cmp);
        let gy = GaussRule::new(GL_Y);
        let mut total = 0.0;
        for w in cuts.windows(2) {
            total += gy.integrate(w[0], w[1], |yy| {
                let h = (ell * ell - yy * yy).max(0.0).sqrt();
                let (a, b) = (x0.max(-h), x1.min(h));
                gx.integrate(a, b, |xx| self.eval([xx, yy]))
            });
        }
        total
    }

    /// `∫_Ω η(p − y) dy` evaluated by quadrature; equals ½ at a boundary
    /// point of a 1D domain.
    pub fn clipped_mass(&self, p: Point) -> f64 {
        let axes = self.grid.spec().axes();
        let xr = (axes[0].lo - p[0], axes[0].hi - p[0]);
        let yr = if self.dim == 2 {
            (axes[1].lo - p[1], axes[1].hi - p[1])
        } else {
            (0.0, 0.0)
        };
        self.box_mass(xr, yr)
    }

    /// `Σ_y ρ(y) η(x − y) vol` without renormalization.
    pub fn raw_convolution(&self, rho: &Field) -> Field {
        let g = &self.grid;
        let [nx, ny] = g.shape();
        let v = rho.values();
        let vol = g.cell_volume();
        let mut out = vec![0.0; g.len()];
        for j in 0..ny {
            for i in 0..nx {
                let mut acc = 0.0;
                for e in &self.stencil {
                    let ii = i as isize + e.di;
                    let jj = j as isize + e.dj;
                    if ii < 0 || jj < 0 || ii >= nx as isize || jj >= ny as isize {
                        continue;
                    }
                    acc += v[g.index(ii as usize, jj as usize)] * e.weight;
                }
                out[g.index(i, j)] = acc * vol;
            }
        }
        Field::from_parts(g.clone(), out)
    }
}

/// Builds the kernel of horizon `ell` on `grid`.
pub fn make_kernel(ell: f64, grid: &Arc<Grid>) -> Result<Kernel, KernelError> {
    let min = 2.0 * grid.max_dx();
    if !(ell.is_finite() && ell > min) {
        return Err(KernelError::HorizonTooSmall { ell, min });
    }
    let dim = grid.dim();
    let mut k = Kernel {
        ell,
        dim,
        scale: 1.0 / (ell.powi(dim as i32) * unit_mass(dim)),
        grid: grid.clone(),
        stencil: Vec::new(),
        denominators: Vec::new(),
    };
    let [dx, dy] = grid.dx();
    let reach_x = (ell / dx + 0.5).ceil() as isize;
    let reach_y = if dim == 2 { (ell / dy + 0.5).ceil() as isize } else { 0 };
    let vol = grid.cell_volume();
    let mut stencil = Vec::new();
    for dj in -reach_y..=reach_y {
        for di in -reach_x..=reach_x {
            let cx = di as f64 * dx;
            let cy = dj as f64 * dy;
            let mass = k.box_mass(
                (cx - 0.5 * dx, cx + 0.5 * dx),
                (cy - 0.5 * dy, cy + 0.5 * dy),
            );
            if mass > 0.0 {
                stencil.push(StencilEntry {
                    di,
                    dj,
                    weight: mass / vol,
                });
            }
        }
    }
    k.stencil = stencil;
    k.denominators = k.raw_convolution(&Field::constant(grid, 1.0)).into_values();
    Ok(k)
}

/// `(ρ ∗_Ω η)(x) = Σ ρ(y) η(x − y) vol / Σ_{y∈Ω} η(x − y) vol`.
pub fn modified_convolution(rho: &Field, k: &Kernel) -> Field {
    debug_assert!(**rho.grid() == *k.grid);
    let raw = k.raw_convolution(rho);
    raw.zip_with(
        &Field::from_parts(k.grid.clone(), k.denominators.clone()),
        |n, d| n / d,
    )
}

/// `attract · κ · g / √(1 + |g|²)` with `g = ∇(w ∗_Ω η)`.
pub fn velocity(w: &Field, k: &Kernel, kappa: f64, attract: f64) -> VectorField {
    let g = gradient(&modified_convolution(w, k));
    let values = g
        .values()
        .iter()
        .map(|v| {
            let s = attract * kappa / (1.0 + v[0] * v[0] + v[1] * v[1]).sqrt();
            [s * v[0], s * v[1]]
        })
        .collect();
    VectorField::from_parts(w.grid().clone(), values)
}

/// Empirical constants for the velocity hypotheses, maximized over samples.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct VelocityReport {
    /// `sup ‖v(w)‖∞ / ‖w‖₁`
    pub sup_quotient: f64,
    /// `sup ‖D_x v(w)‖∞ / ‖w‖₁`
    pub jacobian_quotient: f64,
    /// `sup ‖v(w₁) − v(w₂)‖∞ / ‖w₁ − w₂‖₁`
    pub lipschitz_quotient: f64,
    /// `sup ‖D²_x v(w)‖₁ / ‖w‖₁`
    pub hessian_quotient: f64,
    /// `sup ‖div(v(w₁) − v(w₂))‖∞ / ‖w₁ − w₂‖₁`
    pub div_lipschitz_quotient: f64,
    /// Largest `‖w‖₁` among the samples.
    pub max_l1: f64,
    pub samples: usize,
}

impl VelocityReport {
    /// Empirical `K_v`: the largest of the three first-order quotients.
    pub fn k_v(&self) -> f64 {
        self.sup_quotient
            .max(self.jacobian_quotient)
            .max(self.lipschitz_quotient)
    }

    /// Empirical `C_v` at `max_l1`.
    pub fn c_v(&self) -> f64 {
        self.hessian_quotient.max(self.div_lipschitz_quotient)
    }
}

fn quotient(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Measures the velocity hypotheses on `samples` (all pairs for the
/// Lipschitz quotients).
pub fn verify_hypothesis_v(
    k: &Kernel,
    kappa: f64,
    samples: &[Field],
) -> Result<VelocityReport, KernelError> {
    if samples.is_empty() {
        return Err(KernelError::NoSamples);
    }
    let vs: Vec<VectorField> = samples.iter().map(|w| velocity(w, k, kappa, 1.0)).collect();
    let divs: Vec<Field> = vs.iter().map(divergence).collect();
    let mut r = VelocityReport {
        samples: samples.len(),
        ..Default::default()
    };
    for (idx, (w, v)) in samples.iter().zip(&vs).enumerate() {
        let l1 = w.l1();
        r.max_l1 = r.max_l1.max(l1);
        let vmax = v.linf();
        if l1 == 0.0 && vmax > 0.0 {
            return Err(KernelError::DegenerateSample { index: idx });
        }
        r.sup_quotient = r.sup_quotient.max(quotient(vmax, l1));
        r.jacobian_quotient = r.jacobian_quotient.max(quotient(jacobian_linf(v), l1));
        r.hessian_quotient = r.hessian_quotient.max(quotient(hessian_l1(v), l1));
    }
    for i in 0..samples.len() {
        for j in i + 1..samples.len() {
            let dw = samples[i].sub(&samples[j]).l1();
            let dv = vs[i].sub(&vs[j]).linf();
            let ddiv = divs[i].sub(&divs[j]).linf();
            r.lipschitz_quotient = r.lipschitz_quotient.max(quotient(dv, dw));
            r.div_lipschitz_quotient = r.div_lipschitz_quotient.max(quotient(ddiv, dw));
        }
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::DomainSpec;

    fn closed_form_mass_1d(ell: f64) -> f64 {
        2.0 * ell.powi(17) * (1.0 - 4.0 / 5.0 + 6.0 / 9.0 - 4.0 / 13.0 + 1.0 / 17.0)
    }

    fn closed_form_mass_2d(ell: f64) -> f64 {
        std::f64::consts::PI
            * ell.powi(18)
            * (1.0 - 4.0 / 3.0 + 6.0 / 5.0 - 4.0 / 7.0 + 1.0 / 9.0)
    }

    #[test]
    fn normalization_matches_binomial_expansion() {
        for ell in [0.1, 0.25, 0.5] {
            let g1 = Grid::interval(0.0, 1.0, 64).unwrap();
            let k1 = make_kernel(ell, &g1).unwrap();
            assert!((k1.ell_bar() * closed_form_mass_1d(ell) - 1.0).abs() < 1e-12);
            let g2 = Grid::rectangle((0.0, 1.0), (0.0, 1.0), (32, 32)).unwrap();
            let k2 = make_kernel(ell.max(0.07), &g2).unwrap();
            let l = k2.ell();
            assert!((k2.ell_bar() * closed_form_mass_2d(l) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn profile_shape() {
        let g = Grid::interval(0.0, 1.0, 64).unwrap();
        let k = make_kernel(0.25, &g).unwrap();
        let rs: Vec<f64> = (0..=100).map(|i| 0.25 * i as f64 / 100.0).collect();
        for w in rs.windows(2) {
            assert!(k.profile(w[1]) <= k.profile(w[0]));
        }
        // fourth-order central differences
        let h = 1e-3;
        let f = |m: f64| k.profile(m * h);
        let d1 = (f(-2.0) - 8.0 * f(-1.0) + 8.0 * f(1.0) - f(2.0)) / (12.0 * h);
        let d2 = (-f(-2.0) + 16.0 * f(-1.0) - 30.0 * f(0.0) + 16.0 * f(1.0) - f(2.0))
            / (12.0 * h * h);
        assert!(d1.abs() < 1e-6);
        assert!(d2.abs() < 1e-6);
        assert_eq!(k.profile(0.3), 0.0);
    }

    #[test]
    fn stencil_mass_is_one() {
        let g = Grid::interval(0.0, 1.0, 64).unwrap();
        let k = make_kernel(0.25, &g).unwrap();
        assert!((k.stencil_mass() - 1.0).abs() < 1e-12);
        let g2 = Grid::rectangle((0.0, 1.0), (0.0, 1.0), (64, 64)).unwrap();
        let k2 = make_kernel(0.1, &g2).unwrap();
        assert!((k2.stencil_mass() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn interior_and_boundary_denominators() {
        let g = Grid::interval(0.0, 1.0, 64).unwrap();
        let k = make_kernel(0.25, &g).unwrap();
        let mid = g.len() / 2;
        assert!((k.denominators()[mid] - 1.0).abs() < 1e-6);
        assert!(k.denominators().iter().all(|&d| d > 0.0 && d <= 1.0 + 1e-12));
        assert!((k.clipped_mass([0.0, 0.0]) - 0.5).abs() < 0.02);
        assert!((k.clipped_mass([1.0, 0.0]) - 0.5).abs() < 1e-12);
        // boundary cell: half the mass plus the strip up to its center
        let strip = k.profile(0.0) * g.dx()[0] / 2.0;
        assert!((k.denominators()[0] - 0.5 - strip).abs() < 1e-3);
    }

    #[test]
    fn horizon_too_small() {
        let g = Grid::interval(0.0, 1.0, 64).unwrap();
        assert!(matches!(
            make_kernel(0.01, &g),
            Err(KernelError::HorizonTooSmall { .. })
        ));
    }

    #[test]
    fn convolution_examples() {
        let g = Grid::new(DomainSpec::interval(0.0, 1.0).unwrap(), &[64]).unwrap();
        let k = make_kernel(0.25, &g).unwrap();
        let one = modified_convolution(&Field::constant(&g, 1.0), &k);
        assert!(one.values().iter().all(|v| (v - 1.0).abs() < 1e-10));
        let zero = modified_convolution(&Field::zeros(&g), &k);
        assert_eq!(zero.linf(), 0.0);

        let x0 = 20;
        let vol = g.cell_volume();
        let mut spike = vec![0.0; g.len()];
        spike[x0] = 1.0 / vol;
        let out = modified_convolution(&Field::new(g.clone(), spike).unwrap(), &k);
        for i in 0..g.len() {
            let z = g.center(i)[0] - g.center(x0)[0];
            let expect = k.profile(z) / k.denominators()[i];
            assert!((out.values()[i] - expect).abs() < 2e-2 * k.profile(0.0), "cell {i}");
        }
    }

    #[test]
    fn velocity_examples() {
        let g = Grid::interval(0.0, 1.0, 128).unwrap();
        let k = make_kernel(0.25, &g).unwrap();
        let v = velocity(&Field::constant(&g, 3.0), &k, 1.0, 1.0);
        assert!(v.linf() < 1e-10);
        let w = Field::from_fn(&g, |p| (std::f64::consts::PI * p[0]).sin()).unwrap();
        let v = velocity(&w, &k, 0.7, 1.0);
        assert!(v.linf() <= 0.7);
        for i in 0..g.len() {
            let x = g.center(i)[0];
            if x > 0.0 && x < 0.5 - 0.25 {
                assert!(v.values()[i][0] > 0.0, "x = {x}");
            }
        }
        let vr = velocity(&w, &k, 0.7, -1.0);
        assert!(vr.values()[10][0] < 0.0);
    }

    #[test]
    fn hypothesis_v_examples() {
        let g = Grid::interval(0.0, 1.0, 64).unwrap();
        let k = make_kernel(0.25, &g).unwrap();
        let r = verify_hypothesis_v(&k, 1.0, &[Field::zeros(&g)]).unwrap();
        assert_eq!(r.k_v(), 0.0);
        assert_eq!(r.c_v(), 0.0);

        let w = Field::from_fn(&g, |p| p[0] * (1.0 - p[0])).unwrap();
        let a = verify_hypothesis_v(&k, 1.0, &[w.clone(), w.scale(2.0)]).unwrap();
        let b = verify_hypothesis_v(&k, 1.0, &[w.scale(2.0), w]).unwrap();
        assert!(a.lipschitz_quotient.is_finite());
        assert_eq!(a.lipschitz_quotient, b.lipschitz_quotient);
        assert!(verify_hypothesis_v(&k, 1.0, &[]).is_err());
    }

    #[test]
    fn two_dimensional_normalization() {
        let g = Grid::rectangle((0.0, 1.0), (0.0, 1.0), (32, 32)).unwrap();
        let k = make_kernel(0.25, &g).unwrap();
        let one = modified_convolution(&Field::constant(&g, 1.0), &k);
        assert!(one.values().iter().all(|v| (v - 1.0).abs() < 1e-10));
        // corner point keeps a quarter of the mass
        assert!((k.clipped_mass([0.0, 0.0]) - 0.25).abs() < 1e-10);
    }
}
