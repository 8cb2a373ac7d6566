//! Simulation of a nonlocal transport equation coupled to a reaction–diffusion
//! equation on bounded domains.
//!
//! ```text
//! ∂t u + div(u v(t, w)) = α(t, x, w) u + a(t, x)
//! ∂t w − μ Δw          = β(t, x, u, w) w + b(t, x)
//! ```
//!
//! with zero Dirichlet data on both equations. Every a-priori, stability,
//! positivity and total-variation estimate for the system is exposed as an
//! executable check next to the solvers themselves.

pub mod calibration;
pub mod coupling;
pub mod error;
pub mod expr;
pub mod grid;
pub mod hyperbolic;
pub mod io;
pub mod nonlocal;
pub mod parabolic;
pub mod quad;
pub mod source;
pub mod suite;
pub mod trace;
pub mod weak;

pub use error::{
    CouplingError, Error, ExprError, GridError, HyperbolicError, KernelError, ParabolicError,
    ScenarioError,
};
pub use expr::{parse, sample_field, CoeffExpr, Env, SlotKind};
pub use grid::{DomainSpec, Field, Grid, Interval, Point, VectorField};
