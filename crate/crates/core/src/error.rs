use std::path::PathBuf;

use thiserror::Error;

use crate::expr::SlotKind;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("degenerate interval [{lo}, {hi}]")]
    DegenerateInterval { lo: f64, hi: f64 },
    #[error("unsupported dimension {0} (expected 1 or 2)")]
    UnsupportedDimension(usize),
    #[error("{counts} cell counts given for a {dim}-dimensional domain")]
    CountMismatch { dim: usize, counts: usize },
    #[error("at least 4 cells per axis required, got {0}")]
    TooFewCells(usize),
    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("non-finite value in cell {0}")]
    NonFinite(usize),
    #[error("fields live on different grids")]
    GridMismatch,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at position {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("variable `{name}` is not allowed in a {slot} expression")]
    ForbiddenVariable { name: String, slot: SlotKind },
    #[error("variable `{0}` has no value in the evaluation environment")]
    MissingVariable(String),
    #[error("non-finite result evaluating `{0}`")]
    NonFinite(String),
    #[error("non-finite result in cell {cell}: {source}")]
    NonFiniteAt {
        cell: usize,
        #[source]
        source: Box<ExprError>,
    },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KernelError {
    #[error("kernel horizon {ell} must exceed twice the largest cell size ({min})")]
    HorizonTooSmall { ell: f64, min: f64 },
    #[error("sample {index} has zero L1 norm but nonzero velocity")]
    DegenerateSample { index: usize },
    #[error("at least one sample field required")]
    NoSamples,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParabolicError {
    #[error("heat kernel requires t > 0, got {0}")]
    NonPositiveTime(f64),
    #[error("dt·‖B‖∞ = {0} ≥ 1 breaks the positivity of the implicit step")]
    StiffReaction(f64),
    #[error("the Duhamel reference is only available in one space dimension")]
    Requires1D,
    #[error("the Duhamel reference requires a vanishing reaction coefficient")]
    NonZeroReaction,
    #[error("diffusivity must be positive, got {0}")]
    InvalidDiffusivity(f64),
    #[error("invalid time step {0}")]
    InvalidStep(f64),
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HyperbolicError {
    #[error("CFL number {cfl} exceeds {limit}")]
    CflViolation { cfl: f64, limit: f64 },
    #[error("invalid time step {0}")]
    InvalidStep(f64),
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CouplingError {
    #[error("Picard iteration did not contract on window [{t0}, {t1}] (differences {diffs:?})")]
    NoContraction { t0: f64, t1: f64, diffs: Vec<f64> },
    #[error("window shrank to {window} < 4·dt = {min} at t = {t0}")]
    WindowCollapse { t0: f64, window: f64, min: f64 },
    #[error("invalid `{key}`: {msg}")]
    InvalidScenario { key: String, msg: String },
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Parabolic(#[from] ParabolicError),
    #[error(transparent)]
    Hyperbolic(#[from] HyperbolicError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },
    #[error("invalid value for `{key}`: {msg}")]
    Validation { key: String, msg: String },
    #[error("in `{key}`: {source}")]
    Expr {
        key: String,
        #[source]
        source: ExprError,
    },
}

/// Crate-level error used by the CLI and the C ABI.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Parabolic(#[from] ParabolicError),
    #[error(transparent)]
    Hyperbolic(#[from] HyperbolicError),
    #[error(transparent)]
    Coupling(#[from] CouplingError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}
