//! Scenario files, run orchestration and artifact export.
//!
//! Scenario files are TOML documents; the layout is described in
//! `docs/formats.md`. Every artifact starts with a versioned header line
//! (CSV and logs) or carries a `schema` field (JSON).

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;
use toml::{Table, Value};

use crate::coupling::{
    compute_bounds_report, perturbation_experiment, positivity_audit, solve_coupled, BoundsReport,
    CoupledTrace, InitialIterate, PerturbationReport, PicardOptions, PositivityReport, Scenario,
    Shape, Target, REPORT_SCHEMA,
};
use crate::error::{CouplingError, Error, ScenarioError};
use crate::expr::{parse, CoeffExpr, Env, SlotKind};
use crate::grid::{DomainSpec, Field, Grid, Interval, Point};
use crate::hyperbolic::{eval_characteristics_solution, solve_hyperbolic, TransportProblem};
use crate::nonlocal::{make_kernel, velocity};
use crate::parabolic::{duhamel_reference, solve_parabolic, ParabolicProblem, ParabolicScheme};
use crate::quad::fit_order;
use crate::source::{ExprSource, FnScalar, VectorSeries};

/// Optional `format` key at the top of a scenario file.
pub const SCENARIO_FORMAT: &str = "hyperpara.scenario/1";
pub const NORMS_HEADER: &str = "# hyperpara.norms/1";
pub const SNAPSHOT_HEADER: &str = "# hyperpara.snapshot/1";
pub const PICARD_HEADER: &str = "# hyperpara.picard/1";
pub const STUDY_HEADER: &str = "# hyperpara.study/1";

/// Which artifact families a run writes. `picard.log` is always written.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Formats {
    /// `norms.csv` and `snapshots/`.
    pub csv: bool,
    /// `bounds.json`.
    pub json: bool,
}

impl Default for Formats {
    fn default() -> Self {
        Self {
            csv: true,
            json: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputOptions {
    pub directory: PathBuf,
    pub formats: Formats,
}

impl Default for OutputOptions {
    fn default() -> Self {
        Self {
            directory: PathBuf::from("out"),
            formats: Formats::default(),
        }
    }
}

/// A scenario with its output settings.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioFile {
    pub scenario: Scenario,
    pub output: OutputOptions,
}

fn invalid(key: impl Into<String>, msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Validation {
        key: key.into(),
        msg: msg.into(),
    }
}

/// One table of the document; tracks which keys were read so that leftovers
/// can be rejected.
struct Section<'a> {
    name: &'a str,
    table: &'a Table,
    seen: Vec<&'static str>,
}

impl<'a> Section<'a> {
    fn required(root: &'a Table, name: &'a str) -> Result<Self, ScenarioError> {
        match root.get(name) {
            Some(Value::Table(table)) => Ok(Self {
                name,
                table,
                seen: Vec::new(),
            }),
            Some(_) => Err(invalid(name, "expected a section")),
            None => Err(invalid(name, "missing section")),
        }
    }

    fn optional(root: &'a Table, name: &'a str) -> Result<Option<Self>, ScenarioError> {
        match root.get(name) {
            None => Ok(None),
            Some(_) => Self::required(root, name).map(Some),
        }
    }

    fn path(&self, key: &str) -> String {
        format!("{}.{key}", self.name)
    }

    fn get(&mut self, key: &'static str) -> Option<&'a Value> {
        self.seen.push(key);
        self.table.get(key)
    }

    fn need(&mut self, key: &'static str) -> Result<&'a Value, ScenarioError> {
        let path = self.path(key);
        self.get(key).ok_or_else(|| invalid(path, "missing key"))
    }

    fn number(&self, key: &str, v: &Value) -> Result<f64, ScenarioError> {
        match v {
            Value::Float(f) => Ok(*f),
            Value::Integer(i) => Ok(*i as f64),
            _ => Err(invalid(self.path(key), "expected a number")),
        }
    }

    fn float(&mut self, key: &'static str) -> Result<f64, ScenarioError> {
        let v = self.need(key)?;
        self.number(key, v)
    }

    fn float_or(&mut self, key: &'static str, default: f64) -> Result<f64, ScenarioError> {
        match self.get(key) {
            Some(v) => self.number(key, v),
            None => Ok(default),
        }
    }

    fn count(&self, key: &str, v: &Value) -> Result<usize, ScenarioError> {
        match v {
            Value::Integer(i) if *i >= 0 => Ok(*i as usize),
            _ => Err(invalid(self.path(key), "expected a nonnegative integer")),
        }
    }

    fn count_or(&mut self, key: &'static str, default: usize) -> Result<usize, ScenarioError> {
        match self.get(key) {
            Some(v) => self.count(key, v),
            None => Ok(default),
        }
    }

    fn string(&self, key: &str, v: &'a Value) -> Result<&'a str, ScenarioError> {
        v.as_str().ok_or_else(|| invalid(self.path(key), "expected a string"))
    }

    fn string_opt(&mut self, key: &'static str) -> Result<Option<&'a str>, ScenarioError> {
        match self.get(key) {
            Some(v) => self.string(key, v).map(Some),
            None => Ok(None),
        }
    }

    fn expr(&mut self, key: &'static str, slot: SlotKind) -> Result<CoeffExpr, ScenarioError> {
        let v = self.need(key)?;
        let src = self.string(key, v)?;
        parse(src, slot).map_err(|source| ScenarioError::Expr {
            key: self.path(key),
            source,
        })
    }

    fn array(&mut self, key: &'static str) -> Result<&'a [Value], ScenarioError> {
        let path = self.path(key);
        match self.need(key)? {
            Value::Array(a) => Ok(a),
            _ => Err(invalid(path, "expected an array")),
        }
    }

    fn finish(self) -> Result<(), ScenarioError> {
        for key in self.table.keys() {
            if !self.seen.contains(&key.as_str()) {
                return Err(invalid(self.path(key), "unknown key"));
            }
        }
        Ok(())
    }
}

fn parse_domain(root: &Table) -> Result<(DomainSpec, Vec<usize>), ScenarioError> {
    let mut s = Section::required(root, "domain")?;
    let dim_v = s.need("dim")?;
    let dim = s.count("dim", dim_v)?;
    if !(1..=2).contains(&dim) {
        return Err(invalid("domain.dim", format!("must be 1 or 2, got {dim}")));
    }
    let bounds = s.array("bounds")?;
    if bounds.len() != dim {
        return Err(invalid(
            "domain.bounds",
            format!("expected {dim} [lo, hi] pairs, got {}", bounds.len()),
        ));
    }
    let mut axes = Vec::with_capacity(dim);
    for (d, pair) in bounds.iter().enumerate() {
        let path = format!("domain.bounds[{d}]");
        let ends = match pair.as_array() {
            Some(a) if a.len() == 2 => a,
            _ => return Err(invalid(path, "expected [lo, hi]")),
        };
        let lo = s.number("bounds", &ends[0]).map_err(|_| invalid(&path, "expected numbers"))?;
        let hi = s.number("bounds", &ends[1]).map_err(|_| invalid(&path, "expected numbers"))?;
        axes.push(Interval::new(lo, hi).map_err(|e| invalid(&path, e.to_string()))?);
    }
    let cells = s
        .array("n_cells")?
        .iter()
        .map(|v| s.count("n_cells", v))
        .collect::<Result<Vec<_>, _>>()?;
    if cells.len() != dim {
        return Err(invalid(
            "domain.n_cells",
            format!("expected {dim} counts, got {}", cells.len()),
        ));
    }
    s.finish()?;
    let spec = DomainSpec::new(axes).map_err(|e| invalid("domain", e.to_string()))?;
    Ok((spec, cells))
}

fn scheme_from(s: &str) -> Option<ParabolicScheme> {
    match s {
        "implicit_euler" => Some(ParabolicScheme::ImplicitEuler),
        "crank_nicolson" => Some(ParabolicScheme::CrankNicolson),
        _ => None,
    }
}

fn scheme_name(s: ParabolicScheme) -> &'static str {
    match s {
        ParabolicScheme::ImplicitEuler => "implicit_euler",
        ParabolicScheme::CrankNicolson => "crank_nicolson",
    }
}

fn initial_name(i: InitialIterate) -> &'static str {
    match i {
        InitialIterate::Datum => "datum",
        InitialIterate::Zero => "zero",
    }
}

/// Parses and validates a scenario document. `path` is used in messages.
pub fn parse_scenario(text: &str, path: &Path) -> Result<ScenarioFile, ScenarioError> {
    let root: Table = text.parse().map_err(|e: toml::de::Error| {
        let line = e
            .span()
            .map(|r| text[..r.start.min(text.len())].matches('\n').count() + 1)
            .unwrap_or(0);
        ScenarioError::Parse {
            path: path.to_path_buf(),
            line,
            msg: e.message().to_string(),
        }
    })?;
    for key in root.keys() {
        let known = [
            "format",
            "domain",
            "model",
            "coefficients",
            "initial",
            "time",
            "schemes",
            "output",
        ];
        if !known.contains(&key.as_str()) {
            return Err(invalid(key.as_str(), "unknown section"));
        }
    }
    if let Some(f) = root.get("format") {
        if f.as_str() != Some(SCENARIO_FORMAT) {
            return Err(invalid("format", format!("expected \"{SCENARIO_FORMAT}\"")));
        }
    }

    let (domain, cells) = parse_domain(&root)?;

    let mut m = Section::required(&root, "model")?;
    let mu = m.float("mu")?;
    let ell = m.float("ell")?;
    let kappa = m.float("kappa")?;
    let attract = m.float("attract")?;
    let k_alpha = m.float("K_alpha")?;
    let k_beta = m.float("K_beta")?;
    m.finish()?;

    let mut c = Section::required(&root, "coefficients")?;
    let alpha = c.expr("alpha", SlotKind::Alpha)?;
    let beta = c.expr("beta", SlotKind::Beta)?;
    let a = c.expr("a", SlotKind::SourceA)?;
    let b = c.expr("b", SlotKind::SourceB)?;
    c.finish()?;

    let mut i = Section::required(&root, "initial")?;
    let u0 = i.expr("u0", SlotKind::Init)?;
    let w0 = i.expr("w0", SlotKind::Init)?;
    i.finish()?;

    let mut t = Section::required(&root, "time")?;
    let t_end = t.float("T")?;
    let dt = t.float("dt")?;
    let snapshot_every = t.count_or("snapshot_every", 10)?;
    t.finish()?;

    let mut picard = PicardOptions::default();
    let mut parabolic_scheme = ParabolicScheme::default();
    if let Some(mut s) = Section::optional(&root, "schemes")? {
        if let Some(name) = s.string_opt("parabolic")? {
            parabolic_scheme = scheme_from(name).ok_or_else(|| {
                invalid("schemes.parabolic", "expected \"implicit_euler\" or \"crank_nicolson\"")
            })?;
        }
        if let Some(name) = s.string_opt("hyperbolic")? {
            if name != "upwind" {
                return Err(invalid("schemes.hyperbolic", "expected \"upwind\""));
            }
        }
        picard.tol = s.float_or("picard_tol", picard.tol)?;
        picard.max_iter = s.count_or("picard_max_iter", picard.max_iter)?;
        if let Some(name) = s.string_opt("picard_initial")? {
            picard.initial = match name {
                "datum" => InitialIterate::Datum,
                "zero" => InitialIterate::Zero,
                _ => return Err(invalid("schemes.picard_initial", "expected \"datum\" or \"zero\"")),
            };
        }
        s.finish()?;
    }

    let mut output = OutputOptions::default();
    if let Some(mut s) = Section::optional(&root, "output")? {
        if let Some(dir) = s.string_opt("directory")? {
            output.directory = PathBuf::from(dir);
        }
        if let Some(v) = s.get("formats") {
            let list = v
                .as_array()
                .ok_or_else(|| invalid("output.formats", "expected an array of strings"))?;
            let mut formats = Formats {
                csv: false,
                json: false,
            };
            for f in list {
                match f.as_str() {
                    Some("csv") => formats.csv = true,
                    Some("json") => formats.json = true,
                    _ => return Err(invalid("output.formats", "entries must be \"csv\" or \"json\"")),
                }
            }
            output.formats = formats;
        }
        s.finish()?;
    }

    let scenario = Scenario {
        domain,
        cells,
        mu,
        ell,
        kappa,
        attract,
        k_alpha,
        k_beta,
        alpha,
        beta,
        a,
        b,
        u0,
        w0,
        t_end,
        dt,
        snapshot_every,
        parabolic_scheme,
        picard,
    };
    scenario.validate().map_err(|e| match e {
        CouplingError::InvalidScenario { key, msg } => ScenarioError::Validation { key, msg },
        other => invalid("scenario", other.to_string()),
    })?;
    Ok(ScenarioFile { scenario, output })
}

pub fn load_scenario_file(path: &Path) -> Result<ScenarioFile, ScenarioError> {
    let text = fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_scenario(&text, path)
}

/// Reads, parses and validates a scenario file.
pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    load_scenario_file(path).map(|f| f.scenario)
}

fn quoted(s: &str) -> String {
    Value::String(s.to_string()).to_string()
}

/// Renders `file` as a scenario document that parses back to an equal value.
pub fn print_scenario(file: &ScenarioFile) -> String {
    let s = &file.scenario;
    let bounds = s
        .domain
        .axes()
        .iter()
        .map(|a| format!("[{:?}, {:?}]", a.lo, a.hi))
        .collect::<Vec<_>>()
        .join(", ");
    let cells = s.cells.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(", ");
    let mut formats = Vec::new();
    if file.output.formats.csv {
        formats.push("\"csv\"");
    }
    if file.output.formats.json {
        formats.push("\"json\"");
    }
    format!(
        "format = {format}\n\n\
         [domain]\ndim = {dim}\nbounds = [{bounds}]\nn_cells = [{cells}]\n\n\
         [model]\nmu = {mu:?}\nell = {ell:?}\nkappa = {kappa:?}\nattract = {attract:?}\n\
         K_alpha = {ka:?}\nK_beta = {kb:?}\n\n\
         [coefficients]\nalpha = {alpha}\nbeta = {beta}\na = {a}\nb = {b}\n\n\
         [initial]\nu0 = {u0}\nw0 = {w0}\n\n\
         [time]\nT = {t:?}\ndt = {dt:?}\nsnapshot_every = {snap}\n\n\
         [schemes]\nparabolic = \"{par}\"\nhyperbolic = \"upwind\"\npicard_tol = {tol:?}\n\
         picard_max_iter = {iter}\npicard_initial = \"{init}\"\n\n\
         [output]\ndirectory = {dir}\nformats = [{formats}]\n",
        format = quoted(SCENARIO_FORMAT),
        dim = s.domain.dim(),
        mu = s.mu,
        ell = s.ell,
        kappa = s.kappa,
        attract = s.attract,
        ka = s.k_alpha,
        kb = s.k_beta,
        alpha = quoted(s.alpha.source()),
        beta = quoted(s.beta.source()),
        a = quoted(s.a.source()),
        b = quoted(s.b.source()),
        u0 = quoted(s.u0.source()),
        w0 = quoted(s.w0.source()),
        t = s.t_end,
        dt = s.dt,
        snap = s.snapshot_every,
        par = scheme_name(s.parabolic_scheme),
        tol = s.picard.tol,
        iter = s.picard.max_iter,
        init = initial_name(s.picard.initial),
        dir = quoted(&file.output.directory.to_string_lossy()),
        formats = formats.join(", "),
    )
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, Error> {
    File::create(path).map(BufWriter::new).map_err(io_error(path))
}

fn write_text(path: &Path, text: &str) -> Result<(), Error> {
    fs::write(path, text).map_err(io_error(path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Error> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

/// CSV file whose first line is `header`.
fn csv_writer(path: &Path, header: &str) -> Result<csv::Writer<BufWriter<File>>, Error> {
    let mut f = create(path)?;
    writeln!(f, "{header}").map_err(io_error(path))?;
    Ok(csv::Writer::from_writer(f))
}

fn finish_csv(mut w: csv::Writer<BufWriter<File>>, path: &Path) -> Result<(), Error> {
    w.flush().map_err(io_error(path))
}

fn ensure_dir(dir: &Path) -> Result<(), Error> {
    fs::create_dir_all(dir).map_err(io_error(dir))
}

/// Indices of stored times written as output: every `every`-th step and
/// the last one.
pub fn output_indices(n_times: usize, every: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n_times).step_by(every.max(1)).collect();
    if idx.last() != Some(&(n_times - 1)) {
        idx.push(n_times - 1);
    }
    idx
}

/// `t,u_l1,u_linf,u_tv,w_l1,w_linf,w_tv` at the output times.
pub fn write_norms_csv(path: &Path, trace: &CoupledTrace, every: usize) -> Result<(), Error> {
    let rows = trace.norms();
    let mut w = csv_writer(path, NORMS_HEADER)?;
    for k in output_indices(rows.len(), every) {
        w.serialize(rows[k])?;
    }
    finish_csv(w, path)
}

/// One file per output time: `x[,y],u,w` at every cell center.
pub fn write_snapshots(dir: &Path, trace: &CoupledTrace, every: usize) -> Result<Vec<PathBuf>, Error> {
    ensure_dir(dir)?;
    let mut files = Vec::new();
    for k in output_indices(trace.times.len(), every) {
        let path = dir.join(format!("snapshot_{k:06}.csv"));
        let (u, w) = (&trace.u[k], &trace.w[k]);
        let grid = u.grid();
        let header = format!("{SNAPSHOT_HEADER} t={:?}", trace.times[k]);
        let mut out = csv_writer(&path, &header)?;
        if grid.dim() == 1 {
            out.write_record(["x", "u", "w"])?;
        } else {
            out.write_record(["x", "y", "u", "w"])?;
        }
        for (i, (uv, wv)) in u.values().iter().zip(w.values()).enumerate() {
            let p = grid.center(i);
            if grid.dim() == 1 {
                out.serialize((p[0], uv, wv))?;
            } else {
                out.serialize((p[0], p[1], uv, wv))?;
            }
        }
        finish_csv(out, &path)?;
        files.push(path);
    }
    Ok(files)
}

/// `index t0 t1 status iterations diffs...` per window attempt.
pub fn write_picard_log(path: &Path, trace: &CoupledTrace) -> Result<(), Error> {
    let mut f = create(path)?;
    let mut text = format!("{PICARD_HEADER}\n# window t0 t1 status iterations diffs\n");
    for (i, w) in trace.windows.iter().enumerate() {
        let status = if w.accepted { "accepted" } else { "rejected" };
        text.push_str(&format!("{i} {:?} {:?} {status} {}", w.t0, w.t1, w.diffs.len()));
        for d in &w.diffs {
            text.push_str(&format!(" {d:.6e}"));
        }
        text.push('\n');
    }
    f.write_all(text.as_bytes()).map_err(io_error(path))?;
    f.flush().map_err(io_error(path))
}

/// Everything a run produced.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub out_dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub trace: CoupledTrace,
    pub report: BoundsReport,
    pub positivity: PositivityReport,
}

/// Solves the coupled system and writes `norms.csv`, `snapshots/`,
/// `bounds.json` and `picard.log` into `out_dir` (or the scenario's
/// output directory).
pub fn cmd_run(scenario_path: &Path, out_dir: Option<&Path>) -> Result<RunArtifacts, Error> {
    let file = load_scenario_file(scenario_path)?;
    let out = out_dir.map(Path::to_path_buf).unwrap_or(file.output.directory.clone());
    run_scenario(&file.scenario, &file.output.formats, &out)
}

pub fn run_scenario(scenario: &Scenario, formats: &Formats, out: &Path) -> Result<RunArtifacts, Error> {
    let trace = solve_coupled(scenario)?;
    let report = compute_bounds_report(&trace, scenario)?;
    let positivity = positivity_audit(&trace);
    ensure_dir(out)?;
    let mut files = Vec::new();
    if formats.csv {
        let norms = out.join("norms.csv");
        write_norms_csv(&norms, &trace, scenario.snapshot_every)?;
        files.push(norms);
        files.extend(write_snapshots(&out.join("snapshots"), &trace, scenario.snapshot_every)?);
    }
    if formats.json {
        let bounds = out.join("bounds.json");
        write_json(&bounds, &report)?;
        files.push(bounds);
    }
    let log = out.join("picard.log");
    write_picard_log(&log, &trace)?;
    files.push(log);
    Ok(RunArtifacts {
        out_dir: out.to_path_buf(),
        files,
        trace,
        report,
        positivity,
    })
}

/// Bounds ledger plus positivity audit, written to `bounds.json`.
pub fn cmd_bounds(scenario_path: &Path, out: &Path) -> Result<(BoundsReport, PositivityReport), Error> {
    let scenario = load_scenario(scenario_path)?;
    let trace = solve_coupled(&scenario)?;
    let report = compute_bounds_report(&trace, &scenario)?;
    ensure_dir(out)?;
    write_json(&out.join("bounds.json"), &report)?;
    Ok((report, positivity_audit(&trace)))
}

/// Reports of one perturbation experiment over several targets.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub schema: &'static str,
    pub experiment: &'static str,
    pub reports: Vec<PerturbationReport>,
}

/// Perturbation levels `δ` and `δ/2`.
fn levels(delta: f64) -> [f64; 2] {
    [delta, 0.5 * delta]
}

fn shape_for(seed: Option<u64>) -> Shape {
    seed.map(Shape::Seeded).unwrap_or_default()
}

fn experiment(
    scenario_path: &Path,
    out: &Path,
    name: &'static str,
    targets: [Target; 2],
    delta: f64,
    seed: Option<u64>,
) -> Result<ExperimentReport, Error> {
    let scenario = load_scenario(scenario_path)?;
    let shape = shape_for(seed);
    let reports = std::thread::scope(|s| {
        let handles = targets.map(|t| {
            let (scenario, shape) = (&scenario, &shape);
            s.spawn(move || perturbation_experiment(scenario, t, &levels(delta), shape))
        });
        handles
            .into_iter()
            .map(|h| h.join().expect("experiment thread panicked"))
            .collect::<Result<Vec<_>, _>>()
    })?;
    let report = ExperimentReport {
        schema: REPORT_SCHEMA,
        experiment: name,
        reports,
    };
    ensure_dir(out)?;
    write_json(&out.join(format!("{name}.json")), &report)?;
    Ok(report)
}

/// Lipschitz dependence on `u0` and `w0`, written to `lipschitz.json`.
pub fn cmd_lipschitz(
    scenario_path: &Path,
    out: &Path,
    delta: f64,
    seed: Option<u64>,
) -> Result<ExperimentReport, Error> {
    experiment(scenario_path, out, "lipschitz", [Target::U0, Target::W0], delta, seed)
}

/// Stability in the controls `a` and `b`, written to `controls.json`.
pub fn cmd_controls(
    scenario_path: &Path,
    out: &Path,
    delta: f64,
    seed: Option<u64>,
) -> Result<ExperimentReport, Error> {
    experiment(scenario_path, out, "controls", [Target::A, Target::B], delta, seed)
}

/// Error of one resolution in a refinement study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StudyRow {
    pub n: usize,
    pub h: f64,
    pub dt: f64,
    pub err_l1: f64,
    pub err_linf: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct StudyReport {
    pub schema: &'static str,
    pub study: &'static str,
    pub t: f64,
    pub rows: Vec<StudyRow>,
    /// Least-squares slopes of `log err` against `log h`.
    pub order_l1: f64,
    pub order_linf: f64,
}

fn finish_study(
    out: &Path,
    study: &'static str,
    t: f64,
    rows: Vec<StudyRow>,
) -> Result<StudyReport, Error> {
    let h: Vec<f64> = rows.iter().map(|r| r.h).collect();
    let e1: Vec<f64> = rows.iter().map(|r| r.err_l1).collect();
    let ei: Vec<f64> = rows.iter().map(|r| r.err_linf).collect();
    let report = StudyReport {
        schema: REPORT_SCHEMA,
        study,
        t,
        order_l1: fit_order(&h, &e1),
        order_linf: fit_order(&h, &ei),
        rows,
    };
    ensure_dir(out)?;
    let csv_path = out.join(format!("{study}.csv"));
    let mut w = csv_writer(&csv_path, STUDY_HEADER)?;
    for r in &report.rows {
        w.serialize(r)?;
    }
    finish_csv(w, &csv_path)?;
    write_json(&out.join(format!("{study}.json")), &report)?;
    Ok(report)
}

fn grid_at(scenario: &Scenario, n: usize) -> Result<Arc<Grid>, Error> {
    let counts = vec![n; scenario.domain.dim()];
    Ok(Grid::new(scenario.domain.clone(), &counts)?)
}

fn check_ladder(resolutions: &[usize]) -> Result<(), Error> {
    if resolutions.len() < 2 || resolutions.iter().any(|&n| n < 4) {
        return Err(invalid("resolutions", "need at least two resolutions of 4 or more cells").into());
    }
    Ok(())
}

fn control(e: &CoeffExpr) -> Arc<ExprSource> {
    Arc::new(ExprSource::new(e.clone()).expect("control slots exclude u and w"))
}

/// Parabolic component with `β ≡ 0` against the Green-function reference
/// (1D only). Steps are `min(dt, h²)` for implicit Euler and `min(dt, h/4)`
/// for Crank-Nicolson, so both converge at second order in `h`.
pub fn cmd_convergence(scenario_path: &Path, out: &Path, resolutions: &[usize]) -> Result<StudyReport, Error> {
    let s = load_scenario(scenario_path)?;
    check_ladder(resolutions)?;
    if s.domain.dim() != 1 {
        return Err(invalid("domain.dim", "the convergence study is one-dimensional").into());
    }
    let mut rows = Vec::new();
    for &n in resolutions {
        let grid = grid_at(&s, n)?;
        let h = grid.dx()[0];
        let w0 = crate::expr::sample_field(&s.w0, &grid, 0.0, None, None)?;
        let problem = ParabolicProblem::new(s.mu, w0).with_source(control(&s.b));
        let dt = match s.parabolic_scheme {
            ParabolicScheme::ImplicitEuler => s.dt.min(h * h),
            ParabolicScheme::CrankNicolson => s.dt.min(0.25 * h),
        };
        let trace = solve_parabolic(&problem, s.t_end, s.parabolic_scheme, dt)?;
        let reference = duhamel_reference(&problem, s.t_end, n)?;
        let err = trace.last().sub(&reference);
        rows.push(StudyRow {
            n,
            h,
            dt: trace.dt(0),
            err_l1: err.l1(),
            err_linf: err.linf(),
        });
    }
    finish_study(out, "convergence", s.t_end, rows)
}

/// Transport component against the characteristics oracle. The velocity
/// is `v(w0)` computed on a grid finer than the finest resolution, the
/// reaction is `α(t, x, w0(x))` and the source is `a`.
pub fn cmd_oracle_compare(
    scenario_path: &Path,
    out: &Path,
    resolutions: &[usize],
) -> Result<StudyReport, Error> {
    let s = load_scenario(scenario_path)?;
    check_ladder(resolutions)?;
    let finest = *resolutions.iter().max().expect("nonempty ladder");
    let refine = if s.domain.dim() == 1 { 4 } else { 2 };
    let fine = grid_at(&s, finest * refine)?;
    let kernel = make_kernel(s.ell, &fine)?;
    let w_fine = crate::expr::sample_field(&s.w0, &fine, 0.0, None, None)?;
    let c = velocity(&w_fine, &kernel, s.kappa, s.attract);
    let c_max = c.linf();
    let c = Arc::new(VectorSeries::stationary(c));

    let (alpha, w0, u0) = (s.alpha.clone(), s.w0.clone(), s.u0.clone());
    let reaction = Arc::new(FnScalar(move |t: f64, p: Point| {
        let w = w0.eval(&Env::at(0.0, p[0], p[1])).unwrap_or(f64::NAN);
        alpha.eval(&Env::at(t, p[0], p[1]).with_w(w)).unwrap_or(f64::NAN)
    }));
    let initial = Arc::new(FnScalar(move |_t, p: Point| {
        u0.eval(&Env::at(0.0, p[0], p[1])).unwrap_or(f64::NAN)
    }));

    let mut rows = Vec::new();
    for &n in resolutions {
        let grid = grid_at(&s, n)?;
        let u0 = crate::expr::sample_field(&s.u0, &grid, 0.0, None, None)?;
        let problem = TransportProblem::new(u0)
            .with_velocity(c.clone())
            .with_reaction(reaction.clone())
            .with_source(control(&s.a))
            .with_initial(initial.clone());
        let dt_cfl = if c_max > 0.0 { 0.8 * grid.min_dx() / c_max } else { s.dt };
        let steps = (s.t_end / dt_cfl.min(s.dt)).ceil().max(1.0);
        let trace = solve_hyperbolic(&problem, s.t_end, s.t_end / steps)?;
        let oracle = Field::from_fn(&grid, |p| eval_characteristics_solution(&problem, s.t_end, p).value)?;
        let err = trace.last().sub(&oracle);
        rows.push(StudyRow {
            n,
            h: grid.max_dx(),
            dt: s.t_end / steps,
            err_l1: err.l1(),
            err_linf: err.linf(),
        });
    }
    finish_study(out, "oracle_compare", s.t_end, rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[domain]
dim = 1
bounds = [[0.0, 1.0]]
n_cells = [64]

[model]
mu = 0.05
ell = 0.25
kappa = 0.5
attract = 1
K_alpha = 1
K_beta = 1

[coefficients]
alpha = "1 - w"
beta = "-u"
a = "0.1"
b = "0.1"

[initial]
u0 = "exp(-50*(x-0.3)^2)"
w0 = "sin(pi*x)"

[time]
T = 0.1
dt = 0.0025
"#;

    fn parse_text(text: &str) -> Result<ScenarioFile, ScenarioError> {
        parse_scenario(text, Path::new("test.toml"))
    }

    fn key_of(e: ScenarioError) -> String {
        match e {
            ScenarioError::Validation { key, .. } | ScenarioError::Expr { key, .. } => key,
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn minimal_file_loads_with_defaults() {
        let f = parse_text(MINIMAL).unwrap();
        assert_eq!(f.scenario.cells, vec![64]);
        assert_eq!(f.scenario.snapshot_every, 10);
        assert_eq!(f.scenario.parabolic_scheme, ParabolicScheme::ImplicitEuler);
        assert_eq!(f.output, OutputOptions::default());
    }

    #[test]
    fn missing_section_names_it() {
        let text = MINIMAL.replace("[time]\nT = 0.1\ndt = 0.0025\n", "");
        assert_eq!(key_of(parse_text(&text).unwrap_err()), "time");
    }

    #[test]
    fn missing_and_unknown_keys_are_named() {
        let text = MINIMAL.replace("mu = 0.05\n", "");
        assert_eq!(key_of(parse_text(&text).unwrap_err()), "model.mu");
        let text = MINIMAL.replace("mu = 0.05\n", "mu = 0.05\nnu = 1\n");
        assert_eq!(key_of(parse_text(&text).unwrap_err()), "model.nu");
        let text = format!("{MINIMAL}\n[extras]\nx = 1\n");
        assert_eq!(key_of(parse_text(&text).unwrap_err()), "extras");
    }

    #[test]
    fn forbidden_variable_carries_key_path() {
        let text = MINIMAL.replace("alpha = \"1 - w\"", "alpha = \"u+1\"");
        match parse_text(&text).unwrap_err() {
            ScenarioError::Expr { key, source } => {
                assert_eq!(key, "coefficients.alpha");
                assert!(matches!(source, crate::ExprError::ForbiddenVariable { .. }));
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn syntax_errors_report_the_line() {
        let text = MINIMAL.replace("ell = 0.25", "ell = = 0.25");
        match parse_text(&text).unwrap_err() {
            ScenarioError::Parse { line, .. } => assert_eq!(line, 9),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn semantic_validation_names_the_key() {
        let text = MINIMAL.replace("mu = 0.05", "mu = -1");
        assert_eq!(key_of(parse_text(&text).unwrap_err()), "model.mu");
        let text = MINIMAL.replace("dt = 0.0025", "dt = 0.05");
        assert_eq!(key_of(parse_text(&text).unwrap_err()), "time.dt");
        let text = MINIMAL.replace("n_cells = [64]", "n_cells = [64, 64]");
        assert_eq!(key_of(parse_text(&text).unwrap_err()), "domain.n_cells");
    }

    #[test]
    fn print_round_trips() {
        let mut f = parse_text(MINIMAL).unwrap();
        f.scenario.parabolic_scheme = ParabolicScheme::CrankNicolson;
        f.scenario.picard.initial = InitialIterate::Zero;
        f.output.formats.json = false;
        let printed = print_scenario(&f);
        let back = parse_text(&printed).unwrap();
        assert_eq!(back, f);
        assert_eq!(print_scenario(&back), printed);
    }

    #[test]
    fn output_indices_include_the_last_time() {
        assert_eq!(output_indices(11, 5), vec![0, 5, 10]);
        assert_eq!(output_indices(12, 5), vec![0, 5, 10, 11]);
        assert_eq!(output_indices(1, 3), vec![0]);
    }
}
