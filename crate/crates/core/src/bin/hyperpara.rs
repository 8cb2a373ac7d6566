use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hyperpara::coupling::PerturbationReport;
use hyperpara::error::{CouplingError, Error};
use hyperpara::io::{self, ExperimentReport, StudyReport};

/// Coupled nonlocal transport and reaction-diffusion: runs, bound ledgers,
/// stability experiments and refinement studies.
#[derive(Parser)]
#[command(name = "hyperpara", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Scenario file.
    #[arg(long, global = true, value_name = "PATH")]
    scenario: Option<PathBuf>,
    /// Output directory; defaults to the scenario's `[output] directory`.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Resolution ladder for `convergence` and `oracle-compare`.
    #[arg(long, global = true, value_delimiter = ',', default_value = "64,128,256")]
    resolutions: Vec<usize>,
    /// Perturbation size for `lipschitz` and `controls` (levels δ and δ/2).
    #[arg(long, global = true, default_value_t = 1e-2)]
    delta: f64,
    /// Draws a seeded perturbation profile for `lipschitz` and `controls`.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the coupled system and write all artifacts.
    Run,
    /// Solve and write the a-priori bound ledger.
    Bounds,
    /// Lipschitz dependence on the initial data.
    Lipschitz,
    /// Stability in the source terms.
    Controls,
    /// Parabolic solver against the Green-function reference.
    Convergence,
    /// Upwind solver against the characteristics oracle.
    OracleCompare,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Scenario(_) | Error::Expr(_) => 2,
        Error::Coupling(CouplingError::InvalidScenario { .. }) => 2,
        Error::Io { .. } | Error::Csv(_) | Error::Json(_) => 1,
        _ => 3,
    }
}

fn print_perturbations(r: &ExperimentReport) {
    for p in &r.reports {
        let PerturbationReport {
            target,
            ratio_min,
            ratio_max,
            max_lhs,
            ..
        } = p;
        let fmt = |v: &Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.4}"));
        println!(
            "{target:?}: quotient ratios [{}, {}], max lhs {max_lhs:.3e}",
            fmt(ratio_min),
            fmt(ratio_max)
        );
    }
}

fn print_study(r: &StudyReport) {
    println!("n,h,dt,err_l1,err_linf");
    for row in &r.rows {
        println!("{},{:.6e},{:.6e},{:.6e},{:.6e}", row.n, row.h, row.dt, row.err_l1, row.err_linf);
    }
    println!("order_l1 = {:.4}, order_linf = {:.4}", r.order_l1, r.order_linf);
}

fn run(cli: &Cli) -> Result<(), Error> {
    let scenario = cli.scenario.as_deref().ok_or_else(|| {
        Error::from(hyperpara::error::ScenarioError::Validation {
            key: "--scenario".into(),
            msg: "a scenario file is required".into(),
        })
    })?;
    let out: PathBuf = match &cli.out {
        Some(dir) => dir.clone(),
        None => io::load_scenario_file(scenario)?.output.directory,
    };
    let out = out.as_path();
    match cli.command {
        Command::Run => {
            let a = io::cmd_run(scenario, Some(out))?;
            println!(
                "{} windows, {} steps; ledger {}; u_min {:.3e}, w_min {:.3e}",
                a.trace.accepted_windows().count(),
                a.trace.times.len() - 1,
                if a.report.pass { "pass" } else { "FAIL" },
                a.positivity.u_min,
                a.positivity.w_min
            );
            for f in &a.files {
                if f.parent().and_then(Path::file_name).is_none_or(|n| n != "snapshots") {
                    println!("wrote {}", f.display());
                }
            }
        }
        Command::Bounds => {
            let (r, pos) = io::cmd_bounds(scenario, out)?;
            for i in &r.inequalities {
                println!(
                    "{:<7} {} max lhs/rhs {:.4}",
                    i.name,
                    if i.pass { "pass" } else { "FAIL" },
                    i.max_ratio
                );
            }
            for f in &r.flags {
                println!("flag: {f}");
            }
            println!(
                "K_v = {:.4}, C_v = {:.4}, u_min {:.3e}, w_min {:.3e}",
                r.constants.k_v, r.constants.c_v, pos.u_min, pos.w_min
            );
        }
        Command::Lipschitz => print_perturbations(&io::cmd_lipschitz(scenario, out, cli.delta, cli.seed)?),
        Command::Controls => print_perturbations(&io::cmd_controls(scenario, out, cli.delta, cli.seed)?),
        Command::Convergence => print_study(&io::cmd_convergence(scenario, out, &cli.resolutions)?),
        Command::OracleCompare => print_study(&io::cmd_oracle_compare(scenario, out, &cli.resolutions)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(exit_code(&e))
        }
    }
}
