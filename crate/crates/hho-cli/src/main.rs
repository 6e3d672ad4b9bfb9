//! Command-line front end for the polytopal HHO solver.
//!
//! `hho solve` runs a convergence study (or a single solve on an external
//! mesh file) and writes the rate table as CSV; `hho check` runs the seeded
//! consistency suites. Exit codes: 0 on success, 2 when a tolerance or
//! consistency check fails, 1 on any other error.

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use hho::mesh::io::read_mesh;
use hho::mesh::MeshFamily;
use hho::study::{
    csv_string, emit_csv, emit_plotdata, run_checks, run_study_with, solve_measure, ProblemKind,
    RateRow, RateTable, StudyConfig,
};
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

#[derive(Parser)]
#[command(
    name = "hho",
    version,
    about = "Hybrid high-order solver for elliptic problems on polytopal meshes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a convergence study and write its rate table as CSV.
    Solve {
        /// Manufactured problem: poisson, nonselfadjoint or quasilinear.
        #[arg(long)]
        problem: ProblemKind,
        /// Mesh family: triangular, cartesian, kershaw or hexagonal.
        #[arg(long, default_value = "triangular")]
        family: MeshFamily,
        /// Polynomial degree k of the face and cell unknowns.
        #[arg(long, default_value_t = 1)]
        degree: usize,
        /// Refinement levels, either one level `L` or an inclusive range `A..B`.
        #[arg(long, default_value = "0..3")]
        levels: Levels,
        /// Relative-increment tolerance of the nonlinear iteration.
        #[arg(long, default_value_t = hho::quasilinear::DEFAULT_TOL)]
        tol: f64,
        /// Cap on nonlinear iterations per solve.
        #[arg(long, default_value_t = hho::quasilinear::DEFAULT_MAX_ITER)]
        max_iter: usize,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
        /// Also write log10-log10 plot data to this path.
        #[arg(long)]
        plot: Option<PathBuf>,
        /// Solve on this mesh file instead of the generated family levels.
        #[arg(long)]
        mesh: Option<PathBuf>,
    },
    /// Run the seeded consistency suites and report each outcome.
    Check {
        /// Seed of the randomized cell/vector selections.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// Inclusive level range parsed from `A..B` (or a single level `L`).
#[derive(Clone, Debug)]
struct Levels(Vec<usize>);

impl FromStr for Levels {
    type Err = String;

    fn from_str(s: &str) -> Result<Levels, String> {
        let parse = |t: &str| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| format!("invalid level '{}'", t.trim()))
        };
        if let Some((a, b)) = s.split_once("..") {
            let (a, b) = (parse(a)?, parse(b)?);
            if b < a {
                return Err(format!("empty level range {a}..{b}"));
            }
            Ok(Levels((a..=b).collect()))
        } else {
            Ok(Levels(vec![parse(s)?]))
        }
    }
}

fn main() -> ExitCode {
    // Clap's own usage errors exit with 2; reserve 2 for tolerance failures
    // and remap usage problems onto the generic error code 1.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> hho::Result<ExitCode> {
    match cli.command {
        Command::Solve {
            problem,
            family,
            degree,
            levels,
            tol,
            max_iter,
            out,
            plot,
            mesh,
        } => {
            let config = StudyConfig {
                problem,
                family,
                degrees: vec![degree],
                levels: levels.0,
                tol,
                seed: 0,
            };
            let table = match mesh {
                Some(path) => single_mesh_table(&config, &path, max_iter)?,
                None => run_study_with(&config, max_iter)?,
            };
            emit_csv(&table, &out)?;
            if let Some(path) = plot {
                emit_plotdata(&table, &path)?;
            }
            print!("{}", csv_string(&table));
            if table.rows.iter().all(|r| r.converged) {
                Ok(ExitCode::SUCCESS)
            } else {
                eprintln!("nonlinear iteration did not reach tolerance {tol:e} on every level");
                Ok(ExitCode::from(2))
            }
        }
        Command::Check { seed } => {
            let outcomes = run_checks(seed)?;
            let mut all_passed = true;
            for o in &outcomes {
                let verdict = if o.passed { "PASS" } else { "FAIL" };
                println!("{verdict} {}: {}", o.name, o.detail);
                all_passed &= o.passed;
            }
            if all_passed {
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::from(2))
            }
        }
    }
}

/// One-mesh study: solves the configured problem on a mesh read from disk.
/// The rate column stays empty since there is no refinement sequence.
fn single_mesh_table(
    config: &StudyConfig,
    path: &PathBuf,
    max_iter: usize,
) -> hho::Result<RateTable> {
    config.validate()?;
    let mesh = read_mesh(path)?;
    let mut table = RateTable::default();
    for &k in &config.degrees {
        let (error, converged) = solve_measure(config.problem, &mesh, k, config.tol, max_iter)?;
        table.rows.push(RateRow {
            family: config.family,
            k,
            level: config.levels[0],
            h: mesh.max_cell_diameter(),
            ndof: (k + 1) * mesh.n_interior_faces(),
            error,
            rate: None,
            converged,
        });
    }
    Ok(table)
}
