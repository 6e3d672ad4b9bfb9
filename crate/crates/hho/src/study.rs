//! Convergence-study driver: manufactured problems, rate tables, and
//! CSV / log-log plot-data output.

use crate::linear::{
    solve_linear, solve_linear_full, DirichletBc, LinearProblemData,
};
use crate::local_ops::{interpolate, HhoSpace};
use crate::mesh::families::generate_mesh;
use crate::mesh::{MeshFamily, PolytopalMesh};
use crate::quasilinear::{
    fixed_point_solve_with, linearized_form_with_weights, nonlinear_form_with_weights,
    reconstructed_gradient_error, stab_weights, QuasilinearProblemData, StabWeightPolicy,
    DEFAULT_MAX_ITER,
};
use crate::{Error, Result, ScalarFn, VectorFn};
use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

/// Which manufactured problem a study solves.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProblemKind {
    /// Constant-coefficient Poisson probe with a polynomial solution of
    /// degree `k + 1`: exercises exact reproduction, not rates.
    Poisson,
    /// Nonselfadjoint problem with `u = sin(pi x) sin(pi y)`, `a = 1 + x`,
    /// `b = (1, 1)`, `a0 = 1`.
    Nonselfadjoint,
    /// Quasilinear problem with `a(u) = 1 + u`, `u = x(1-x)y(1-y)`.
    Quasilinear,
}

impl ProblemKind {
    pub const ALL: [ProblemKind; 3] = [
        ProblemKind::Poisson,
        ProblemKind::Nonselfadjoint,
        ProblemKind::Quasilinear,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ProblemKind::Poisson => "poisson",
            ProblemKind::Nonselfadjoint => "nonselfadjoint",
            ProblemKind::Quasilinear => "quasilinear",
        }
    }
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProblemKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<ProblemKind> {
        ProblemKind::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "unknown problem '{s}' (expected poisson, nonselfadjoint or quasilinear)"
                ))
            })
    }
}

/// Configuration of one convergence study.
#[derive(Clone, Debug)]
pub struct StudyConfig {
    pub problem: ProblemKind,
    pub family: MeshFamily,
    pub degrees: Vec<usize>,
    /// Refinement levels, ascending.
    pub levels: Vec<usize>,
    /// Iteration tolerance for the quasilinear solver.
    pub tol: f64,
    /// Seed for the randomized check suite (`run_checks`); the study itself
    /// is deterministic.
    pub seed: u64,
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.degrees.is_empty() {
            return Err(Error::InvalidConfig("no degrees given".into()));
        }
        if let Some(&k) = self.degrees.iter().find(|&&k| k > 3) {
            return Err(Error::InvalidConfig(format!(
                "degree {k} out of the supported range 0..=3"
            )));
        }
        if self.levels.is_empty() {
            return Err(Error::InvalidConfig("no levels given".into()));
        }
        if self.levels.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidConfig(format!(
                "levels must be strictly ascending, got {:?}",
                self.levels
            )));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "tolerance must be positive, got {}",
                self.tol
            )));
        }
        Ok(())
    }
}

/// One measurement of a study: an error value on one (degree, level) pair.
#[derive(Clone, Debug)]
pub struct RateRow {
    pub family: MeshFamily,
    pub k: usize,
    pub level: usize,
    pub h: f64,
    pub ndof: usize,
    /// Relative reconstructed-gradient error.
    pub error: f64,
    /// `log(e_l / e_{l-1}) / log(h_l / h_{l-1})` against the previous level
    /// of the same (family, k) group; `None` on each group's first level.
    pub rate: Option<f64>,
    /// Nonlinear-iteration convergence; always true for linear problems.
    pub converged: bool,
}

/// Ordered measurements of a whole study.
#[derive(Clone, Debug, Default)]
pub struct RateTable {
    pub rows: Vec<RateRow>,
}

impl RateTable {
    /// Observed rate of the final level pair for one (family, k) group.
    pub fn final_rate(&self, family: MeshFamily, k: usize) -> Option<f64> {
        self.rows
            .iter()
            .rev()
            .find(|r| r.family == family && r.k == k && r.rate.is_some())
            .and_then(|r| r.rate)
    }
}

/// The quasilinear manufactured problem: `a(u) = 1 + u` with the product
/// bubble `u = x(1-x)y(1-y)` and homogeneous Dirichlet data.
pub fn bubble_quasilinear_problem() -> QuasilinearProblemData {
    let u = |x: f64, y: f64| x * (1.0 - x) * y * (1.0 - y);
    let grad_u = |x: f64, y: f64| {
        [
            (1.0 - 2.0 * x) * y * (1.0 - y),
            x * (1.0 - x) * (1.0 - 2.0 * y),
        ]
    };
    let lap_u = |x: f64, y: f64| -2.0 * y * (1.0 - y) - 2.0 * x * (1.0 - x);
    QuasilinearProblemData {
        a: Box::new(|_, _, t| 1.0 + t),
        a_u: Box::new(|_, _, _| 1.0),
        f: quasilinear_rhs(u, grad_u, lap_u, |_, _, t| 1.0 + t, |_, _, _| 1.0),
        alpha: 0.5,
        m: 2.5,
        u_exact: Some(Box::new(u)),
        grad_u_exact: Some(Box::new(grad_u)),
    }
}

/// The nonselfadjoint manufactured problem: `u = sin(pi x) sin(pi y)`,
/// `a = 1 + x`, `b = (1, 1)`, `a0 = 1`, homogeneous Dirichlet data.
/// Returns the problem data together with `u` and `grad u`.
pub fn sine_nonselfadjoint_problem() -> (LinearProblemData, Box<ScalarFn>, Box<VectorFn>) {
    let u = |x: f64, y: f64| (PI * x).sin() * (PI * y).sin();
    let grad_u = |x: f64, y: f64| {
        [
            PI * (PI * x).cos() * (PI * y).sin(),
            PI * (PI * x).sin() * (PI * y).cos(),
        ]
    };
    let lap_u = move |x: f64, y: f64| -2.0 * PI * PI * u(x, y);
    let data = LinearProblemData {
        a: Box::new(|x, _| 1.0 + x),
        b: Box::new(|_, _| [1.0, 1.0]),
        a0: Box::new(|_, _| 1.0),
        f: linear_rhs(
            u,
            grad_u,
            lap_u,
            |x, _| 1.0 + x,
            |_, _| [1.0, 0.0],
            |_, _| [1.0, 1.0],
            |_, _| 1.0,
        ),
    };
    (data, Box::new(u), Box::new(grad_u))
}

/// The constant-coefficient Poisson probe with the global polynomial
/// solution `u = (x + 2y)^(k+1)`, imposed through its boundary trace.
/// Returns the problem data together with `u` and `grad u`.
pub fn polynomial_poisson_problem(k: usize) -> (LinearProblemData, Box<ScalarFn>, Box<VectorFn>) {
    let e = (k + 1) as i32;
    let u = move |x: f64, y: f64| (x + 2.0 * y).powi(e);
    let grad_u = move |x: f64, y: f64| {
        let d = e as f64 * (x + 2.0 * y).powi(e - 1);
        [d, 2.0 * d]
    };
    let lap_u = move |x: f64, y: f64| {
        if e < 2 {
            0.0
        } else {
            5.0 * (e * (e - 1)) as f64 * (x + 2.0 * y).powi(e - 2)
        }
    };
    let data = LinearProblemData {
        a: Box::new(|_, _| 1.0),
        b: Box::new(|_, _| [0.0, 0.0]),
        a0: Box::new(|_, _| 0.0),
        f: linear_rhs(
            u,
            grad_u,
            lap_u,
            |_, _| 1.0,
            |_, _| [0.0, 0.0],
            |_, _| [0.0, 0.0],
            |_, _| 0.0,
        ),
    };
    (data, Box::new(u), Box::new(grad_u))
}

/// Right-hand side `f = -a(x,u) lap u - a_u(x,u) |grad u|^2` of the
/// quasilinear problem, valid for coefficients with no explicit spatial
/// gradient (the divergence expansion drops the `grad_x a` term).
pub fn quasilinear_rhs(
    u: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    grad_u: impl Fn(f64, f64) -> [f64; 2] + Send + Sync + 'static,
    lap_u: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    a: impl Fn(f64, f64, f64) -> f64 + Send + Sync + 'static,
    a_u: impl Fn(f64, f64, f64) -> f64 + Send + Sync + 'static,
) -> Box<ScalarFn> {
    Box::new(move |x, y| {
        let uv = u(x, y);
        let g = grad_u(x, y);
        -a(x, y, uv) * lap_u(x, y) - a_u(x, y, uv) * (g[0] * g[0] + g[1] * g[1])
    })
}

/// Right-hand side `p = -grad a . grad u - a lap u + b . grad u + a0 u`
/// of the linear problem.
pub fn linear_rhs(
    u: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    grad_u: impl Fn(f64, f64) -> [f64; 2] + Send + Sync + 'static,
    lap_u: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    a: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    grad_a: impl Fn(f64, f64) -> [f64; 2] + Send + Sync + 'static,
    b: impl Fn(f64, f64) -> [f64; 2] + Send + Sync + 'static,
    a0: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
) -> Box<ScalarFn> {
    Box::new(move |x, y| {
        let g = grad_u(x, y);
        let ga = grad_a(x, y);
        let bv = b(x, y);
        -(ga[0] * g[0] + ga[1] * g[1]) - a(x, y) * lap_u(x, y)
            + bv[0] * g[0]
            + bv[1] * g[1]
            + a0(x, y) * u(x, y)
    })
}

fn with_context<T>(r: Result<T>, config: &StudyConfig, k: usize, level: usize) -> Result<T> {
    r.map_err(|e| Error::Study {
        context: format!(
            "{} on {}, k = {k}, level = {level}",
            config.problem, config.family
        ),
        source: Box::new(e),
    })
}

/// Runs a convergence study: for every degree and level, generates the mesh,
/// solves the configured problem, and records the relative
/// reconstructed-gradient error with consecutive-level rates. Deterministic
/// for a fixed configuration.
pub fn run_study(config: &StudyConfig) -> Result<RateTable> {
    run_study_with(config, DEFAULT_MAX_ITER)
}

/// [`run_study`] with an explicit cap on nonlinear iterations per solve.
pub fn run_study_with(config: &StudyConfig, max_iter: usize) -> Result<RateTable> {
    config.validate()?;
    let mut table = RateTable::default();
    for &k in &config.degrees {
        let mut previous: Option<(f64, f64)> = None;
        for &level in &config.levels {
            let mesh = with_context(generate_mesh(config.family, level), config, k, level)?;
            let (error, converged) = with_context(
                solve_measure(config.problem, &mesh, k, config.tol, max_iter),
                config,
                k,
                level,
            )?;
            let h = mesh.max_cell_diameter();
            let rate = previous.map(|(hp, ep)| (error / ep).ln() / (h / hp).ln());
            previous = Some((h, error));
            table.rows.push(RateRow {
                family: config.family,
                k,
                level,
                h,
                ndof: (k + 1) * mesh.n_interior_faces(),
                error,
                rate,
                converged,
            });
        }
    }
    Ok(table)
}

/// Solves one problem on one mesh and returns the relative
/// reconstructed-gradient error and the convergence flag.
pub fn solve_measure(
    problem: ProblemKind,
    mesh: &PolytopalMesh,
    k: usize,
    tol: f64,
    max_iter: usize,
) -> Result<(f64, bool)> {
    match problem {
        ProblemKind::Poisson => {
            let (data, u, grad_u) = polynomial_poisson_problem(k);
            let space = HhoSpace::new(mesh, k)?;
            let sol = solve_linear(&space, &data, &DirichletBc::Trace(u))?;
            let (_, rel) = reconstructed_gradient_error(&space, &*grad_u, &sol)?;
            Ok((rel, true))
        }
        ProblemKind::Nonselfadjoint => {
            let (data, _, grad_u) = sine_nonselfadjoint_problem();
            let space = HhoSpace::new(mesh, k)?;
            let sol = solve_linear(&space, &data, &DirichletBc::Homogeneous)?;
            let (_, rel) = reconstructed_gradient_error(&space, &*grad_u, &sol)?;
            Ok((rel, true))
        }
        ProblemKind::Quasilinear => {
            let data = bubble_quasilinear_problem();
            let space = HhoSpace::new(mesh, k)?;
            let (_, report) =
                fixed_point_solve_with(&space, &data, tol, max_iter, StabWeightPolicy::FromIterate)?;
            let (_, rel) = report.final_error.expect("problem carries grad_u_exact");
            Ok((rel, report.converged))
        }
    }
}

/// CSV rendering with the fixed column set
/// `family,k,level,h,ndof,error,rate`; the rate field is empty on the first
/// level of each group.
pub fn csv_string(table: &RateTable) -> String {
    let mut out = String::from("family,k,level,h,ndof,error,rate\n");
    for r in &table.rows {
        let rate = r.rate.map(|v| v.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.family, r.k, r.level, r.h, r.ndof, r.error, rate
        ));
    }
    out
}

pub fn emit_csv(table: &RateTable, path: &Path) -> Result<()> {
    std::fs::write(path, csv_string(table))?;
    Ok(())
}

/// Log-log plot data: one block per (family, k) series of
/// `log10(h) log10(error)` pairs, blocks separated by blank lines.
pub fn plotdata_string(table: &RateTable) -> String {
    let mut out = String::new();
    let mut current: Option<(MeshFamily, usize)> = None;
    for r in &table.rows {
        if current != Some((r.family, r.k)) {
            if current.is_some() {
                out.push('\n');
            }
            out.push_str(&format!("# {} k={}\n", r.family, r.k));
            current = Some((r.family, r.k));
        }
        out.push_str(&format!("{} {}\n", r.h.log10(), r.error.log10()));
    }
    out
}

pub fn emit_plotdata(table: &RateTable, path: &Path) -> Result<()> {
    std::fs::write(path, plotdata_string(table))?;
    Ok(())
}

/// Outcome of one named consistency check.
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Seeded consistency suite behind the CLI `check` command: polynomial
/// exactness of the local operators, agreement of the condensed and full
/// solver routes, the directional-derivative identity of the linearized
/// form, and the degenerate linear case of the nonlinear iteration.
pub fn run_checks(seed: u64) -> Result<Vec<CheckOutcome>> {
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    let mut rng = StdRng::seed_from_u64(seed);
    let mut outcomes = Vec::new();

    // Reconstruction / stabilization / gradient identities on random cells.
    {
        let mut worst: f64 = 0.0;
        let mut detail = String::new();
        for family in MeshFamily::ALL {
            let mesh = generate_mesh(family, 1)?;
            for k in 0..=2 {
                let space = HhoSpace::new(&mesh, k)?;
                let e = (k + 1) as i32;
                let q = move |x: f64, y: f64| (0.3 * x + 2.0 * y - 0.7).powi(e);
                let v = interpolate(&space, &q);
                for _ in 0..20 {
                    let cell = rng.gen_range(0..mesh.n_cells());
                    let ctx = &space.cells[cell];
                    let ops = &space.ops[cell];
                    let local = v.local(ctx);
                    let rc = &ops.r * &local;
                    let mut dev: f64 = 0.0;
                    for (qp, p) in ctx.basis.quad.points.iter().enumerate() {
                        let mut val = 0.0;
                        for i in 0..ctx.basis.dim() {
                            val += rc[i] * ctx.basis.phi[(i, qp)];
                        }
                        dev = dev.max((val - q(p[0], p[1])).abs());
                    }
                    for s in &ops.s {
                        dev = dev.max((s * &local).amax());
                    }
                    worst = worst.max(dev);
                    if dev > 1e-10 && detail.is_empty() {
                        detail = format!("{family}, k = {k}, cell {cell}: deviation {dev:e}");
                    }
                }
            }
        }
        outcomes.push(CheckOutcome {
            name: "reconstruction and stabilization polynomial identities",
            passed: worst <= 1e-10,
            detail: if detail.is_empty() {
                format!("worst deviation {worst:e}")
            } else {
                detail
            },
        });
    }

    // Gradient reconstruction commutes with projection. Degree k + 3 is the
    // largest for which the default quadrature computes the interpolation
    // moments exactly, keeping the identity at rounding level.
    {
        let mesh = generate_mesh(MeshFamily::Hexagonal, 0)?;
        let mut worst: f64 = 0.0;
        for k in 0..=2 {
            let space = HhoSpace::new(&mesh, k)?;
            let e = (k + 3) as i32;
            let v = interpolate(&space, &move |x, y| (0.4 * x + y - 0.3).powi(e));
            let gx = move |x: f64, y: f64| 0.4 * e as f64 * (0.4 * x + y - 0.3).powi(e - 1);
            let gy = move |x: f64, y: f64| e as f64 * (0.4 * x + y - 0.3).powi(e - 1);
            for (ctx, ops) in space.cells.iter().zip(&space.ops) {
                let g = &ops.g * v.local(ctx);
                let px = ctx.project_k(&gx);
                let py = ctx.project_k(&gy);
                for i in 0..ctx.n_cell {
                    worst = worst.max((g[i] - px[i]).abs().max((g[ctx.n_cell + i] - py[i]).abs()));
                }
            }
        }
        outcomes.push(CheckOutcome {
            name: "gradient reconstruction commutes with the projection",
            passed: worst <= 1e-10,
            detail: format!("worst coefficient deviation {worst:e}"),
        });
    }

    // Condensed and full solver routes agree.
    {
        let (data, _, _) = sine_nonselfadjoint_problem();
        let mesh = generate_mesh(MeshFamily::Kershaw, 0)?;
        let space = HhoSpace::new(&mesh, 1)?;
        let cond = solve_linear(&space, &data, &DirichletBc::Homogeneous)?;
        let full = solve_linear_full(&space, &data, &DirichletBc::Homogeneous)?;
        let dev = cond.sub(&full).max_abs();
        outcomes.push(CheckOutcome {
            name: "condensed and dense solver routes agree",
            passed: dev <= 1e-9,
            detail: format!("largest coefficient deviation {dev:e}"),
        });
    }

    // Directional derivative of the nonlinear form.
    {
        let data = QuasilinearProblemData {
            a: Box::new(|_, _, t| 2.0 + t.sin()),
            a_u: Box::new(|_, _, t| t.cos()),
            f: Box::new(|_, _| 0.0),
            alpha: 1.0,
            m: 3.0,
            u_exact: None,
            grad_u_exact: None,
        };
        let mesh = generate_mesh(MeshFamily::Cartesian, 0)?;
        let mut worst: f64 = 0.0;
        for k in 0..=1 {
            let space = HhoSpace::new(&mesh, k)?;
            let mut rand_vec = || {
                let mut v = crate::local_ops::HybridVector::zeros(&mesh, k);
                for c in &mut v.cells {
                    c.iter_mut().for_each(|x| *x = rng.gen_range(-0.5..0.5));
                }
                for f in &mut v.faces {
                    f.iter_mut().for_each(|x| *x = rng.gen_range(-0.5..0.5));
                }
                v
            };
            let w = rand_vec();
            let psi = rand_vec();
            let v = rand_vec();
            let weights = stab_weights(&space, &data, &w, StabWeightPolicy::FromIterate)?;
            let lin = linearized_form_with_weights(&space, &data, &weights, &w, &psi, &v)?;
            let eps = 1e-4;
            let f_at = |t: f64| -> Result<f64> {
                let mut s = w.clone();
                s.axpy(t, &psi);
                nonlinear_form_with_weights(&space, &data, &weights, &s, &s, &v)
            };
            let fd = (f_at(eps)? - f_at(-eps)?) / (2.0 * eps);
            worst = worst.max((fd - lin).abs() / lin.abs().max(1.0));
        }
        outcomes.push(CheckOutcome {
            name: "linearized form matches finite differences",
            passed: worst <= 1e-5,
            detail: format!("largest relative defect {worst:e}"),
        });
    }

    // Nonlinear solver degenerates to the linear one for a(x, u) = a(x).
    {
        let mesh = generate_mesh(MeshFamily::Triangular, 1)?;
        let data = QuasilinearProblemData {
            a: Box::new(|x, y, _| 1.0 + x * y),
            a_u: Box::new(|_, _, _| 0.0),
            f: Box::new(|x, y| x - y + 1.0),
            alpha: 1.0,
            m: 2.0,
            u_exact: None,
            grad_u_exact: None,
        };
        let space = HhoSpace::new(&mesh, 1)?;
        let (u_q, report) =
            fixed_point_solve_with(&space, &data, 1e-10, DEFAULT_MAX_ITER, StabWeightPolicy::FromIterate)?;
        let linear_data = LinearProblemData {
            a: Box::new(|x, y| 1.0 + x * y),
            b: Box::new(|_, _| [0.0, 0.0]),
            a0: Box::new(|_, _| 0.0),
            f: Box::new(|x, y| x - y + 1.0),
        };
        let u_l = solve_linear(&space, &linear_data, &DirichletBc::Homogeneous)?;
        let dev = u_q.sub(&u_l).max_abs();
        outcomes.push(CheckOutcome {
            name: "linear coefficient reduces to the linear solver",
            passed: report.converged && dev <= 1e-10,
            detail: format!("deviation {dev:e} after {} iterations", report.iterations),
        });
    }

    Ok(outcomes)
}
