//! The nonlinear scheme for `-div(a(x,u) grad u) = f` with homogeneous
//! Dirichlet data, and its linearized fixed-point iteration.
//!
//! One iteration solves, around the current iterate `w`,
//! `lin(w; u, v) = lin(w; w, v) - nl(w; w, v) + (f, v)` where
//! `nl(w; u, v) = sum_T (a(., R w) G u, G v)_T + s(u, v)` and
//! `lin` adds the derivative term `(a_u(., R w) R u  G w, G v)_T`.
//! The stabilization weights are sampled from the current iterate and enter
//! both sides identically, so they cancel from the fixed-point equation.

use crate::linear::{assemble_condense_with, DirichletBc};
use crate::local_ops::{grad_norm, CellContext, HhoSpace, HybridVector, LocalOperators};
use crate::mesh::PolytopalMesh;
use crate::{Error, Result, ScalarFn, StateFn, VectorFn};
use nalgebra::{DMatrix, DVector};

/// Data of the quasilinear problem: coefficient `a(x, t)` with its
/// solution-derivative `a_u`, load, validity bounds `0 < alpha <= a <= m`,
/// and optional manufactured references.
pub struct QuasilinearProblemData {
    pub a: Box<StateFn>,
    pub a_u: Box<StateFn>,
    pub f: Box<ScalarFn>,
    pub alpha: f64,
    pub m: f64,
    pub u_exact: Option<Box<ScalarFn>>,
    pub grad_u_exact: Option<Box<VectorFn>>,
}

impl QuasilinearProblemData {
    fn check_bounds(&self, value: f64, x: f64, y: f64) -> Result<()> {
        if value < self.alpha - 1e-12 || value > self.m + 1e-12 {
            return Err(Error::CoefficientOutOfBounds {
                value,
                x,
                y,
                lower: self.alpha,
                upper: self.m,
            });
        }
        Ok(())
    }
}

/// How the per-face stabilization weight is chosen inside the iteration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StabWeightPolicy {
    /// `max |a(x, R w)|` over the face quadrature points of the current
    /// iterate, recomputed every iteration.
    FromIterate,
    /// A frozen constant weight on every face.
    Fixed(f64),
}

/// Convergence record of the fixed-point iteration.
#[derive(Clone, Debug)]
pub struct IterationReport {
    pub iterations: usize,
    /// Relative increments `|G(u^{n+1} - u^n)| / |G u^{n+1}|`, in order.
    pub increments: Vec<f64>,
    pub converged: bool,
    /// `(absolute, relative)` reconstructed-gradient error against
    /// `grad_u_exact` when the problem carries one.
    pub final_error: Option<(f64, f64)>,
}

/// Per-face stabilization weights of one cell under a policy.
fn cell_weights(
    space: &HhoSpace,
    ctx: &CellContext,
    ops: &LocalOperators,
    data: &QuasilinearProblemData,
    w: &HybridVector,
    policy: StabWeightPolicy,
) -> Result<Vec<f64>> {
    match policy {
        StabWeightPolicy::Fixed(c) => Ok(vec![c; ctx.faces.len()]),
        StabWeightPolicy::FromIterate => {
            let rw = &ops.r * w.local(ctx);
            let mut out = Vec::with_capacity(ctx.faces.len());
            for fc in &ctx.faces {
                let fb = &space.face_bases[fc.face];
                let mut m: f64 = 0.0;
                for (q, p) in fb.quad.points.iter().enumerate() {
                    let mut val = 0.0;
                    for i in 0..ctx.basis.dim() {
                        val += rw[i] * fc.cell_phi[(i, q)];
                    }
                    let a_val = (data.a)(p[0], p[1], val);
                    data.check_bounds(a_val, p[0], p[1])?;
                    m = m.max(a_val.abs());
                }
                out.push(m);
            }
            Ok(out)
        }
    }
}

/// Stabilization weights for every cell of the space.
pub fn stab_weights(
    space: &HhoSpace,
    data: &QuasilinearProblemData,
    w: &HybridVector,
    policy: StabWeightPolicy,
) -> Result<Vec<Vec<f64>>> {
    space
        .cells
        .iter()
        .zip(&space.ops)
        .map(|(ctx, ops)| cell_weights(space, ctx, ops, data, w, policy))
        .collect()
}

struct LocalBlocks {
    /// Linearized operator around `w`: diffusion at the frozen coefficient,
    /// derivative term, stabilization.
    full: DMatrix<f64>,
    /// Bilinear part of the nonlinear form at frozen coefficient:
    /// diffusion plus stabilization, without the derivative term.
    frozen: DMatrix<f64>,
    /// Load moments plus the derivative term evaluated at `w` itself; the
    /// diffusion and stabilization parts of the iteration right side cancel
    /// analytically.
    rhs: DVector<f64>,
}

fn local_blocks(
    space: &HhoSpace,
    cell: usize,
    data: &QuasilinearProblemData,
    w: &HybridVector,
    weights: &[f64],
) -> Result<LocalBlocks> {
    let ctx = &space.cells[cell];
    let ops = &space.ops[cell];
    let nk = ctx.n_cell;
    let n = ctx.n_loc;
    let quad = &ctx.basis.quad;
    let nq = quad.len();

    let w_loc = w.local(ctx);
    let rw = &ops.r * &w_loc;
    let gw = &ops.g * &w_loc;

    let phik = ctx.basis.phi.rows(0, nk);
    // Values of the gradient reconstruction basis images and of the
    // reconstruction at the quadrature points.
    let ex = phik.transpose() * ops.g.rows(0, nk);
    let ey = phik.transpose() * ops.g.rows(nk, nk);
    let rev = ctx.basis.phi.transpose() * &ops.r;

    let mut exw = ex.clone();
    let mut eyw = ey.clone();
    // t[q, i] = w_q a_u(x_q, R w) (G w . G_i)(q); rw_vals[q] = R w (x_q).
    let mut t = DMatrix::zeros(nq, n);
    let mut rw_vals = DVector::zeros(nq);
    for (q, p) in quad.points.iter().enumerate() {
        let wq = quad.weights[q];
        let mut rwq = 0.0;
        for i in 0..ctx.basis.dim() {
            rwq += rw[i] * ctx.basis.phi[(i, q)];
        }
        rw_vals[q] = rwq;
        let a_val = (data.a)(p[0], p[1], rwq);
        data.check_bounds(a_val, p[0], p[1])?;
        let au_val = (data.a_u)(p[0], p[1], rwq);
        let mut gwx = 0.0;
        let mut gwy = 0.0;
        for i in 0..nk {
            gwx += gw[i] * ctx.basis.phi[(i, q)];
            gwy += gw[nk + i] * ctx.basis.phi[(i, q)];
        }
        exw.row_mut(q).scale_mut(wq * a_val);
        eyw.row_mut(q).scale_mut(wq * a_val);
        let c = wq * au_val;
        for i in 0..n {
            t[(q, i)] = c * (gwx * ex[(q, i)] + gwy * ey[(q, i)]);
        }
    }

    let mut frozen = ex.transpose() * exw + ey.transpose() * eyw;
    frozen += ops.stab_with_weights(weights)?;
    let a2 = t.transpose() * &rev;
    let full = &frozen + &a2;

    let mut rhs = DVector::zeros(n);
    rhs.rows_mut(0, nk)
        .copy_from(&ctx.basis.moments(&*data.f, nk));
    rhs += t.transpose() * &rw_vals;
    Ok(LocalBlocks { full, frozen, rhs })
}

/// Value of the nonlinear form `nl(w; u, v)` with explicitly supplied
/// stabilization weights (one vector per cell).
pub fn nonlinear_form_with_weights(
    space: &HhoSpace,
    data: &QuasilinearProblemData,
    weights: &[Vec<f64>],
    w: &HybridVector,
    u: &HybridVector,
    v: &HybridVector,
) -> Result<f64> {
    let mut total = 0.0;
    for cell in 0..space.cells.len() {
        let blocks = local_blocks(space, cell, data, w, &weights[cell])?;
        let ctx = &space.cells[cell];
        let u_loc = u.local(ctx);
        let v_loc = v.local(ctx);
        total += (blocks.frozen * u_loc).dot(&v_loc);
    }
    Ok(total)
}

/// Value of the nonlinear form with stabilization weights sampled from `w`.
pub fn nonlinear_form(
    space: &HhoSpace,
    data: &QuasilinearProblemData,
    w: &HybridVector,
    u: &HybridVector,
    v: &HybridVector,
) -> Result<f64> {
    let weights = stab_weights(space, data, w, StabWeightPolicy::FromIterate)?;
    nonlinear_form_with_weights(space, data, &weights, w, u, v)
}

/// Value of the linearized form `lin(w; psi, v)` with explicit weights.
pub fn linearized_form_with_weights(
    space: &HhoSpace,
    data: &QuasilinearProblemData,
    weights: &[Vec<f64>],
    w: &HybridVector,
    psi: &HybridVector,
    v: &HybridVector,
) -> Result<f64> {
    let mut total = 0.0;
    for cell in 0..space.cells.len() {
        let blocks = local_blocks(space, cell, data, w, &weights[cell])?;
        let ctx = &space.cells[cell];
        let psi_loc = psi.local(ctx);
        let v_loc = v.local(ctx);
        total += (blocks.full * psi_loc).dot(&v_loc);
    }
    Ok(total)
}

/// Value of the linearized form with weights sampled from `w`.
pub fn linearized_form(
    space: &HhoSpace,
    data: &QuasilinearProblemData,
    w: &HybridVector,
    psi: &HybridVector,
    v: &HybridVector,
) -> Result<f64> {
    let weights = stab_weights(space, data, w, StabWeightPolicy::FromIterate)?;
    linearized_form_with_weights(space, data, &weights, w, psi, v)
}

/// Reconstructed-gradient error `(|grad u - G u_h|, relative)`; fails when
/// the exact gradient has zero norm.
pub fn reconstructed_gradient_error(
    space: &HhoSpace,
    grad_u_exact: &VectorFn,
    u_h: &HybridVector,
) -> Result<(f64, f64)> {
    let denom = crate::local_ops::exact_grad_norm(space, grad_u_exact);
    if denom == 0.0 {
        return Err(Error::ZeroReferenceNorm);
    }
    let abs = crate::local_ops::gradient_error(space, grad_u_exact, u_h);
    Ok((abs, abs / denom))
}

/// Initial guess: the plain Poisson problem `-lap u = f` with unit
/// coefficient and homogeneous Dirichlet data.
fn poisson_initial_guess(space: &HhoSpace, f: &ScalarFn) -> Result<HybridVector> {
    let system = assemble_condense_with(space, &DirichletBc::Homogeneous, |cell| {
        let ctx = &space.cells[cell];
        let ops = &space.ops[cell];
        let nk = ctx.n_cell;
        let mass_k = ctx.basis.mass.view((0, 0), (nk, nk));
        let gx = ops.g.rows(0, nk);
        let gy = ops.g.rows(nk, nk);
        let a = gx.transpose() * (mass_k * gx) + gy.transpose() * (mass_k * gy) + &ops.stab_unit;
        let mut rhs = DVector::zeros(ctx.n_loc);
        rhs.rows_mut(0, nk).copy_from(&ctx.basis.moments(f, nk));
        Ok((a, rhs))
    })?;
    system.solve(space)
}

/// Runs the linearized fixed-point iteration on a prebuilt space.
pub fn fixed_point_solve_with(
    space: &HhoSpace,
    data: &QuasilinearProblemData,
    tol: f64,
    max_iter: usize,
    policy: StabWeightPolicy,
) -> Result<(HybridVector, IterationReport)> {
    assert!(tol > 0.0, "tolerance must be positive");
    let mut w = poisson_initial_guess(space, &*data.f)?;
    let mut increments = Vec::new();
    let mut converged = false;

    for _ in 0..max_iter {
        let weights = stab_weights(space, data, &w, policy)?;
        let system = assemble_condense_with(space, &DirichletBc::Homogeneous, |cell| {
            let blocks = local_blocks(space, cell, data, &w, &weights[cell])?;
            Ok((blocks.full, blocks.rhs))
        })?;
        let u = system.solve(space)?;

        let num = grad_norm(space, &u.sub(&w));
        let denom = grad_norm(space, &u);
        let increment = if denom > 0.0 {
            num / denom
        } else if num == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        increments.push(increment);
        w = u;
        if increment <= tol {
            converged = true;
            break;
        }
        // Divergence guard; a wildly growing increment will not recover.
        if increment > 1e3 {
            break;
        }
    }

    let final_error = match &data.grad_u_exact {
        Some(g) => Some(reconstructed_gradient_error(space, &**g, &w)?),
        None => None,
    };
    let report = IterationReport {
        iterations: increments.len(),
        increments,
        converged,
        final_error,
    };
    Ok((w, report))
}

/// Runs the iteration on a mesh: builds the degree-`k` space, starts from
/// the Poisson initial guess, stops when the relative gradient increment
/// drops below `tol` (default 1e-10) or after `max_iter` steps (default 25,
/// reported as not converged).
pub fn fixed_point_solve(
    mesh: &PolytopalMesh,
    data: &QuasilinearProblemData,
    k: usize,
    tol: f64,
    max_iter: usize,
) -> Result<(HybridVector, IterationReport)> {
    let space = HhoSpace::new(mesh, k)?;
    fixed_point_solve_with(&space, data, tol, max_iter, StabWeightPolicy::FromIterate)
}

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 25;
