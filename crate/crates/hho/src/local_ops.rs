//! Local ingredients of the hybrid high-order method: hybrid cell/face
//! unknowns, the potential reconstruction of degree `k + 1`, the gradient
//! reconstruction in `P^k(T)^2`, and the face-difference stabilization.
//!
//! On a cell `T` with faces `F`, local unknowns are ordered cell block
//! first, then one block of `k + 1` coefficients per face, faces sorted by
//! ascending global index.

use crate::mesh::PolytopalMesh;
use crate::poly::{dim_pk, weighted_gram, CellBasisSet, FaceBasisSet};
use crate::{Error, Result, ScalarFn, VectorFn};
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;

/// Quadrature exactness used for all operators at polynomial degree `k`.
pub fn default_quad_exactness(k: usize) -> usize {
    2 * (k + 2)
}

/// Trace data of one face as seen from one cell.
pub struct FaceContext {
    /// Global face index.
    pub face: usize,
    pub h: f64,
    /// Outward unit normal of the owning cell.
    pub normal: [f64; 2],
    /// Cell basis traces at the face quadrature points, one row per basis
    /// function of degree `k + 1`.
    pub cell_phi: DMatrix<f64>,
    /// Normal derivatives of the cell basis at the face quadrature points.
    pub cell_dphi_n: DMatrix<f64>,
}

/// Per-cell discrete data: the degree-`k + 1` basis (whose prefix is the
/// degree-`k` basis), face traces, and the factorized degree-`k` mass.
pub struct CellContext {
    pub cell: usize,
    pub k: usize,
    pub basis: CellBasisSet,
    pub faces: Vec<FaceContext>,
    /// Dimension of the cell unknown block, `dim P^k`.
    pub n_cell: usize,
    pub n_loc: usize,
    chol_k: Cholesky<f64, Dyn>,
}

impl CellContext {
    pub fn new(
        mesh: &PolytopalMesh,
        face_bases: &[FaceBasisSet],
        cell: usize,
        k: usize,
    ) -> Result<CellContext> {
        let basis = CellBasisSet::for_cell(mesh, cell, k + 1, default_quad_exactness(k))?;
        let nkp1 = basis.dim();
        let n_cell = dim_pk(k);

        let mut locals: Vec<(usize, usize)> = mesh
            .cell_faces(cell)
            .iter()
            .copied()
            .enumerate()
            .map(|(local, f)| (f, local))
            .collect();
        locals.sort_unstable();

        let mut faces = Vec::with_capacity(locals.len());
        for (f, local) in locals {
            let fb = &face_bases[f];
            let normal = mesh.outward_normal(cell, local);
            let nq = fb.quad.len();
            let mut cell_phi = DMatrix::zeros(nkp1, nq);
            let mut cell_dphi_n = DMatrix::zeros(nkp1, nq);
            for (q, p) in fb.quad.points.iter().enumerate() {
                for i in 0..nkp1 {
                    cell_phi[(i, q)] = basis.eval(i, p[0], p[1]);
                    let g = basis.eval_grad(i, p[0], p[1]);
                    cell_dphi_n[(i, q)] = g[0] * normal[0] + g[1] * normal[1];
                }
            }
            faces.push(FaceContext {
                face: f,
                h: mesh.face_length(f),
                normal,
                cell_phi,
                cell_dphi_n,
            });
        }

        let n_loc = n_cell + faces.len() * (k + 1);
        let mass_k = basis.mass.view((0, 0), (n_cell, n_cell)).into_owned();
        let chol_k = Cholesky::new(mass_k).ok_or_else(|| Error::DegenerateBasis {
            entity: format!("cell {cell}"),
        })?;
        Ok(CellContext {
            cell,
            k,
            basis,
            faces,
            n_cell,
            n_loc,
            chol_k,
        })
    }

    /// Offset of the unknown block of local face `local`.
    pub fn face_offset(&self, local: usize) -> usize {
        self.n_cell + local * (self.k + 1)
    }

    /// Solves against the degree-`k` mass matrix.
    pub fn solve_mass_k(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol_k.solve(b)
    }

    /// L2 projection of `f` onto the degree-`k` cell polynomials.
    pub fn project_k(&self, f: &ScalarFn) -> DVector<f64> {
        self.chol_k.solve(&self.basis.moments(f, self.n_cell))
    }
}

/// The reconstruction, gradient and stabilization matrices of one cell,
/// acting on local hybrid vectors.
pub struct LocalOperators {
    pub cell: usize,
    /// Potential reconstruction into `P^{k+1}`: `dim P^{k+1} x n_loc`.
    pub r: DMatrix<f64>,
    /// Gradient reconstruction into `P^k(T)^2`, x-component coefficients
    /// stacked over y-component: `2 dim P^k x n_loc`.
    pub g: DMatrix<f64>,
    /// Face difference operators `S_F`, one `(k+1) x n_loc` matrix per local
    /// face (same order as `CellContext::faces`).
    pub s: Vec<DMatrix<f64>>,
    /// `M_F S_F`, cached for stabilization assembly.
    ms: Vec<DMatrix<f64>>,
    face_ids: Vec<usize>,
    face_h: Vec<f64>,
    /// Stabilization bilinear form with unit face weights.
    pub stab_unit: DMatrix<f64>,
}

impl LocalOperators {
    pub fn build(ctx: &CellContext, face_bases: &[FaceBasisSet]) -> Result<LocalOperators> {
        let r = build_reconstruction(ctx, face_bases)?;
        let g = build_gradient_reconstruction(ctx, face_bases);
        let (s, ms) = build_stabilization(ctx, face_bases, &r);
        let face_ids: Vec<usize> = ctx.faces.iter().map(|fc| fc.face).collect();
        let face_h: Vec<f64> = ctx.faces.iter().map(|fc| fc.h).collect();
        let mut ops = LocalOperators {
            cell: ctx.cell,
            r,
            g,
            s,
            ms,
            face_ids,
            face_h,
            stab_unit: DMatrix::zeros(ctx.n_loc, ctx.n_loc),
        };
        ops.stab_unit = ops.stab_with_weights(&vec![1.0; ops.face_ids.len()])?;
        Ok(ops)
    }

    /// Stabilization form `sum_F (w_F / h_F) (S_F u, S_F v)_F` for given
    /// per-face weights.
    pub fn stab_with_weights(&self, weights: &[f64]) -> Result<DMatrix<f64>> {
        assert_eq!(weights.len(), self.s.len());
        let n = self.s[0].ncols();
        let mut out = DMatrix::zeros(n, n);
        for (local, (s, ms)) in self.s.iter().zip(&self.ms).enumerate() {
            let w = weights[local];
            if !(w > 0.0) || !w.is_finite() {
                return Err(Error::NonpositiveWeight {
                    face: self.face_ids[local],
                    weight: w,
                });
            }
            out.gemm_tr(w / self.face_h[local], s, ms, 1.0);
        }
        Ok(out)
    }
}

/// Matrix of the potential reconstruction: for a local hybrid vector `v`,
/// `R v` is the degree-`k + 1` polynomial whose gradient satisfies
/// `(grad R v, grad w)_T = (grad v_T, grad w)_T
///    + sum_F (v_F - v_T, grad w . n_TF)_F` for all `w` and whose mean over
/// the cell matches the mean of `v_T`.
pub fn build_reconstruction(
    ctx: &CellContext,
    face_bases: &[FaceBasisSet],
) -> Result<DMatrix<f64>> {
    let nkp1 = ctx.basis.dim();
    let nk = ctx.n_cell;
    let n = ctx.n_loc;
    let fdim = ctx.k + 1;

    let knc = ctx
        .basis
        .stiffness
        .view((1, 1), (nkp1 - 1, nkp1 - 1))
        .into_owned();
    let chol = Cholesky::new(knc).ok_or(Error::SingularLocalSystem { cell: ctx.cell })?;

    let mut b = DMatrix::zeros(nkp1 - 1, n);
    for i in 1..nkp1 {
        for j in 0..nk {
            b[(i - 1, j)] = ctx.basis.stiffness[(i, j)];
        }
    }
    for (local, fc) in ctx.faces.iter().enumerate() {
        let fb = &face_bases[fc.face];
        let off = ctx.face_offset(local);
        for i in 1..nkp1 {
            for (q, &wq) in fb.quad.weights.iter().enumerate() {
                let dwn = wq * fc.cell_dphi_n[(i, q)];
                for j in 0..nk {
                    b[(i - 1, j)] -= dwn * fc.cell_phi[(j, q)];
                }
                for m in 0..fdim {
                    b[(i - 1, off + m)] += dwn * fb.phi[(m, q)];
                }
            }
        }
    }
    let rnc = chol.solve(&b);

    let mut r = DMatrix::zeros(nkp1, n);
    r.view_mut((1, 0), (nkp1 - 1, n)).copy_from(&rnc);
    // Mean constraint. The first basis function is constant 1, so column 0
    // of the mass matrix holds the basis integrals and its top entry |T|.
    let integrals = ctx.basis.mass.column(0);
    let area = integrals[0];
    for j in 0..n {
        let target = if j < nk { integrals[j] } else { 0.0 };
        let mut acc = 0.0;
        for i in 1..nkp1 {
            acc += integrals[i] * r[(i, j)];
        }
        r[(0, j)] = (target - acc) / area;
    }
    Ok(r)
}

/// Matrix of the gradient reconstruction: `G v` is the `P^k(T)^2` field with
/// `(G v, tau)_T = (grad v_T, tau)_T + sum_F (v_F - v_T, tau . n_TF)_F`
/// for all `tau`.
pub fn build_gradient_reconstruction(ctx: &CellContext, face_bases: &[FaceBasisSet]) -> DMatrix<f64> {
    let nk = ctx.n_cell;
    let n = ctx.n_loc;
    let fdim = ctx.k + 1;
    let quad = &ctx.basis.quad;

    let mut bx = DMatrix::zeros(nk, n);
    let mut by = DMatrix::zeros(nk, n);
    for (q, &wq) in quad.weights.iter().enumerate() {
        for i in 0..nk {
            let c = wq * ctx.basis.phi[(i, q)];
            for j in 0..nk {
                bx[(i, j)] += c * ctx.basis.dphi_x[(j, q)];
                by[(i, j)] += c * ctx.basis.dphi_y[(j, q)];
            }
        }
    }
    for (local, fc) in ctx.faces.iter().enumerate() {
        let fb = &face_bases[fc.face];
        let off = ctx.face_offset(local);
        let [nx, ny] = fc.normal;
        for (q, &wq) in fb.quad.weights.iter().enumerate() {
            for i in 0..nk {
                let c = wq * fc.cell_phi[(i, q)];
                for j in 0..nk {
                    let t = c * fc.cell_phi[(j, q)];
                    bx[(i, j)] -= t * nx;
                    by[(i, j)] -= t * ny;
                }
                for m in 0..fdim {
                    let t = c * fb.phi[(m, q)];
                    bx[(i, off + m)] += t * nx;
                    by[(i, off + m)] += t * ny;
                }
            }
        }
    }
    let cx = ctx.solve_mass_k(&bx);
    let cy = ctx.solve_mass_k(&by);
    let mut g = DMatrix::zeros(2 * nk, n);
    g.view_mut((0, 0), (nk, n)).copy_from(&cx);
    g.view_mut((nk, 0), (nk, n)).copy_from(&cy);
    g
}

/// Face difference operators
/// `S_F v = pi_F (v_F - v_T - (R v - pi_T^k R v))` and their
/// mass-premultiplied versions, one pair per local face.
pub fn build_stabilization(
    ctx: &CellContext,
    face_bases: &[FaceBasisSet],
    r: &DMatrix<f64>,
) -> (Vec<DMatrix<f64>>, Vec<DMatrix<f64>>) {
    let nkp1 = ctx.basis.dim();
    let nk = ctx.n_cell;
    let n = ctx.n_loc;
    let fdim = ctx.k + 1;

    // Coefficients of R v - pi_T^k R v in the degree-(k+1) basis.
    let cross = ctx.basis.mass.view((0, 0), (nk, nkp1)).into_owned();
    let pi = ctx.solve_mass_k(&cross);
    let pir = &pi * r;
    let mut delta = r.clone();
    for i in 0..nk {
        for j in 0..n {
            delta[(i, j)] -= pir[(i, j)];
        }
    }

    let mut s_all = Vec::with_capacity(ctx.faces.len());
    let mut ms_all = Vec::with_capacity(ctx.faces.len());
    for (local, fc) in ctx.faces.iter().enumerate() {
        let fb = &face_bases[fc.face];
        let off = ctx.face_offset(local);
        // Face projection of cell-basis traces.
        let trace_moments = weighted_gram(&fb.phi, &fc.cell_phi, &fb.quad.weights);
        let t = fb.solve_mass(&trace_moments);

        let mut s = DMatrix::zeros(fdim, n);
        for m in 0..fdim {
            s[(m, off + m)] = 1.0;
        }
        for m in 0..fdim {
            for j in 0..nk {
                s[(m, j)] -= t[(m, j)];
            }
        }
        s.gemm(-1.0, &t, &delta, 1.0);
        let ms = &fb.mass * &s;
        s_all.push(s);
        ms_all.push(ms);
    }
    (s_all, ms_all)
}

/// The discrete space on a mesh: face bases, cell contexts and local
/// operators for a fixed polynomial degree.
pub struct HhoSpace<'m> {
    pub mesh: &'m PolytopalMesh,
    pub k: usize,
    pub face_bases: Vec<FaceBasisSet>,
    pub cells: Vec<CellContext>,
    pub ops: Vec<LocalOperators>,
}

impl<'m> HhoSpace<'m> {
    pub fn new(mesh: &'m PolytopalMesh, k: usize) -> Result<HhoSpace<'m>> {
        let exactness = default_quad_exactness(k);
        let face_bases: Vec<FaceBasisSet> = (0..mesh.n_faces())
            .into_par_iter()
            .map(|f| FaceBasisSet::for_face(mesh, f, k, exactness))
            .collect::<Result<_>>()?;
        let cells: Vec<CellContext> = (0..mesh.n_cells())
            .into_par_iter()
            .map(|c| CellContext::new(mesh, &face_bases, c, k))
            .collect::<Result<_>>()?;
        let ops: Vec<LocalOperators> = cells
            .par_iter()
            .map(|ctx| LocalOperators::build(ctx, &face_bases))
            .collect::<Result<_>>()?;
        Ok(HhoSpace {
            mesh,
            k,
            face_bases,
            cells,
            ops,
        })
    }

    /// Unknowns per cell block.
    pub fn n_cell_dofs(&self) -> usize {
        dim_pk(self.k)
    }

    /// Unknowns per face block.
    pub fn n_face_dofs(&self) -> usize {
        self.k + 1
    }
}

/// Coefficients of a hybrid function: one block per cell (degree `k`) and
/// one block per face (degree `k`), boundary faces included.
#[derive(Clone, Debug)]
pub struct HybridVector {
    pub k: usize,
    pub cells: Vec<DVector<f64>>,
    pub faces: Vec<DVector<f64>>,
}

impl HybridVector {
    pub fn zeros(mesh: &PolytopalMesh, k: usize) -> HybridVector {
        HybridVector {
            k,
            cells: vec![DVector::zeros(dim_pk(k)); mesh.n_cells()],
            faces: vec![DVector::zeros(k + 1); mesh.n_faces()],
        }
    }

    /// Gathers the local vector of one cell (cell block, then face blocks in
    /// ascending global order).
    pub fn local(&self, ctx: &CellContext) -> DVector<f64> {
        let mut out = DVector::zeros(ctx.n_loc);
        out.rows_mut(0, ctx.n_cell).copy_from(&self.cells[ctx.cell]);
        for (local, fc) in ctx.faces.iter().enumerate() {
            out.rows_mut(ctx.face_offset(local), ctx.k + 1)
                .copy_from(&self.faces[fc.face]);
        }
        out
    }

    pub fn axpy(&mut self, alpha: f64, other: &HybridVector) {
        for (a, b) in self.cells.iter_mut().zip(&other.cells) {
            a.axpy(alpha, b, 1.0);
        }
        for (a, b) in self.faces.iter_mut().zip(&other.faces) {
            a.axpy(alpha, b, 1.0);
        }
    }

    pub fn sub(&self, other: &HybridVector) -> HybridVector {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    /// Largest coefficient magnitude.
    pub fn max_abs(&self) -> f64 {
        self.cells
            .iter()
            .chain(self.faces.iter())
            .flat_map(|v| v.iter())
            .fold(0.0, |m, &x| m.max(x.abs()))
    }

    /// True when all boundary-face blocks vanish.
    pub fn is_boundary_zero(&self, mesh: &PolytopalMesh, tol: f64) -> bool {
        (0..mesh.n_faces())
            .filter(|&f| mesh.is_boundary_face(f))
            .all(|f| self.faces[f].amax() <= tol)
    }
}

/// Interpolates `f` onto the hybrid space: L2 projections on every cell and
/// every face (shared faces hold a single block).
pub fn interpolate(space: &HhoSpace, f: &ScalarFn) -> HybridVector {
    let cells = space.cells.iter().map(|ctx| ctx.project_k(f)).collect();
    let faces = space.face_bases.iter().map(|fb| fb.project(f)).collect();
    HybridVector {
        k: space.k,
        cells,
        faces,
    }
}

/// Energy-type and Sobolev-type norms of a hybrid vector for a scalar
/// diffusion coefficient `a`: returns
/// `( sqrt(sum_T ||a^1/2 G v||^2 + sum_F (a_F/h_F) ||v_F - v_T||^2),`
/// `  sqrt(sum_T ||grad v_T||^2 + sum_F (1/h_F) ||v_F - v_T||^2) )`
/// with `a_F` the max of `|a|` over the face quadrature points.
pub fn norms(space: &HhoSpace, v: &HybridVector, a: &ScalarFn) -> (f64, f64) {
    let nk = space.n_cell_dofs();
    let mut energy2 = 0.0;
    let mut sobolev2 = 0.0;
    for (ctx, ops) in space.cells.iter().zip(&space.ops) {
        let local = v.local(ctx);
        let g = &ops.g * &local;
        for (q, p) in ctx.basis.quad.points.iter().enumerate() {
            let mut gx = 0.0;
            let mut gy = 0.0;
            for i in 0..nk {
                gx += g[i] * ctx.basis.phi[(i, q)];
                gy += g[nk + i] * ctx.basis.phi[(i, q)];
            }
            energy2 += ctx.basis.quad.weights[q] * a(p[0], p[1]) * (gx * gx + gy * gy);
        }
        let cell_coeffs = local.rows(0, nk);
        let stiff_k = ctx.basis.stiffness.view((0, 0), (nk, nk));
        sobolev2 += (stiff_k * cell_coeffs).dot(&cell_coeffs);

        for (local_f, fc) in ctx.faces.iter().enumerate() {
            let fb = &space.face_bases[fc.face];
            let off = ctx.face_offset(local_f);
            let mut jump2 = 0.0;
            let mut a_max: f64 = 0.0;
            for (q, p) in fb.quad.points.iter().enumerate() {
                let mut diff = 0.0;
                for m in 0..=space.k {
                    diff += local[off + m] * fb.phi[(m, q)];
                }
                for i in 0..nk {
                    diff -= local[i] * fc.cell_phi[(i, q)];
                }
                jump2 += fb.quad.weights[q] * diff * diff;
                a_max = a_max.max(a(p[0], p[1]).abs());
            }
            energy2 += a_max / fc.h * jump2;
            sobolev2 += jump2 / fc.h;
        }
    }
    (energy2.sqrt(), sobolev2.sqrt())
}

/// `|| G_h v ||_{L2}`, the broken L2 norm of the reconstructed gradient.
pub fn grad_norm(space: &HhoSpace, v: &HybridVector) -> f64 {
    let nk = space.n_cell_dofs();
    let mut total = 0.0;
    for (ctx, ops) in space.cells.iter().zip(&space.ops) {
        let g = &ops.g * &v.local(ctx);
        let mass_k = ctx.basis.mass.view((0, 0), (nk, nk));
        let gx = g.rows(0, nk);
        let gy = g.rows(nk, nk);
        total += (mass_k * gx).dot(&gx) + (mass_k * gy).dot(&gy);
    }
    total.sqrt()
}

/// `|| grad f - G_h v ||_{L2}` for an exact gradient given in closed form.
pub fn gradient_error(space: &HhoSpace, grad_f: &VectorFn, v: &HybridVector) -> f64 {
    let nk = space.n_cell_dofs();
    let mut err2 = 0.0;
    for (ctx, ops) in space.cells.iter().zip(&space.ops) {
        let g = &ops.g * &v.local(ctx);
        for (q, p) in ctx.basis.quad.points.iter().enumerate() {
            let exact = grad_f(p[0], p[1]);
            let mut gx = -exact[0];
            let mut gy = -exact[1];
            for i in 0..nk {
                gx += g[i] * ctx.basis.phi[(i, q)];
                gy += g[nk + i] * ctx.basis.phi[(i, q)];
            }
            err2 += ctx.basis.quad.weights[q] * (gx * gx + gy * gy);
        }
    }
    err2.sqrt()
}

/// `|| f - R_h v ||_{L2}` against the potential reconstruction.
pub fn reconstruction_l2_error(space: &HhoSpace, f: &ScalarFn, v: &HybridVector) -> f64 {
    let mut err2 = 0.0;
    for (ctx, ops) in space.cells.iter().zip(&space.ops) {
        let r = &ops.r * &v.local(ctx);
        for (q, p) in ctx.basis.quad.points.iter().enumerate() {
            let mut diff = -f(p[0], p[1]);
            for i in 0..ctx.basis.dim() {
                diff += r[i] * ctx.basis.phi[(i, q)];
            }
            err2 += ctx.basis.quad.weights[q] * diff * diff;
        }
    }
    err2.sqrt()
}

/// `|| grad f - grad R_h v ||_{L2}` against the potential reconstruction.
pub fn reconstruction_h1_error(space: &HhoSpace, grad_f: &VectorFn, v: &HybridVector) -> f64 {
    let mut err2 = 0.0;
    for (ctx, ops) in space.cells.iter().zip(&space.ops) {
        let r = &ops.r * &v.local(ctx);
        for (q, p) in ctx.basis.quad.points.iter().enumerate() {
            let exact = grad_f(p[0], p[1]);
            let mut gx = -exact[0];
            let mut gy = -exact[1];
            for i in 0..ctx.basis.dim() {
                gx += r[i] * ctx.basis.dphi_x[(i, q)];
                gy += r[i] * ctx.basis.dphi_y[(i, q)];
            }
            err2 += ctx.basis.quad.weights[q] * (gx * gx + gy * gy);
        }
    }
    err2.sqrt()
}

/// `|| grad f ||_{L2}` by the space quadrature, used as denominator of
/// relative errors.
pub fn exact_grad_norm(space: &HhoSpace, grad_f: &VectorFn) -> f64 {
    let mut total = 0.0;
    for ctx in &space.cells {
        total += ctx.basis.quad.integrate(|x, y| {
            let g = grad_f(x, y);
            g[0] * g[0] + g[1] * g[1]
        });
    }
    total.sqrt()
}
