//! Discretization and solution of the linear model problem
//! `-div(a grad u) + b . grad u + a0 u = f` on the unit square with
//! Dirichlet boundary data, using static condensation onto the
//! interior-face unknowns.

use crate::local_ops::{interpolate, HhoSpace, HybridVector};
use crate::{Error, Result, ScalarFn, VectorFn};
use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use nalgebra::{DMatrix, DVector, LU};
use rayon::prelude::*;

/// Coefficients and right-hand side of the linear problem.
pub struct LinearProblemData {
    pub a: Box<ScalarFn>,
    pub b: Box<VectorFn>,
    pub a0: Box<ScalarFn>,
    pub f: Box<ScalarFn>,
}

/// Dirichlet boundary data: either identically zero or the trace of a given
/// function, imposed through face L2 projections.
pub enum DirichletBc {
    Homogeneous,
    Trace(Box<ScalarFn>),
}

impl DirichletBc {
    /// Coefficient blocks of the boundary data on every boundary face
    /// (zero blocks on interior faces).
    pub fn face_coefficients(&self, space: &HhoSpace) -> Vec<DVector<f64>> {
        (0..space.mesh.n_faces())
            .map(|f| {
                if !space.mesh.is_boundary_face(f) {
                    return DVector::zeros(space.n_face_dofs());
                }
                match self {
                    DirichletBc::Homogeneous => DVector::zeros(space.n_face_dofs()),
                    DirichletBc::Trace(g) => space.face_bases[f].project(g),
                }
            })
            .collect()
    }
}

/// Local bilinear form and load vector of one cell:
/// diffusion `(a G u, G v)_T`, stabilization weighted by the largest `|a|`
/// on each face, convection `(b . grad R u, v_T)_T` and reaction
/// `(a0 u_T, v_T)_T`, with load `(f, v_T)_T`.
pub fn local_system(
    space: &HhoSpace,
    cell: usize,
    data: &LinearProblemData,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let ctx = &space.cells[cell];
    let ops = &space.ops[cell];
    let nk = ctx.n_cell;
    let n = ctx.n_loc;
    let quad = &ctx.basis.quad;
    let nq = quad.len();

    // Coefficient samples at the cell quadrature points.
    let mut aw = Vec::with_capacity(nq);
    let mut bw = Vec::with_capacity(nq);
    let mut a0w = Vec::with_capacity(nq);
    for (q, p) in quad.points.iter().enumerate() {
        let w = quad.weights[q];
        aw.push(w * (data.a)(p[0], p[1]));
        bw.push({
            let b = (data.b)(p[0], p[1]);
            [w * b[0], w * b[1]]
        });
        a0w.push(w * (data.a0)(p[0], p[1]));
    }

    let phik = ctx.basis.phi.rows(0, nk);
    let gx = ops.g.rows(0, nk);
    let gy = ops.g.rows(nk, nk);
    // Gradient-reconstruction values at quadrature points, one row per point.
    let ex = phik.transpose() * gx;
    let ey = phik.transpose() * gy;
    let mut exw = ex.clone();
    let mut eyw = ey.clone();
    for q in 0..nq {
        exw.row_mut(q).scale_mut(aw[q]);
        eyw.row_mut(q).scale_mut(aw[q]);
    }
    let mut a_mat = ex.transpose() * exw + ey.transpose() * eyw;

    // Stabilization, weighted per face by the largest |a| over its
    // quadrature points.
    let mut weights = Vec::with_capacity(ctx.faces.len());
    for fc in &ctx.faces {
        let fb = &space.face_bases[fc.face];
        let mut m: f64 = 0.0;
        for p in &fb.quad.points {
            m = m.max((data.a)(p[0], p[1]).abs());
        }
        weights.push(m);
    }
    a_mat += ops.stab_with_weights(&weights)?;

    // Convection tested against cell functions only.
    let dx = ctx.basis.dphi_x.transpose() * &ops.r;
    let dy = ctx.basis.dphi_y.transpose() * &ops.r;
    let mut conv_rows = DMatrix::zeros(nq, n);
    for q in 0..nq {
        let [bx, by] = bw[q];
        for j in 0..n {
            conv_rows[(q, j)] = bx * dx[(q, j)] + by * dy[(q, j)];
        }
    }
    let conv = phik * &conv_rows;
    let mut top = a_mat.view_mut((0, 0), (nk, n));
    top += conv;

    // Reaction on the cell block.
    let mut phikw = phik.into_owned();
    for q in 0..nq {
        phikw.column_mut(q).scale_mut(a0w[q]);
    }
    let reaction = phikw * phik.transpose();
    let mut corner = a_mat.view_mut((0, 0), (nk, nk));
    corner += reaction;

    let mut rhs = DVector::zeros(n);
    rhs.rows_mut(0, nk).copy_from(&ctx.basis.moments(&data.f, nk));
    Ok((a_mat, rhs))
}

struct CellRecovery {
    cell: usize,
    lu: LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    a_tf: DMatrix<f64>,
    b_t: DVector<f64>,
    faces: Vec<usize>,
}

/// The statically condensed global system: one unknown block per interior
/// face, plus the per-cell data needed to recover cell unknowns.
pub struct CondensedSystem {
    pub k: usize,
    /// Number of global unknowns, `(k + 1) x` interior faces.
    pub ndof: usize,
    face_slot: Vec<Option<usize>>,
    boundary_values: Vec<DVector<f64>>,
    matrix: Option<SparseColMat<usize, f64>>,
    rhs: DVector<f64>,
    recovery: Vec<CellRecovery>,
}

/// Builds the condensed system from any per-cell system generator. The
/// generator returns the full local matrix and load of a cell; cell unknowns
/// are eliminated through a Schur complement and boundary-face blocks are
/// replaced by the boundary data.
pub fn assemble_condense_with<F>(
    space: &HhoSpace,
    bc: &DirichletBc,
    local_fn: F,
) -> Result<CondensedSystem>
where
    F: Fn(usize) -> Result<(DMatrix<f64>, DVector<f64>)> + Sync,
{
    let k = space.k;
    let fdim = space.n_face_dofs();
    let mesh = space.mesh;

    let mut face_slot = vec![None; mesh.n_faces()];
    let mut next = 0;
    for f in 0..mesh.n_faces() {
        if !mesh.is_boundary_face(f) {
            face_slot[f] = Some(next);
            next += fdim;
        }
    }
    let ndof = next;
    let boundary_values = bc.face_coefficients(space);

    struct CellPiece {
        schur: DMatrix<f64>,
        load: DVector<f64>,
        recovery: CellRecovery,
    }

    let pieces: Vec<CellPiece> = space
        .cells
        .par_iter()
        .map(|ctx| -> Result<CellPiece> {
            let (a, b) = local_fn(ctx.cell)?;
            let nk = ctx.n_cell;
            let nf = ctx.n_loc - nk;
            let a_tt = a.view((0, 0), (nk, nk)).into_owned();
            let a_tf = a.view((0, nk), (nk, nf)).into_owned();
            let a_ft = a.view((nk, 0), (nf, nk)).into_owned();
            let a_ff = a.view((nk, nk), (nf, nf)).into_owned();
            let b_t = b.rows(0, nk).into_owned();
            let b_f = b.rows(nk, nf).into_owned();

            let lu = LU::new(a_tt);
            let x = lu
                .solve(&a_tf)
                .ok_or(Error::SingularLocalSystem { cell: ctx.cell })?;
            let y = lu
                .solve(&b_t)
                .ok_or(Error::SingularLocalSystem { cell: ctx.cell })?;
            let schur = &a_ff - &a_ft * x;
            let load = b_f - a_ft * y;
            Ok(CellPiece {
                schur,
                load,
                recovery: CellRecovery {
                    cell: ctx.cell,
                    lu,
                    a_tf,
                    b_t,
                    faces: ctx.faces.iter().map(|fc| fc.face).collect(),
                },
            })
        })
        .collect::<Result<_>>()?;

    let mut triplets: Vec<Triplet<usize, usize, f64>> = Vec::new();
    let mut rhs = DVector::zeros(ndof);
    let mut recovery = Vec::with_capacity(pieces.len());
    for piece in pieces {
        let faces = &piece.recovery.faces;
        for (li, &fi) in faces.iter().enumerate() {
            let Some(row0) = face_slot[fi] else { continue };
            for m in 0..fdim {
                rhs[row0 + m] += piece.load[li * fdim + m];
            }
            for (lj, &fj) in faces.iter().enumerate() {
                match face_slot[fj] {
                    Some(col0) => {
                        for m in 0..fdim {
                            for l in 0..fdim {
                                triplets.push(Triplet::new(
                                    row0 + m,
                                    col0 + l,
                                    piece.schur[(li * fdim + m, lj * fdim + l)],
                                ));
                            }
                        }
                    }
                    None => {
                        let g = &boundary_values[fj];
                        for m in 0..fdim {
                            let mut acc = 0.0;
                            for l in 0..fdim {
                                acc += piece.schur[(li * fdim + m, lj * fdim + l)] * g[l];
                            }
                            rhs[row0 + m] -= acc;
                        }
                    }
                }
            }
        }
        recovery.push(piece.recovery);
    }

    let matrix = if ndof > 0 {
        Some(
            SparseColMat::try_new_from_triplets(ndof, ndof, &triplets)
                .map_err(|e| Error::SolveFailed(format!("sparse assembly: {e:?}")))?,
        )
    } else {
        None
    };

    Ok(CondensedSystem {
        k,
        ndof,
        face_slot,
        boundary_values,
        matrix,
        rhs,
        recovery,
    })
}

impl CondensedSystem {
    /// Solves the condensed system by sparse LU with one step of iterative
    /// refinement, then recovers cell unknowns cell by cell.
    pub fn solve(&self, space: &HhoSpace) -> Result<HybridVector> {
        let fdim = self.k + 1;
        let x = if self.ndof == 0 {
            DVector::zeros(0)
        } else {
            let mat = self.matrix.as_ref().unwrap();
            let rhs_norm = self.rhs.norm();
            if rhs_norm == 0.0 {
                DVector::zeros(self.ndof)
            } else {
                let lu = mat
                    .sp_lu()
                    .map_err(|e| Error::SolveFailed(format!("sparse LU: {e:?}")))?;
                let b = faer::Mat::from_fn(self.ndof, 1, |i, _| self.rhs[i]);
                let mut x = lu.solve(&b);
                // Iterative refinement until the residual reaches rounding
                // level (large systems may need more than one sweep), then a
                // residual guard against a genuinely failed factorization.
                let mut rnorm = f64::INFINITY;
                for _ in 0..4 {
                    let r = &b - mat.as_ref() * x.as_ref();
                    rnorm = r.norm_l2();
                    if rnorm <= 1e-13 * rhs_norm {
                        break;
                    }
                    x += lu.solve(&r);
                }
                if rnorm.is_infinite() || rnorm > 1e-13 * rhs_norm {
                    let r = &b - mat.as_ref() * x.as_ref();
                    rnorm = r.norm_l2();
                }
                if !(rnorm <= 1e-11 * rhs_norm) {
                    return Err(Error::SolveFailed(format!(
                        "relative residual {:e} after refinement",
                        rnorm / rhs_norm
                    )));
                }
                DVector::from_fn(self.ndof, |i, _| x[(i, 0)])
            }
        };

        let mut out = HybridVector::zeros(space.mesh, self.k);
        for f in 0..space.mesh.n_faces() {
            match self.face_slot[f] {
                Some(row0) => {
                    for m in 0..fdim {
                        out.faces[f][m] = x[row0 + m];
                    }
                }
                None => out.faces[f].copy_from(&self.boundary_values[f]),
            }
        }
        for rec in &self.recovery {
            let nf = rec.faces.len() * fdim;
            let mut uf = DVector::zeros(nf);
            for (li, &fi) in rec.faces.iter().enumerate() {
                uf.rows_mut(li * fdim, fdim).copy_from(&out.faces[fi]);
            }
            let rhs_t = &rec.b_t - &rec.a_tf * uf;
            let u_t = rec
                .lu
                .solve(&rhs_t)
                .ok_or(Error::SingularLocalSystem { cell: rec.cell })?;
            out.cells[rec.cell].copy_from(&u_t);
        }
        Ok(out)
    }
}

/// Assembles the full (uncondensed) system over all cell unknowns and
/// interior-face unknowns as a dense matrix. Reference route used to
/// cross-check condensation.
pub fn assemble_full_with<F>(
    space: &HhoSpace,
    bc: &DirichletBc,
    local_fn: F,
) -> Result<(DMatrix<f64>, DVector<f64>)>
where
    F: Fn(usize) -> Result<(DMatrix<f64>, DVector<f64>)>,
{
    let mesh = space.mesh;
    let nk = space.n_cell_dofs();
    let fdim = space.n_face_dofs();
    let mut face_slot = vec![None; mesh.n_faces()];
    let n_cell_total = mesh.n_cells() * nk;
    let mut next = n_cell_total;
    for f in 0..mesh.n_faces() {
        if !mesh.is_boundary_face(f) {
            face_slot[f] = Some(next);
            next += fdim;
        }
    }
    let n = next;
    let boundary_values = bc.face_coefficients(space);

    let mut a_glob = DMatrix::zeros(n, n);
    let mut rhs = DVector::zeros(n);
    for ctx in &space.cells {
        let (a, b) = local_fn(ctx.cell)?;
        // Global slot of each local index, or the known boundary value.
        let mut slots: Vec<Option<usize>> = Vec::with_capacity(ctx.n_loc);
        let mut known = vec![0.0; ctx.n_loc];
        for i in 0..nk {
            slots.push(Some(ctx.cell * nk + i));
            let _ = i;
        }
        for (lf, fc) in ctx.faces.iter().enumerate() {
            for m in 0..fdim {
                match face_slot[fc.face] {
                    Some(s0) => slots.push(Some(s0 + m)),
                    None => {
                        slots.push(None);
                        known[ctx.face_offset(lf) + m] = boundary_values[fc.face][m];
                    }
                }
            }
        }
        for i in 0..ctx.n_loc {
            let Some(gi) = slots[i] else { continue };
            rhs[gi] += b[i];
            for j in 0..ctx.n_loc {
                match slots[j] {
                    Some(gj) => a_glob[(gi, gj)] += a[(i, j)],
                    None => rhs[gi] -= a[(i, j)] * known[j],
                }
            }
        }
    }
    Ok((a_glob, rhs))
}

/// Solves through the full dense system; reference route.
pub fn solve_full_with<F>(space: &HhoSpace, bc: &DirichletBc, local_fn: F) -> Result<HybridVector>
where
    F: Fn(usize) -> Result<(DMatrix<f64>, DVector<f64>)>,
{
    let (a, b) = assemble_full_with(space, bc, &local_fn)?;
    let lu = LU::new(a);
    let x = lu
        .solve(&b)
        .ok_or_else(|| Error::SolveFailed("dense reference solve".into()))?;

    let mesh = space.mesh;
    let nk = space.n_cell_dofs();
    let fdim = space.n_face_dofs();
    let boundary_values = bc.face_coefficients(space);
    let mut out = HybridVector::zeros(mesh, space.k);
    for c in 0..mesh.n_cells() {
        for i in 0..nk {
            out.cells[c][i] = x[c * nk + i];
        }
    }
    let mut slot = mesh.n_cells() * nk;
    for f in 0..mesh.n_faces() {
        if mesh.is_boundary_face(f) {
            out.faces[f].copy_from(&boundary_values[f]);
        } else {
            for m in 0..fdim {
                out.faces[f][m] = x[slot + m];
            }
            slot += fdim;
        }
    }
    Ok(out)
}

/// Solves the linear problem by static condensation.
pub fn solve_linear(
    space: &HhoSpace,
    data: &LinearProblemData,
    bc: &DirichletBc,
) -> Result<HybridVector> {
    let system = assemble_condense_with(space, bc, |cell| local_system(space, cell, data))?;
    system.solve(space)
}

/// Solves the linear problem through the dense reference route.
pub fn solve_linear_full(
    space: &HhoSpace,
    data: &LinearProblemData,
    bc: &DirichletBc,
) -> Result<HybridVector> {
    solve_full_with(space, bc, |cell| local_system(space, cell, data))
}

/// Relative energy-norm distance between the discrete solution and the
/// interpolate of `u`: `||I u - u_h||_a / ||I u||_a`.
pub fn relative_energy_error(
    space: &HhoSpace,
    u_h: &HybridVector,
    u: &ScalarFn,
    a: &ScalarFn,
) -> Result<f64> {
    let iu = interpolate(space, u);
    let (denom, _) = crate::local_ops::norms(space, &iu, a);
    if denom == 0.0 {
        return Err(Error::ZeroReferenceNorm);
    }
    let diff = iu.sub(u_h);
    let (num, _) = crate::local_ops::norms(space, &diff, a);
    Ok(num / denom)
}
