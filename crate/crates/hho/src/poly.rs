//! Scaled monomial bases and L2 projections on cells and faces.
//!
//! Cell bases are the monomials `((x - x_T)/h_T)^a ((y - y_T)/h_T)^b` in
//! graded-lexicographic order, so the basis of degree `k` is a prefix of the
//! basis of degree `k + 1`. Face bases are powers of the arclength from the
//! face midpoint, scaled by the face length.

use crate::mesh::quadrature::QuadratureRule;
use crate::mesh::{families, MeshFamily, PolytopalMesh};
use crate::{Error, Result, ScalarFn};
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

/// Dimension of the bivariate polynomial space of total degree `degree`.
pub const fn dim_pk(degree: usize) -> usize {
    (degree + 1) * (degree + 2) / 2
}

/// Exponent pairs `(a, b)` with `a + b <= degree`, graded-lexicographic:
/// `(0,0), (1,0), (0,1), (2,0), (1,1), (0,2), ...`
pub fn monomial_exponents(degree: usize) -> Vec<[u32; 2]> {
    let mut out = Vec::with_capacity(dim_pk(degree));
    for total in 0..=degree as u32 {
        for b in 0..=total {
            out.push([total - b, b]);
        }
    }
    out
}

/// Scaled monomial basis of one cell with cached quadrature evaluations,
/// mass and stiffness matrices.
pub struct CellBasisSet {
    pub cell: usize,
    pub degree: usize,
    pub exponents: Vec<[u32; 2]>,
    pub center: [f64; 2],
    pub scale: f64,
    pub quad: QuadratureRule,
    /// Basis values at the quadrature points, one row per basis function.
    pub phi: DMatrix<f64>,
    pub dphi_x: DMatrix<f64>,
    pub dphi_y: DMatrix<f64>,
    pub mass: DMatrix<f64>,
    pub stiffness: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl CellBasisSet {
    /// Builds the basis on a cell with a quadrature rule exact to the given
    /// degree (at least `2 * degree` for an exact mass matrix).
    pub fn for_cell(
        mesh: &PolytopalMesh,
        cell: usize,
        degree: usize,
        quad_exactness: usize,
    ) -> Result<CellBasisSet> {
        let quad = mesh.cell_quadrature(cell, quad_exactness)?;
        let exponents = monomial_exponents(degree);
        let dim = exponents.len();
        let nq = quad.len();
        let center = mesh.centroid(cell);
        let scale = mesh.cell_diameter(cell);

        let mut phi = DMatrix::zeros(dim, nq);
        let mut dphi_x = DMatrix::zeros(dim, nq);
        let mut dphi_y = DMatrix::zeros(dim, nq);
        for (q, p) in quad.points.iter().enumerate() {
            let xs = (p[0] - center[0]) / scale;
            let ys = (p[1] - center[1]) / scale;
            for (i, &[a, b]) in exponents.iter().enumerate() {
                let (xa, yb) = (xs.powi(a as i32), ys.powi(b as i32));
                phi[(i, q)] = xa * yb;
                dphi_x[(i, q)] = if a == 0 {
                    0.0
                } else {
                    a as f64 * xs.powi(a as i32 - 1) * yb / scale
                };
                dphi_y[(i, q)] = if b == 0 {
                    0.0
                } else {
                    b as f64 * xa * ys.powi(b as i32 - 1) / scale
                };
            }
        }

        let mass = weighted_gram(&phi, &phi, &quad.weights);
        let stiffness = weighted_gram(&dphi_x, &dphi_x, &quad.weights)
            + weighted_gram(&dphi_y, &dphi_y, &quad.weights);
        let chol = Cholesky::new(mass.clone()).ok_or_else(|| Error::DegenerateBasis {
            entity: format!("cell {cell}"),
        })?;
        Ok(CellBasisSet {
            cell,
            degree,
            exponents,
            center,
            scale,
            quad,
            phi,
            dphi_x,
            dphi_y,
            mass,
            stiffness,
            chol,
        })
    }

    pub fn dim(&self) -> usize {
        self.exponents.len()
    }

    pub fn eval(&self, i: usize, x: f64, y: f64) -> f64 {
        let [a, b] = self.exponents[i];
        let xs = (x - self.center[0]) / self.scale;
        let ys = (y - self.center[1]) / self.scale;
        xs.powi(a as i32) * ys.powi(b as i32)
    }

    pub fn eval_grad(&self, i: usize, x: f64, y: f64) -> [f64; 2] {
        let [a, b] = self.exponents[i];
        let xs = (x - self.center[0]) / self.scale;
        let ys = (y - self.center[1]) / self.scale;
        let gx = if a == 0 {
            0.0
        } else {
            a as f64 * xs.powi(a as i32 - 1) * ys.powi(b as i32) / self.scale
        };
        let gy = if b == 0 {
            0.0
        } else {
            b as f64 * xs.powi(a as i32) * ys.powi(b as i32 - 1) / self.scale
        };
        [gx, gy]
    }

    /// Value of the polynomial with the given coefficients.
    pub fn value(&self, coeffs: &DVector<f64>, x: f64, y: f64) -> f64 {
        coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| c * self.eval(i, x, y))
            .sum()
    }

    /// L2 projection onto the full basis.
    pub fn project(&self, f: &ScalarFn) -> DVector<f64> {
        self.chol.solve(&self.moments(f, self.dim()))
    }

    /// L2 projection onto the prefix spanning the polynomials of lower
    /// degree with dimension `sub_dim`.
    pub fn project_prefix(&self, f: &ScalarFn, sub_dim: usize) -> DVector<f64> {
        assert!(sub_dim <= self.dim());
        let mass = self.mass.view((0, 0), (sub_dim, sub_dim)).into_owned();
        let chol = Cholesky::new(mass).expect("principal submatrix of an SPD matrix");
        chol.solve(&self.moments(f, sub_dim))
    }

    /// Moments `int_T f phi_i` for the first `dim` basis functions, by
    /// quadrature.
    pub fn moments(&self, f: &ScalarFn, dim: usize) -> DVector<f64> {
        let mut b = DVector::zeros(dim);
        for (q, p) in self.quad.points.iter().enumerate() {
            let w = self.quad.weights[q] * f(p[0], p[1]);
            for i in 0..dim {
                b[i] += w * self.phi[(i, q)];
            }
        }
        b
    }
}

/// Scaled monomial basis on a face, evaluated at the face quadrature points.
pub struct FaceBasisSet {
    pub face: usize,
    pub degree: usize,
    pub midpoint: [f64; 2],
    pub tangent: [f64; 2],
    pub scale: f64,
    pub quad: QuadratureRule,
    /// Arclength coordinates of the quadrature points.
    pub s: Vec<f64>,
    pub phi: DMatrix<f64>,
    pub mass: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl FaceBasisSet {
    pub fn for_face(
        mesh: &PolytopalMesh,
        face: usize,
        degree: usize,
        quad_exactness: usize,
    ) -> Result<FaceBasisSet> {
        let quad = mesh.face_quadrature(face, quad_exactness);
        let scale = mesh.face_length(face);
        let dim = degree + 1;
        let s: Vec<f64> = quad
            .points
            .iter()
            .map(|&p| mesh.face_arclength(face, p))
            .collect();
        let mut phi = DMatrix::zeros(dim, quad.len());
        for (q, &sq) in s.iter().enumerate() {
            for i in 0..dim {
                phi[(i, q)] = (sq / scale).powi(i as i32);
            }
        }
        let mass = weighted_gram(&phi, &phi, &quad.weights);
        let chol = Cholesky::new(mass.clone()).ok_or_else(|| Error::DegenerateBasis {
            entity: format!("face {face}"),
        })?;
        Ok(FaceBasisSet {
            face,
            degree,
            midpoint: mesh.face_midpoint(face),
            tangent: mesh.face_tangent(face),
            scale,
            quad,
            s,
            phi,
            mass,
            chol,
        })
    }

    pub fn dim(&self) -> usize {
        self.degree + 1
    }

    pub fn eval(&self, i: usize, s: f64) -> f64 {
        (s / self.scale).powi(i as i32)
    }

    /// L2 projection of a function given in ambient coordinates.
    pub fn project(&self, f: &ScalarFn) -> DVector<f64> {
        let mut b = DVector::zeros(self.dim());
        for (q, p) in self.quad.points.iter().enumerate() {
            let w = self.quad.weights[q] * f(p[0], p[1]);
            for i in 0..self.dim() {
                b[i] += w * self.phi[(i, q)];
            }
        }
        self.chol.solve(&b)
    }

    /// Solves `mass * c = b` for given face moments.
    pub fn solve_mass(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(b)
    }

    pub fn value(&self, coeffs: &DVector<f64>, s: f64) -> f64 {
        coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| c * self.eval(i, s))
            .sum()
    }
}

/// `A * diag(w) * B^T` for matrices whose columns index quadrature points.
pub(crate) fn weighted_gram(a: &DMatrix<f64>, b: &DMatrix<f64>, w: &[f64]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows(), b.nrows());
    for q in 0..w.len() {
        let wq = w[q];
        for i in 0..a.nrows() {
            let awi = wq * a[(i, q)];
            if awi == 0.0 {
                continue;
            }
            for j in 0..b.nrows() {
                out[(i, j)] += awi * b[(j, q)];
            }
        }
    }
    out
}

/// Aggregated L2 projection errors of `f` over refinements of a family, and
/// the observed convergence orders between consecutive levels.
pub fn approximation_decay_check(
    family: MeshFamily,
    degree: usize,
    levels: &[usize],
    f: &ScalarFn,
) -> Result<Vec<f64>> {
    assert!(levels.len() >= 2, "need at least two levels for an order");
    let mut hs = Vec::with_capacity(levels.len());
    let mut errors = Vec::with_capacity(levels.len());
    for &level in levels {
        let mesh = families::generate_mesh(family, level)?;
        let mut err2 = 0.0;
        for cell in 0..mesh.n_cells() {
            let basis = CellBasisSet::for_cell(&mesh, cell, degree, 2 * degree + 6)?;
            let coeffs = basis.project(f);
            for (q, p) in basis.quad.points.iter().enumerate() {
                let mut v = f(p[0], p[1]);
                for i in 0..basis.dim() {
                    v -= coeffs[i] * basis.phi[(i, q)];
                }
                err2 += basis.quad.weights[q] * v * v;
            }
        }
        hs.push(mesh.max_cell_diameter());
        errors.push(err2.sqrt());
    }
    Ok(observed_orders(&hs, &errors))
}

/// Convergence orders `log(e_{i-1}/e_i) / log(h_{i-1}/h_i)`.
pub fn observed_orders(hs: &[f64], errors: &[f64]) -> Vec<f64> {
    hs.windows(2)
        .zip(errors.windows(2))
        .map(|(h, e)| (e[0] / e[1]).ln() / (h[0] / h[1]).ln())
        .collect()
}
