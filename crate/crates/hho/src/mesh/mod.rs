//! Polygonal meshes of the unit square: storage, derived geometry,
//! generators for the four mesh families, text I/O and quadrature.
//!
//! A mesh stores vertices, straight faces (vertex pairs) and cells as
//! counterclockwise face loops. Every face keeps a globally fixed unit
//! normal, oriented outward from its lower-indexed incident cell; each
//! (cell, face) incidence records the sign relating the global normal to
//! the cell's outward normal.

pub mod families;
pub mod io;
pub mod quadrature;

use crate::{Error, Result};
use quadrature::{polygon_rule, segment_rule, QuadratureRule};
use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

/// The mesh families used in the convergence studies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MeshFamily {
    Triangular,
    Cartesian,
    Kershaw,
    Hexagonal,
}

impl MeshFamily {
    pub const ALL: [MeshFamily; 4] = [
        MeshFamily::Triangular,
        MeshFamily::Cartesian,
        MeshFamily::Kershaw,
        MeshFamily::Hexagonal,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            MeshFamily::Triangular => "triangular",
            MeshFamily::Cartesian => "cartesian",
            MeshFamily::Kershaw => "kershaw",
            MeshFamily::Hexagonal => "hexagonal",
        }
    }
}

impl fmt::Display for MeshFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MeshFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "triangular" => Ok(MeshFamily::Triangular),
            "cartesian" => Ok(MeshFamily::Cartesian),
            "kershaw" => Ok(MeshFamily::Kershaw),
            "hexagonal" => Ok(MeshFamily::Hexagonal),
            other => Err(Error::UnknownFamily(other.to_string())),
        }
    }
}

/// Conforming polygonal mesh with precomputed geometric quantities.
#[derive(Debug, Clone)]
pub struct PolytopalMesh {
    vertices: Vec<[f64; 2]>,
    face_vertices: Vec<[usize; 2]>,
    face_cells: Vec<[Option<usize>; 2]>,
    boundary: Vec<bool>,
    cell_faces: Vec<Vec<usize>>,
    cell_face_sign: Vec<Vec<f64>>,
    cell_vertices: Vec<Vec<usize>>,
    areas: Vec<f64>,
    centroids: Vec<[f64; 2]>,
    h_cell: Vec<f64>,
    h_face: Vec<f64>,
    face_midpoints: Vec<[f64; 2]>,
    face_tangents: Vec<[f64; 2]>,
    face_normals: Vec<[f64; 2]>,
}

impl PolytopalMesh {
    /// Builds a mesh from vertex coordinates and cells given as vertex loops.
    /// Loops may be given in either orientation; they are stored
    /// counterclockwise. Faces are created in discovery order with their
    /// vertex pair sorted ascending.
    pub fn from_cell_polygons(
        vertices: Vec<[f64; 2]>,
        cells: Vec<Vec<usize>>,
    ) -> Result<PolytopalMesh> {
        let nv = vertices.len();
        let mut loops = Vec::with_capacity(cells.len());
        for (c, cell) in cells.into_iter().enumerate() {
            if cell.len() < 3 {
                return Err(Error::InvalidMesh(format!(
                    "cell {c} has fewer than three vertices"
                )));
            }
            for &v in &cell {
                if v >= nv {
                    return Err(Error::InvalidMesh(format!(
                        "dangling vertex index {v} in cell {c} (mesh has {nv} vertices)"
                    )));
                }
            }
            let mut cell = cell;
            if signed_area(&vertices, &cell) < 0.0 {
                cell.reverse();
            }
            loops.push(cell);
        }

        let mut face_index: HashMap<(usize, usize), usize> = HashMap::new();
        let mut face_vertices: Vec<[usize; 2]> = Vec::new();
        let mut face_cells: Vec<[Option<usize>; 2]> = Vec::new();
        let mut cell_faces = Vec::with_capacity(loops.len());
        for (c, cell) in loops.iter().enumerate() {
            let m = cell.len();
            let mut faces = Vec::with_capacity(m);
            for i in 0..m {
                let a = cell[i];
                let b = cell[(i + 1) % m];
                if a == b {
                    return Err(Error::InvalidMesh(format!(
                        "cell {c} repeats vertex {a} on consecutive loop positions"
                    )));
                }
                let key = (a.min(b), a.max(b));
                let f = *face_index.entry(key).or_insert_with(|| {
                    face_vertices.push([key.0, key.1]);
                    face_cells.push([None, None]);
                    face_vertices.len() - 1
                });
                match &mut face_cells[f] {
                    [None, _] => face_cells[f][0] = Some(c),
                    [Some(_), slot @ None] => *slot = Some(c),
                    _ => return Err(Error::NonManifold { face: f }),
                }
                faces.push(f);
            }
            cell_faces.push(faces);
        }
        let boundary = face_cells.iter().map(|fc| fc[1].is_none()).collect();
        Self::finish(
            vertices,
            face_vertices,
            face_cells,
            boundary,
            cell_faces,
            loops,
        )
    }

    /// Builds a mesh from explicit face and cell connectivity, as stored in
    /// the text format: faces are vertex pairs with a boundary flag, cells
    /// are counterclockwise face loops. Vertex loops are reconstructed from
    /// shared face endpoints.
    pub fn from_face_lists(
        vertices: Vec<[f64; 2]>,
        face_vertices: Vec<[usize; 2]>,
        declared_boundary: Vec<bool>,
        cell_faces: Vec<Vec<usize>>,
    ) -> Result<PolytopalMesh> {
        let nv = vertices.len();
        let nf = face_vertices.len();
        for (f, fv) in face_vertices.iter().enumerate() {
            if fv[0] >= nv || fv[1] >= nv {
                return Err(Error::InvalidMesh(format!(
                    "dangling vertex index {} on face {f} (mesh has {nv} vertices)",
                    fv[0].max(fv[1])
                )));
            }
            if fv[0] == fv[1] {
                return Err(Error::InvalidMesh(format!("face {f} has equal endpoints")));
            }
        }

        let mut face_cells: Vec<[Option<usize>; 2]> = vec![[None, None]; nf];
        let mut loops = Vec::with_capacity(cell_faces.len());
        for (c, faces) in cell_faces.iter().enumerate() {
            let m = faces.len();
            if m < 3 {
                return Err(Error::InvalidMesh(format!(
                    "cell {c} has fewer than three faces"
                )));
            }
            for &f in faces {
                if f >= nf {
                    return Err(Error::InvalidMesh(format!(
                        "cell {c} references missing face {f} (mesh has {nf} faces)"
                    )));
                }
            }
            // Walk the loop: consecutive faces share exactly one vertex.
            let mut verts = vec![usize::MAX; m];
            for i in 0..m {
                let cur = face_vertices[faces[i]];
                let nxt = face_vertices[faces[(i + 1) % m]];
                let shared: Vec<usize> = [cur[0], cur[1]]
                    .into_iter()
                    .filter(|v| *v == nxt[0] || *v == nxt[1])
                    .collect();
                if shared.len() != 1 {
                    return Err(Error::InvalidMesh(format!(
                        "cell {c}: faces {} and {} do not share exactly one vertex",
                        faces[i],
                        faces[(i + 1) % m]
                    )));
                }
                verts[(i + 1) % m] = shared[0];
            }
            for i in 0..m {
                let fv = face_vertices[faces[i]];
                let (a, b) = (verts[i], verts[(i + 1) % m]);
                if !((fv[0] == a && fv[1] == b) || (fv[0] == b && fv[1] == a)) {
                    return Err(Error::InvalidMesh(format!(
                        "cell {c}: face loop is inconsistent at face {}",
                        faces[i]
                    )));
                }
            }
            if signed_area(&vertices, &verts) <= 0.0 {
                return Err(Error::InvalidMesh(format!(
                    "cell {c} is not counterclockwise"
                )));
            }
            for &f in faces {
                match &mut face_cells[f] {
                    [None, _] => face_cells[f][0] = Some(c),
                    [Some(_), slot @ None] => *slot = Some(c),
                    _ => return Err(Error::NonManifold { face: f }),
                }
            }
            loops.push(verts);
        }

        for (f, fc) in face_cells.iter().enumerate() {
            let derived = fc[1].is_none();
            if fc[0].is_none() {
                return Err(Error::InvalidMesh(format!("face {f} belongs to no cell")));
            }
            if derived != declared_boundary[f] {
                return Err(Error::InvalidMesh(format!(
                    "face {f}: boundary flag {} contradicts {} incident cell(s)",
                    declared_boundary[f] as u8,
                    2 - derived as u8
                )));
            }
        }
        Self::finish(
            vertices,
            face_vertices,
            face_cells,
            declared_boundary,
            cell_faces,
            loops,
        )
    }

    fn finish(
        vertices: Vec<[f64; 2]>,
        face_vertices: Vec<[usize; 2]>,
        face_cells: Vec<[Option<usize>; 2]>,
        boundary: Vec<bool>,
        cell_faces: Vec<Vec<usize>>,
        cell_vertices: Vec<Vec<usize>>,
    ) -> Result<PolytopalMesh> {
        let nf = face_vertices.len();
        let nc = cell_faces.len();

        let mut h_face = vec![0.0; nf];
        let mut face_midpoints = vec![[0.0; 2]; nf];
        let mut face_tangents = vec![[0.0; 2]; nf];
        for f in 0..nf {
            let p = vertices[face_vertices[f][0]];
            let q = vertices[face_vertices[f][1]];
            let len = ((q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2)).sqrt();
            if len == 0.0 {
                return Err(Error::InvalidMesh(format!("face {f} has zero length")));
            }
            h_face[f] = len;
            face_midpoints[f] = [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])];
            face_tangents[f] = [(q[0] - p[0]) / len, (q[1] - p[1]) / len];
        }

        let mut areas = vec![0.0; nc];
        let mut centroids = vec![[0.0; 2]; nc];
        let mut h_cell = vec![0.0; nc];
        let mut cell_face_sign = Vec::with_capacity(nc);
        let mut face_normals = vec![[0.0; 2]; nf];
        let mut normal_set = vec![false; nf];

        for c in 0..nc {
            let verts = &cell_vertices[c];
            let m = verts.len();
            let area = signed_area(&vertices, verts);
            if area <= 0.0 {
                return Err(Error::InvalidMesh(format!(
                    "cell {c} has nonpositive area {area}"
                )));
            }
            areas[c] = area;
            let mut cx = 0.0;
            let mut cy = 0.0;
            for i in 0..m {
                let p = vertices[verts[i]];
                let q = vertices[verts[(i + 1) % m]];
                let w = p[0] * q[1] - q[0] * p[1];
                cx += (p[0] + q[0]) * w;
                cy += (p[1] + q[1]) * w;
            }
            centroids[c] = [cx / (6.0 * area), cy / (6.0 * area)];
            let mut h = 0.0f64;
            for i in 0..m {
                for j in (i + 1)..m {
                    let p = vertices[verts[i]];
                    let q = vertices[verts[j]];
                    h = h.max(((q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2)).sqrt());
                }
            }
            h_cell[c] = h;

            // Outward normals from the counterclockwise traversal; the global
            // normal is fixed by whichever incident cell has the lower index.
            let mut signs = Vec::with_capacity(m);
            for i in 0..m {
                let f = cell_faces[c][i];
                let a = vertices[verts[i]];
                let b = vertices[verts[(i + 1) % m]];
                let outward = [(b[1] - a[1]) / h_face[f], -(b[0] - a[0]) / h_face[f]];
                if !normal_set[f] {
                    debug_assert_eq!(face_cells[f][0], Some(c));
                    face_normals[f] = outward;
                    normal_set[f] = true;
                    signs.push(1.0);
                } else {
                    signs.push(-1.0);
                }
            }
            cell_face_sign.push(signs);
        }

        let mesh = PolytopalMesh {
            vertices,
            face_vertices,
            face_cells,
            boundary,
            cell_faces,
            cell_face_sign,
            cell_vertices,
            areas,
            centroids,
            h_cell,
            h_face,
            face_midpoints,
            face_tangents,
            face_normals,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    /// Checks the geometric and topological invariants: positive areas,
    /// faces no longer than their cells' diameters, and the closed-polygon
    /// identity `sum_F |F| n_TF = 0` on every cell.
    pub fn validate(&self) -> Result<()> {
        for c in 0..self.n_cells() {
            if !(self.areas[c] > 0.0) {
                return Err(Error::InvalidMesh(format!("cell {c} has nonpositive area")));
            }
            let mut sx = 0.0;
            let mut sy = 0.0;
            let mut perimeter = 0.0;
            for (local, &f) in self.cell_faces[c].iter().enumerate() {
                let n = self.outward_normal(c, local);
                if self.h_face[f] > self.h_cell[c] * (1.0 + 1e-12) {
                    return Err(Error::InvalidMesh(format!(
                        "face {f} is longer than the diameter of cell {c}"
                    )));
                }
                sx += self.h_face[f] * n[0];
                sy += self.h_face[f] * n[1];
                perimeter += self.h_face[f];
            }
            if sx.abs() > 1e-12 * perimeter || sy.abs() > 1e-12 * perimeter {
                return Err(Error::InvalidMesh(format!(
                    "cell {c} violates the closed-boundary identity: ({sx}, {sy})"
                )));
            }
        }
        Ok(())
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_faces(&self) -> usize {
        self.face_vertices.len()
    }

    pub fn n_cells(&self) -> usize {
        self.cell_faces.len()
    }

    pub fn n_interior_faces(&self) -> usize {
        self.boundary.iter().filter(|b| !**b).count()
    }

    pub fn vertex(&self, v: usize) -> [f64; 2] {
        self.vertices[v]
    }

    pub fn face_vertices(&self, f: usize) -> [usize; 2] {
        self.face_vertices[f]
    }

    /// Incident cells, lower index first. Boundary faces have one entry.
    pub fn face_cells(&self, f: usize) -> [Option<usize>; 2] {
        self.face_cells[f]
    }

    pub fn is_boundary_face(&self, f: usize) -> bool {
        self.boundary[f]
    }

    /// Faces of a cell in counterclockwise loop order.
    pub fn cell_faces(&self, c: usize) -> &[usize] {
        &self.cell_faces[c]
    }

    /// Vertices of a cell in counterclockwise loop order; vertex `i` starts
    /// the edge carried by `cell_faces(c)[i]`.
    pub fn cell_vertices(&self, c: usize) -> &[usize] {
        &self.cell_vertices[c]
    }

    pub fn area(&self, c: usize) -> f64 {
        self.areas[c]
    }

    pub fn centroid(&self, c: usize) -> [f64; 2] {
        self.centroids[c]
    }

    pub fn cell_diameter(&self, c: usize) -> f64 {
        self.h_cell[c]
    }

    pub fn max_cell_diameter(&self) -> f64 {
        self.h_cell.iter().copied().fold(0.0, f64::max)
    }

    pub fn face_length(&self, f: usize) -> f64 {
        self.h_face[f]
    }

    pub fn face_midpoint(&self, f: usize) -> [f64; 2] {
        self.face_midpoints[f]
    }

    /// Unit tangent pointing from the stored first vertex to the second.
    pub fn face_tangent(&self, f: usize) -> [f64; 2] {
        self.face_tangents[f]
    }

    /// Globally fixed unit normal (outward from the lower incident cell).
    pub fn face_normal(&self, f: usize) -> [f64; 2] {
        self.face_normals[f]
    }

    /// Sign relating the global face normal to the outward normal of the
    /// cell: `outward = sign * face_normal`.
    pub fn face_sign(&self, c: usize, local: usize) -> f64 {
        self.cell_face_sign[c][local]
    }

    /// Outward unit normal of face `cell_faces(c)[local]` seen from cell `c`.
    pub fn outward_normal(&self, c: usize, local: usize) -> [f64; 2] {
        let f = self.cell_faces[c][local];
        let s = self.cell_face_sign[c][local];
        [s * self.face_normals[f][0], s * self.face_normals[f][1]]
    }

    /// Positions of a cell's vertex loop.
    pub fn cell_polygon(&self, c: usize) -> Vec<[f64; 2]> {
        self.cell_vertices[c]
            .iter()
            .map(|&v| self.vertices[v])
            .collect()
    }

    /// Quadrature rule over cell `c`, exact to the given total degree.
    pub fn cell_quadrature(&self, c: usize, exactness: usize) -> Result<QuadratureRule> {
        polygon_rule(&self.cell_polygon(c), self.centroids[c], exactness, c)
    }

    /// Quadrature rule along face `f`, exact to the given degree.
    pub fn face_quadrature(&self, f: usize, exactness: usize) -> QuadratureRule {
        let [a, b] = self.face_vertices[f];
        segment_rule(self.vertices[a], self.vertices[b], exactness)
    }

    /// Arclength coordinate of a point on face `f`, measured from the face
    /// midpoint along the face tangent.
    pub fn face_arclength(&self, f: usize, p: [f64; 2]) -> f64 {
        let m = self.face_midpoints[f];
        let t = self.face_tangents[f];
        (p[0] - m[0]) * t[0] + (p[1] - m[1]) * t[1]
    }
}

fn signed_area(vertices: &[[f64; 2]], loop_verts: &[usize]) -> f64 {
    let m = loop_verts.len();
    let mut a = 0.0;
    for i in 0..m {
        let p = vertices[loop_verts[i]];
        let q = vertices[loop_verts[(i + 1) % m]];
        a += p[0] * q[1] - q[0] * p[1];
    }
    0.5 * a
}
