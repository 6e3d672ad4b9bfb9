//! Generators for the four mesh families on the unit square.
//!
//! Refinement level `l` corresponds to `4 * 2^l` subdivisions per side, so
//! the mesh size halves from one level to the next in every family.

use super::{MeshFamily, PolytopalMesh};
use crate::{Error, Result};
use std::collections::HashMap;

/// Number of subdivisions per side at a refinement level.
pub fn side_subdivisions(level: usize) -> usize {
    4 * (1 << level)
}

/// Shear amplitude of the Kershaw family.
pub const KERSHAW_DISTORTION: f64 = 0.3;

/// Builds the mesh of the given family at the given refinement level.
pub fn generate_mesh(family: MeshFamily, level: usize) -> Result<PolytopalMesh> {
    let n = side_subdivisions(level);
    match family {
        MeshFamily::Cartesian => cartesian_grid(n),
        MeshFamily::Triangular => triangular_grid(n),
        MeshFamily::Kershaw => kershaw_grid(n, KERSHAW_DISTORTION),
        MeshFamily::Hexagonal => hexagonal_tiling(n),
    }
}

/// Uniform `n x n` quadrilateral grid.
pub fn cartesian_grid(n: usize) -> Result<PolytopalMesh> {
    let (vertices, quads) = square_grid(n, |x, _| x, |_, y| y);
    checked(PolytopalMesh::from_cell_polygons(vertices, quads)?)
}

/// The Cartesian grid with every square split along its up-right diagonal.
pub fn triangular_grid(n: usize) -> Result<PolytopalMesh> {
    let (vertices, quads) = square_grid(n, |x, _| x, |_, y| y);
    let mut cells = Vec::with_capacity(2 * quads.len());
    for q in quads {
        let [v00, v10, v11, v01] = [q[0], q[1], q[2], q[3]];
        cells.push(vec![v00, v10, v11]);
        cells.push(vec![v00, v11, v01]);
    }
    checked(PolytopalMesh::from_cell_polygons(vertices, cells)?)
}

/// Logically Cartesian grid whose horizontal mesh lines are sheared
/// vertically by a piecewise-linear double-S profile. The shear vanishes on
/// the bottom and top boundaries and is strongest at mid-height.
pub fn kershaw_grid(n: usize, distortion: f64) -> Result<PolytopalMesh> {
    let (vertices, quads) = square_grid(n, |x, _| x, |x, y| {
        y + distortion * tent(y) * double_s(x)
    });
    checked(PolytopalMesh::from_cell_polygons(vertices, quads)?)
}

fn tent(t: f64) -> f64 {
    1.0 - (2.0 * t - 1.0).abs()
}

fn double_s(t: f64) -> f64 {
    if t <= 0.25 {
        4.0 * t
    } else if t <= 0.75 {
        2.0 - 4.0 * t
    } else {
        4.0 * t - 4.0
    }
}

fn square_grid(
    n: usize,
    fx: impl Fn(f64, f64) -> f64,
    fy: impl Fn(f64, f64) -> f64,
) -> (Vec<[f64; 2]>, Vec<Vec<usize>>) {
    assert!(n > 0);
    let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            let x = i as f64 / n as f64;
            let y = j as f64 / n as f64;
            vertices.push([fx(x, y), fy(x, y)]);
        }
    }
    let vid = |i: usize, j: usize| j * (n + 1) + i;
    let mut cells = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            cells.push(vec![vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)]);
        }
    }
    (vertices, cells)
}

/// Regular pointy-top hexagon tiling clipped to the unit square. `columns`
/// hexagon columns span the width exactly, so left and right boundary cells
/// are halves; bottom-row centers sit on `y = 0` and the top row is clipped
/// wherever `y = 1` falls.
pub fn hexagonal_tiling(columns: usize) -> Result<PolytopalMesh> {
    assert!(columns > 0);
    // Half-width and quarter-height of a hexagon; every tiling vertex is an
    // integer multiple of (sx, sy), which keeps shared vertices bit-identical
    // across cells.
    let sx = 1.0 / (2.0 * columns as f64);
    let sy = sx / 3.0_f64.sqrt();

    // Vertices are produced from their integer lattice indices so that the
    // cells sharing a vertex compute bit-identical coordinates.
    let at = |m: i64, n: i64| [m as f64 * sx, n as f64 * sy];

    let mut polygons: Vec<Vec<[f64; 2]>> = Vec::new();
    let mut j = 0i64;
    loop {
        let n = 3 * j;
        if (n - 2) as f64 * sy >= 1.0 {
            break;
        }
        let even = j % 2 == 0;
        let i_range = if even { 0..columns as i64 } else { 0..columns as i64 + 1 };
        for i in i_range {
            let m = if even { 2 * i + 1 } else { 2 * i };
            let hex = [
                at(m, n + 2),
                at(m - 1, n + 1),
                at(m - 1, n - 1),
                at(m, n - 2),
                at(m + 1, n - 1),
                at(m + 1, n + 1),
            ];
            if let Some(poly) = clip_to_unit_square(&hex) {
                polygons.push(poly);
            }
        }
        j += 1;
    }

    let mut key_of = HashMap::new();
    let mut vertices: Vec<[f64; 2]> = Vec::new();
    let mut cells = Vec::with_capacity(polygons.len());
    for poly in polygons {
        let mut cell = Vec::with_capacity(poly.len());
        for p in poly {
            let key = (p[0].to_bits(), p[1].to_bits());
            let id = *key_of.entry(key).or_insert_with(|| {
                vertices.push(p);
                vertices.len() - 1
            });
            cell.push(id);
        }
        cells.push(cell);
    }
    checked(PolytopalMesh::from_cell_polygons(vertices, cells)?)
}

/// Sutherland-Hodgman clip of a convex counterclockwise polygon against the
/// unit square. Returns `None` when the intersection is empty or degenerate.
fn clip_to_unit_square(poly: &[[f64; 2]]) -> Option<Vec<[f64; 2]>> {
    // Half-planes: coordinate `axis` compared against `bound` with `side`.
    let clips: [(usize, f64, f64); 4] = [(0, 0.0, 1.0), (0, 1.0, -1.0), (1, 0.0, 1.0), (1, 1.0, -1.0)];
    let mut current: Vec<[f64; 2]> = poly.to_vec();
    for (axis, bound, side) in clips {
        if current.is_empty() {
            return None;
        }
        let inside = |p: [f64; 2]| side * (p[axis] - bound) >= 0.0;
        let mut next: Vec<[f64; 2]> = Vec::with_capacity(current.len() + 1);
        for i in 0..current.len() {
            let s = current[i];
            let e = current[(i + 1) % current.len()];
            let (si, ei) = (inside(s), inside(e));
            if si != ei {
                next.push(line_crossing(s, e, axis, bound));
            }
            if ei {
                next.push(e);
            }
        }
        current = next;
    }
    dedup_loop(&mut current);
    if current.len() < 3 {
        return None;
    }
    let area: f64 = {
        let mut a = 0.0;
        for i in 0..current.len() {
            let p = current[i];
            let q = current[(i + 1) % current.len()];
            a += p[0] * q[1] - q[0] * p[1];
        }
        0.5 * a
    };
    if area.abs() < 1e-14 {
        return None;
    }
    Some(current)
}

/// Intersection of segment `(a, b)` with the line `coordinate[axis] = bound`,
/// computed from the lexicographically sorted endpoints so that the two
/// cells sharing the segment obtain bit-identical points.
fn line_crossing(a: [f64; 2], b: [f64; 2], axis: usize, bound: f64) -> [f64; 2] {
    let (p, q) = if (a[0], a[1]) <= (b[0], b[1]) { (a, b) } else { (b, a) };
    let t = (bound - p[axis]) / (q[axis] - p[axis]);
    let mut out = [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])];
    out[axis] = bound;
    out
}

fn dedup_loop(poly: &mut Vec<[f64; 2]>) {
    poly.dedup_by(|a, b| a == b);
    while poly.len() > 1 && poly.first() == poly.last() {
        poly.pop();
    }
}

fn checked(mesh: PolytopalMesh) -> Result<PolytopalMesh> {
    let total: f64 = (0..mesh.n_cells()).map(|c| mesh.area(c)).sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidMesh(format!(
            "cells cover area {total} instead of the unit square"
        )));
    }
    Ok(mesh)
}
