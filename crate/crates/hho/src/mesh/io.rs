//! Plain-text mesh format.
//!
//! ```text
//! NV NF NC
//! x y              one line per vertex
//! v0 v1 flag       one line per face, flag 1 on the boundary
//! nfaces f0 f1 ..  one line per cell, faces counterclockwise
//! ```
//!
//! Lines starting with `#` and blank lines are ignored. Writing uses the
//! shortest round-trip float representation, so write-read-write is
//! byte-stable.

use super::PolytopalMesh;
use crate::{Error, Result};
use std::fmt::Write as _;
use std::path::Path;

/// Serializes the mesh in its canonical text form.
pub fn write_to_string(mesh: &PolytopalMesh) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{} {} {}",
        mesh.n_vertices(),
        mesh.n_faces(),
        mesh.n_cells()
    );
    for v in 0..mesh.n_vertices() {
        let p = mesh.vertex(v);
        let _ = writeln!(out, "{} {}", p[0], p[1]);
    }
    for f in 0..mesh.n_faces() {
        let [a, b] = mesh.face_vertices(f);
        let _ = writeln!(out, "{} {} {}", a, b, mesh.is_boundary_face(f) as u8);
    }
    for c in 0..mesh.n_cells() {
        let faces = mesh.cell_faces(c);
        let mut line = format!("{}", faces.len());
        for &f in faces {
            let _ = write!(line, " {f}");
        }
        let _ = writeln!(out, "{line}");
    }
    out
}

pub fn write_mesh(mesh: &PolytopalMesh, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, write_to_string(mesh))?;
    Ok(())
}

/// Parses a mesh from its text form.
pub fn parse(text: &str) -> Result<PolytopalMesh> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let (line_no, header) = lines
        .next()
        .ok_or_else(|| parse_err(0, "missing header line"))?;
    let counts = parse_numbers::<usize>(line_no, header)?;
    let [nv, nf, nc] = counts[..] else {
        return Err(parse_err(
            line_no,
            &format!("header must hold three counts, got {}", counts.len()),
        ));
    };

    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| parse_err(0, "unexpected end of file in vertex block"))?;
        let nums = parse_numbers::<f64>(ln, l)?;
        let [x, y] = nums[..] else {
            return Err(parse_err(ln, "vertex line must hold two coordinates"));
        };
        vertices.push([x, y]);
    }

    let mut face_vertices = Vec::with_capacity(nf);
    let mut boundary = Vec::with_capacity(nf);
    for _ in 0..nf {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| parse_err(0, "unexpected end of file in face block"))?;
        let nums = parse_numbers::<usize>(ln, l)?;
        let [a, b, flag] = nums[..] else {
            return Err(parse_err(ln, "face line must hold two vertices and a flag"));
        };
        if flag > 1 {
            return Err(parse_err(ln, &format!("boundary flag must be 0 or 1, got {flag}")));
        }
        face_vertices.push([a, b]);
        boundary.push(flag == 1);
    }

    let mut cell_faces = Vec::with_capacity(nc);
    for _ in 0..nc {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| parse_err(0, "unexpected end of file in cell block"))?;
        let nums = parse_numbers::<usize>(ln, l)?;
        let Some((&m, rest)) = nums.split_first() else {
            return Err(parse_err(ln, "cell line must start with a face count"));
        };
        if rest.len() != m {
            return Err(parse_err(
                ln,
                &format!("cell declares {m} faces but lists {}", rest.len()),
            ));
        }
        cell_faces.push(rest.to_vec());
    }

    if let Some((ln, _)) = lines.next() {
        return Err(parse_err(ln, "trailing content after the cell block"));
    }
    PolytopalMesh::from_face_lists(vertices, face_vertices, boundary, cell_faces)
}

pub fn read_mesh(path: impl AsRef<Path>) -> Result<PolytopalMesh> {
    parse(&std::fs::read_to_string(path)?)
}

fn parse_numbers<T: std::str::FromStr>(line_no: usize, line: &str) -> Result<Vec<T>> {
    line.split_whitespace()
        .map(|tok| {
            tok.parse::<T>()
                .map_err(|_| parse_err(line_no, &format!("invalid number '{tok}'")))
        })
        .collect()
}

fn parse_err(line: usize, message: &str) -> Error {
    Error::MeshParse {
        line,
        message: message.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::families::{generate_mesh, hexagonal_tiling};
    use crate::mesh::MeshFamily;

    #[test]
    fn round_trip_is_byte_identical() {
        let mesh = generate_mesh(MeshFamily::Cartesian, 1).unwrap();
        let text = write_to_string(&mesh);
        let reread = parse(&text).unwrap();
        assert_eq!(write_to_string(&reread), text);
    }

    #[test]
    fn round_trip_preserves_geometry_of_every_family() {
        for family in MeshFamily::ALL {
            let mesh = generate_mesh(family, 0).unwrap();
            let reread = parse(&write_to_string(&mesh)).unwrap();
            assert_eq!(reread.n_cells(), mesh.n_cells());
            assert_eq!(reread.n_faces(), mesh.n_faces());
            for c in 0..mesh.n_cells() {
                assert_eq!(reread.area(c).to_bits(), mesh.area(c).to_bits());
                assert_eq!(reread.cell_faces(c), mesh.cell_faces(c));
            }
            for f in 0..mesh.n_faces() {
                assert_eq!(reread.face_normal(f), mesh.face_normal(f));
            }
        }
    }

    #[test]
    fn round_trip_handles_clipped_polygons() {
        let mesh = hexagonal_tiling(4).unwrap();
        let text = write_to_string(&mesh);
        assert_eq!(write_to_string(&parse(&text).unwrap()), text);
    }

    #[test]
    fn comments_and_blank_lines_are_skipped() {
        let text = "# unit square\n\n4 4 1\n0 0\n1 0\n1 1\n0 1\n# faces\n0 1 1\n1 2 1\n2 3 1\n0 3 1\n4 0 1 2 3\n";
        let mesh = parse(text).unwrap();
        assert_eq!(mesh.n_cells(), 1);
        assert_eq!(mesh.area(0), 1.0);
    }

    #[test]
    fn malformed_counts_are_reported_with_line_numbers() {
        let err = parse("4 4\n").unwrap_err();
        match err {
            Error::MeshParse { line, message } => {
                assert_eq!(line, 1);
                assert!(message.contains("three counts"));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn truncated_file_is_rejected() {
        let err = parse("4 4 1\n0 0\n1 0\n").unwrap_err();
        assert!(matches!(err, Error::MeshParse { .. }));
    }

    #[test]
    fn dangling_vertex_in_face_block_is_rejected() {
        let text = "3 3 1\n0 0\n1 0\n0 1\n0 1 1\n1 9 1\n2 0 1\n3 0 1 2\n";
        let err = parse(text).unwrap_err();
        match err {
            Error::InvalidMesh(msg) => assert!(msg.contains("dangling vertex index 9")),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn nonmanifold_face_in_file_is_rejected() {
        // Three triangles share face 0.
        let text = "5 7 3\n0 0\n1 0\n0.5 1\n0.5 -1\n1.5 0.5\n\
                    0 1 0\n1 2 1\n2 0 1\n0 3 1\n3 1 1\n1 4 1\n4 0 1\n\
                    3 0 1 2\n3 3 4 0\n3 5 6 0\n";
        let err = parse(text).unwrap_err();
        assert!(matches!(err, Error::NonManifold { face: 0 }));
    }

    #[test]
    fn inconsistent_boundary_flag_is_rejected() {
        // Face 0 is interior (two incident triangles) but flagged boundary.
        let text = "4 5 2\n0 0\n1 0\n1 1\n0 1\n\
                    0 2 1\n0 1 1\n1 2 1\n2 3 1\n3 0 1\n\
                    3 1 2 0\n3 0 3 4\n";
        let err = parse(text).unwrap_err();
        match err {
            Error::InvalidMesh(msg) => assert!(msg.contains("boundary flag")),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn clockwise_cell_in_file_is_rejected() {
        // Single square listed with a clockwise face loop.
        let text = "4 4 1\n0 0\n1 0\n1 1\n0 1\n\
                    0 3 1\n3 2 1\n2 1 1\n1 0 1\n\
                    4 0 1 2 3\n";
        let err = parse(text).unwrap_err();
        match err {
            Error::InvalidMesh(msg) => assert!(msg.contains("counterclockwise")),
            other => panic!("unexpected error {other:?}"),
        }
    }
}
