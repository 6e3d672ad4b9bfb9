//! Quadrature rules on segments, triangles and star-shaped polygons.
//!
//! All rules carry an exactness degree: polynomials of total degree up to
//! that value are integrated exactly (up to roundoff). Cell rules are built
//! by fanning the polygon into triangles around its centroid and placing a
//! collapsed tensor Gauss-Legendre rule on each triangle, so arbitrary
//! exactness degrees are supported without stored tables.

use crate::{Error, Result};

/// Weighted point set on a one- or two-dimensional domain.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Sum of the weights (the measure of the underlying domain).
    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn integrate(&self, f: impl Fn(f64, f64) -> f64) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(p, w)| w * f(p[0], p[1]))
            .sum()
    }

    fn extend(&mut self, other: QuadratureRule) {
        self.points.extend(other.points);
        self.weights.extend(other.weights);
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
///
/// Nodes are found by Newton iteration on the Legendre recurrence; the rule
/// with `n` points integrates polynomials of degree `2n - 1` exactly.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0, "at least one quadrature point is required");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                let (p2, d2) = legendre_with_derivative(n, x);
                dp = d2;
                x -= p2 / d2;
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        weights[i] = w;
        nodes[n - 1 - i] = x;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for j in 2..=n {
        let jf = j as f64;
        let p2 = ((2.0 * jf - 1.0) * x * p1 - (jf - 1.0) * p0) / jf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

fn gauss_points_for_degree(degree: usize) -> usize {
    degree / 2 + 1
}

/// Rule on the segment `[a, b]` exact for 1D polynomials (in arclength) of
/// total degree `exactness`.
pub fn segment_rule(a: [f64; 2], b: [f64; 2], exactness: usize) -> QuadratureRule {
    let n = gauss_points_for_degree(exactness);
    let (nodes, weights) = gauss_legendre(n);
    let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
    let mid = [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
    let half = [0.5 * (b[0] - a[0]), 0.5 * (b[1] - a[1])];
    QuadratureRule {
        points: nodes
            .iter()
            .map(|&t| [mid[0] + t * half[0], mid[1] + t * half[1]])
            .collect(),
        weights: weights.iter().map(|&w| 0.5 * len * w).collect(),
    }
}

/// Rule on the triangle `(v0, v1, v2)` exact for bivariate polynomials of
/// total degree `exactness`, via the collapsed-square (Duffy) map.
pub fn triangle_rule(v0: [f64; 2], v1: [f64; 2], v2: [f64; 2], exactness: usize) -> QuadratureRule {
    // Reference map (u, v) in [0,1]^2 -> (xi, eta) = (u(1-v), uv) has Jacobian
    // u, so the u-direction needs one extra degree of exactness.
    let nu = gauss_points_for_degree(exactness + 1);
    let nv = gauss_points_for_degree(exactness);
    let (un, uw) = gauss_legendre(nu);
    let (vn, vw) = gauss_legendre(nv);
    let e1 = [v1[0] - v0[0], v1[1] - v0[1]];
    let e2 = [v2[0] - v0[0], v2[1] - v0[1]];
    let jac = e1[0] * e2[1] - e1[1] * e2[0];
    let mut points = Vec::with_capacity(nu * nv);
    let mut weights = Vec::with_capacity(nu * nv);
    for (iu, &tu) in un.iter().enumerate() {
        let u = 0.5 * (tu + 1.0);
        for (iv, &tv) in vn.iter().enumerate() {
            let v = 0.5 * (tv + 1.0);
            let xi = u * (1.0 - v);
            let eta = u * v;
            points.push([
                v0[0] + xi * e1[0] + eta * e2[0],
                v0[1] + xi * e1[1] + eta * e2[1],
            ]);
            weights.push(0.25 * uw[iu] * vw[iv] * u * jac);
        }
    }
    QuadratureRule { points, weights }
}

/// Rule on a polygon star-shaped with respect to `center`, exact to degree
/// `exactness`. Vertices must be listed counterclockwise.
pub fn polygon_rule(
    vertices: &[[f64; 2]],
    center: [f64; 2],
    exactness: usize,
    cell: usize,
) -> Result<QuadratureRule> {
    let n = vertices.len();
    let diam2: f64 = vertices
        .iter()
        .flat_map(|p| vertices.iter().map(move |q| dist2(*p, *q)))
        .fold(0.0, f64::max);
    let mut rule = QuadratureRule {
        points: Vec::new(),
        weights: Vec::new(),
    };
    for i in 0..n {
        let a = vertices[i];
        let b = vertices[(i + 1) % n];
        let signed = 0.5 * ((a[0] - center[0]) * (b[1] - center[1]) - (a[1] - center[1]) * (b[0] - center[0]));
        if signed <= 1e-12 * diam2 {
            return Err(Error::NotStarShaped { cell });
        }
        rule.extend(triangle_rule(center, a, b, exactness));
    }
    Ok(rule)
}

fn dist2(p: [f64; 2], q: [f64; 2]) -> f64 {
    (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gauss_legendre_two_points() {
        let (nodes, weights) = gauss_legendre(2);
        let x = 1.0 / 3.0_f64.sqrt();
        assert_relative_eq!(nodes[0], -x, max_relative = 1e-15);
        assert_relative_eq!(nodes[1], x, max_relative = 1e-15);
        assert_relative_eq!(weights[0], 1.0, max_relative = 1e-15);
        assert_relative_eq!(weights[1], 1.0, max_relative = 1e-15);
    }

    #[test]
    fn gauss_legendre_integrates_monomials() {
        for n in 1..=20 {
            let (nodes, weights) = gauss_legendre(n);
            for d in 0..=(2 * n - 1) {
                let num: f64 = nodes
                    .iter()
                    .zip(&weights)
                    .map(|(x, w)| w * x.powi(d as i32))
                    .sum();
                let exact = if d % 2 == 0 { 2.0 / (d as f64 + 1.0) } else { 0.0 };
                assert!(
                    (num - exact).abs() < 1e-13,
                    "n = {n}, degree {d}: {num} vs {exact}"
                );
            }
        }
    }

    #[test]
    fn segment_rule_quartic_on_unit_segment() {
        // x^4 on the unit segment integrates to 1/5.
        let rule = segment_rule([0.0, 0.0], [1.0, 0.0], 4);
        assert_relative_eq!(rule.integrate(|x, _| x.powi(4)), 0.2, max_relative = 1e-14);
    }

    #[test]
    fn segment_rule_respects_arclength() {
        let a: [f64; 2] = [0.2, 0.1];
        let b: [f64; 2] = [0.7, 0.9];
        let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
        let rule = segment_rule(a, b, 3);
        assert_relative_eq!(rule.total_weight(), len, max_relative = 1e-14);
        // Linear function: integral is the midpoint value times the length.
        let mid = 0.5 * (a[0] + b[0]) + (a[1] + b[1]);
        assert_relative_eq!(rule.integrate(|x, y| x + 2.0 * y), mid * len, max_relative = 1e-14);
    }

    #[test]
    fn triangle_rule_exactness_sweep() {
        let v0 = [0.1, 0.2];
        let v1 = [0.9, 0.3];
        let v2 = [0.4, 0.8];
        // Oracle: integrate x^a y^b over the triangle by barycentric expansion
        // is awkward; instead compare against a much higher-order rule.
        for degree in 0..=8 {
            let rule = triangle_rule(v0, v1, v2, degree);
            let reference = triangle_rule(v0, v1, v2, degree + 8);
            for a in 0..=degree {
                for b in 0..=(degree - a) {
                    let f = |x: f64, y: f64| x.powi(a as i32) * y.powi(b as i32);
                    let coarse = rule.integrate(f);
                    let fine = reference.integrate(f);
                    assert!(
                        (coarse - fine).abs() < 1e-13,
                        "degree {degree}, monomial ({a},{b})"
                    );
                }
            }
        }
    }

    #[test]
    fn triangle_rule_unit_triangle_closed_forms() {
        // On the reference triangle, x^a y^b integrates to a! b! / (a+b+2)!.
        let rule = triangle_rule([0.0, 0.0], [1.0, 0.0], [0.0, 1.0], 6);
        let fact = |m: u64| (1..=m).product::<u64>() as f64;
        for a in 0..=3u64 {
            for b in 0..=3u64 {
                if a + b > 6 {
                    continue;
                }
                let exact = fact(a) * fact(b) / fact(a + b + 2);
                let num = rule.integrate(|x, y| x.powi(a as i32) * y.powi(b as i32));
                assert_relative_eq!(num, exact, max_relative = 1e-13);
            }
        }
    }

    #[test]
    fn polygon_rule_unit_square() {
        let square = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        let rule = polygon_rule(&square, [0.5, 0.5], 4, 0).unwrap();
        assert_relative_eq!(rule.total_weight(), 1.0, max_relative = 1e-14);
        // x^2 + y^2 over the unit square integrates to 2/3.
        let val = rule.integrate(|x, y| x * x + y * y);
        assert_relative_eq!(val, 2.0 / 3.0, max_relative = 1e-14);
    }

    #[test]
    fn polygon_rule_weights_positive() {
        let hexagon: Vec<[f64; 2]> = (0..6)
            .map(|i| {
                let t = std::f64::consts::PI / 3.0 * i as f64;
                [0.3 + 0.2 * t.cos(), 0.4 + 0.2 * t.sin()]
            })
            .collect();
        let rule = polygon_rule(&hexagon, [0.3, 0.4], 7, 0).unwrap();
        assert!(rule.weights.iter().all(|&w| w > 0.0));
    }

    #[test]
    fn polygon_rule_rejects_nonstar_polygon() {
        // A chevron whose centroid-side fan degenerates: center outside.
        let chevron = [[0.0, 0.0], [1.0, 0.0], [0.5, 0.4], [1.0, 1.0], [0.0, 1.0]];
        let err = polygon_rule(&chevron, [0.95, 0.5], 2, 7).unwrap_err();
        match err {
            Error::NotStarShaped { cell } => assert_eq!(cell, 7),
            other => panic!("unexpected error {other:?}"),
        }
    }
}
