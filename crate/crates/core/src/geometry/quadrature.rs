//! Quadrature: Gauss–Legendre on edges, symmetric triangle rules up to
//! degree 5, a conical-product rule for higher degrees, and the centroid-fan
//! composite rule on star-shaped polygons.
//!
//! Degree 2 is the assembly default; error norms use degree 8 so that rates
//! on oscillatory manufactured solutions are not quadrature-limited.

use nalgebra::Vector2;

use super::{Point2, Polygon};
use crate::{Error, Result};

/// Gauss–Legendre nodes and weights on [-1, 1], exact for degree 2n-1.
/// Newton iteration on the Legendre recurrence; nodes are symmetrized so the
/// rule is exactly antisymmetric.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for k in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (k as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Legendre P_n and its derivative at x.
            let mut p0 = 1.0;
            let mut p1 = x;
            for l in 2..=n {
                let lf = l as f64;
                let p2 = ((2.0 * lf - 1.0) * x * p1 - (lf - 1.0) * p0) / lf;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // The initial guesses enumerate nodes in descending order.
        nodes[n - 1 - k] = x;
        nodes[k] = -x;
        weights[k] = w;
        weights[n - 1 - k] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// Reference triangle rule in barycentric coordinates; weights sum to 1 and
/// get scaled by the physical triangle area on mapping.
#[derive(Debug, Clone)]
pub struct TriangleRule {
    pub barycentric: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

/// Rule exact for polynomials of (at least) the requested total degree.
/// Degrees 1-5 use the classical symmetric rules with closed-form constants;
/// higher degrees fall back to a conical-product Gauss rule, which is exact
/// by construction (no tabulated coefficients involved).
pub fn triangle_rule(degree: usize) -> TriangleRule {
    let third = 1.0 / 3.0;
    match degree {
        0 | 1 => TriangleRule {
            barycentric: vec![[third, third, third]],
            weights: vec![1.0],
        },
        2 => {
            let orbit = |a: f64| [1.0 - 2.0 * a, a, a];
            TriangleRule {
                barycentric: vec![
                    orbit(1.0 / 6.0),
                    [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0],
                    [1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0],
                ],
                weights: vec![third; 3],
            }
        }
        3 => {
            let mut barycentric = vec![[third, third, third]];
            let mut weights = vec![-27.0 / 48.0];
            for p in cyclic([3.0 / 5.0, 1.0 / 5.0, 1.0 / 5.0]) {
                barycentric.push(p);
                weights.push(25.0 / 48.0);
            }
            TriangleRule {
                barycentric,
                weights,
            }
        }
        4 | 5 => {
            let s15 = 15f64.sqrt();
            let a = (6.0 - s15) / 21.0;
            let b = (6.0 + s15) / 21.0;
            let wa = (155.0 - s15) / 1200.0;
            let wb = (155.0 + s15) / 1200.0;
            let mut barycentric = vec![[third, third, third]];
            let mut weights = vec![9.0 / 40.0];
            for p in cyclic([1.0 - 2.0 * a, a, a]) {
                barycentric.push(p);
                weights.push(wa);
            }
            for p in cyclic([1.0 - 2.0 * b, b, b]) {
                barycentric.push(p);
                weights.push(wb);
            }
            TriangleRule {
                barycentric,
                weights,
            }
        }
        d => conical_rule(d),
    }
}

fn cyclic(p: [f64; 3]) -> [[f64; 3]; 3] {
    [p, [p[2], p[0], p[1]], [p[1], p[2], p[0]]]
}

/// Conical-product rule: with x = u, y = v(1-u) the unit-triangle integral
/// becomes ∫∫ f(u, v(1-u)) (1-u) du dv over the unit square, of u-degree
/// d+1 and v-degree d, so Gauss-Legendre with ceil((d+2)/2) × ceil((d+1)/2)
/// points is exact for total degree d.
fn conical_rule(degree: usize) -> TriangleRule {
    let nu = (degree + 2).div_ceil(2);
    let nv = (degree + 1).div_ceil(2);
    let (xu, wu) = gauss_legendre(nu);
    let (xv, wv) = gauss_legendre(nv);
    let to01 = |x: f64| 0.5 * (x + 1.0);
    let mut barycentric = Vec::with_capacity(nu * nv);
    let mut weights = Vec::with_capacity(nu * nv);
    for (iu, &u) in xu.iter().enumerate() {
        for (iv, &v) in xv.iter().enumerate() {
            let (u, v) = (to01(u), to01(v));
            let x = u;
            let y = v * (1.0 - u);
            barycentric.push([1.0 - x - y, x, y]);
            // 0.25 maps the two [-1,1] weights to [0,1]; factor 2 normalizes
            // the unit-triangle area 1/2 away.
            weights.push(2.0 * 0.25 * wu[iu] * wv[iv] * (1.0 - u));
        }
    }
    TriangleRule {
        barycentric,
        weights,
    }
}

/// Interior rule over a polygon: positive weights summing to the area.
#[derive(Debug, Clone)]
pub struct InteriorQuadrature {
    pub points: Vec<Point2>,
    pub weights: Vec<f64>,
}

impl InteriorQuadrature {
    pub fn integrate(&self, f: impl Fn(Point2) -> f64) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(&p, &w)| w * f(p))
            .sum()
    }
}

/// Centroid-fan composite rule, exact to `degree` on each fan triangle.
pub fn interior_quadrature(p: &Polygon, degree: usize) -> Result<InteriorQuadrature> {
    if !p.is_star_shaped_wrt_centroid() {
        return Err(Error::NotStarShaped(format!(
            "centroid fan of a {}-gon has a non-positive triangle",
            p.nv()
        )));
    }
    let rule = triangle_rule(degree);
    let c = p.centroid();
    let mut points = Vec::with_capacity(p.nv() * rule.weights.len());
    let mut weights = Vec::with_capacity(points.capacity());
    for i in 0..p.nv() {
        let (a, b) = p.edge(i);
        let area = 0.5 * ((a.x - c.x) * (b.y - c.y) - (b.x - c.x) * (a.y - c.y));
        for (bc, &w) in rule.barycentric.iter().zip(&rule.weights) {
            points.push(Point2::from(
                bc[0] * c.coords + bc[1] * a.coords + bc[2] * b.coords,
            ));
            weights.push(w * area);
        }
    }
    Ok(InteriorQuadrature { points, weights })
}

/// Boundary rule: per-point position, weight, CCW unit tangent, and the index
/// of the owning edge. Weights sum to the perimeter.
#[derive(Debug, Clone)]
pub struct BoundaryQuadrature {
    pub points: Vec<Point2>,
    pub weights: Vec<f64>,
    pub tangents: Vec<Vector2<f64>>,
    pub edges: Vec<usize>,
}

pub fn boundary_quadrature(p: &Polygon, n_per_edge: usize) -> BoundaryQuadrature {
    assert!(n_per_edge >= 1);
    let (nodes, wts) = gauss_legendre(n_per_edge);
    let n = p.nv() * n_per_edge;
    let mut out = BoundaryQuadrature {
        points: Vec::with_capacity(n),
        weights: Vec::with_capacity(n),
        tangents: Vec::with_capacity(n),
        edges: Vec::with_capacity(n),
    };
    for i in 0..p.nv() {
        let (a, b) = p.edge(i);
        let len = (b - a).norm();
        let t = (b - a) / len;
        for (&x, &w) in nodes.iter().zip(&wts) {
            let s = 0.5 * (x + 1.0);
            out.points.push(a + (b - a) * s);
            out.weights.push(0.5 * w * len);
            out.tangents.push(t);
            out.edges.push(i);
        }
    }
    out
}
