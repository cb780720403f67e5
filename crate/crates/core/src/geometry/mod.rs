//! Polygon and mesh primitives: simple CCW polygons with hanging-node flags,
//! affine maps, the inertial/alignment normalization maps, quadrature rules,
//! and the three mesh-family generators.

pub mod families;
pub mod mesh;
pub mod quadrature;

use nalgebra::{Matrix2, Vector2};

use crate::{Error, Result};

pub type Point2 = nalgebra::Point2<f64>;

/// Rotate a vector counter-clockwise by `angle`.
pub fn rotate(v: Vector2<f64>, angle: f64) -> Vector2<f64> {
    let (s, c) = angle.sin_cos();
    Vector2::new(c * v.x - s * v.y, s * v.x + c * v.y)
}

fn cross2(a: Vector2<f64>, b: Vector2<f64>) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Simple closed polygon, vertices in counter-clockwise order.
///
/// `hanging[i]` marks vertex `i` as lying in the interior of a geometric edge
/// (a degree of freedom that is not a corner). Flags default to all-false.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    vertices: Vec<Point2>,
    hanging: Vec<bool>,
}

impl Polygon {
    pub fn new(vertices: Vec<Point2>) -> Result<Self> {
        let n = vertices.len();
        Self::with_hanging(vertices, vec![false; n])
    }

    pub fn with_hanging(vertices: Vec<Point2>, hanging: Vec<bool>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::DegeneratePolygon(format!(
                "{} vertices (need at least 3)",
                vertices.len()
            )));
        }
        if vertices.len() != hanging.len() {
            return Err(Error::DegeneratePolygon(
                "hanging flag count differs from vertex count".into(),
            ));
        }
        if vertices.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(Error::DegeneratePolygon("non-finite vertex".into()));
        }
        let poly = Polygon { vertices, hanging };
        let d = poly.diameter();
        let n = poly.nv();
        for i in 0..n {
            let (a, b) = poly.edge(i);
            if (b - a).norm() <= 1e-12 * d {
                return Err(Error::DegeneratePolygon(format!(
                    "vertices {} and {} coincide",
                    i,
                    poly.next_idx(i)
                )));
            }
        }
        if poly.signed_area() <= 0.0 {
            return Err(Error::DegeneratePolygon(
                "vertices are not in counter-clockwise order".into(),
            ));
        }
        if !poly.is_simple() {
            return Err(Error::DegeneratePolygon("self-intersecting boundary".into()));
        }
        Ok(poly)
    }

    pub fn nv(&self) -> usize {
        self.vertices.len()
    }

    pub fn vertex(&self, i: usize) -> Point2 {
        self.vertices[i]
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn is_hanging(&self, i: usize) -> bool {
        self.hanging[i]
    }

    pub fn hanging_flags(&self) -> &[bool] {
        &self.hanging
    }

    pub fn next_idx(&self, i: usize) -> usize {
        (i + 1) % self.nv()
    }

    pub fn prev_idx(&self, i: usize) -> usize {
        (i + self.nv() - 1) % self.nv()
    }

    /// Edge `i` runs from vertex `i` to vertex `i+1` (cyclic).
    pub fn edge(&self, i: usize) -> (Point2, Point2) {
        (self.vertices[i], self.vertices[self.next_idx(i)])
    }

    pub fn edge_length(&self, i: usize) -> f64 {
        let (a, b) = self.edge(i);
        (b - a).norm()
    }

    pub fn perimeter(&self) -> f64 {
        (0..self.nv()).map(|i| self.edge_length(i)).sum()
    }

    pub fn signed_area(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.nv() {
            let (a, b) = self.edge(i);
            s += a.x * b.y - b.x * a.y;
        }
        0.5 * s
    }

    pub fn area(&self) -> f64 {
        self.signed_area()
    }

    pub fn centroid(&self) -> Point2 {
        let a = self.signed_area();
        let mut cx = 0.0;
        let mut cy = 0.0;
        for i in 0..self.nv() {
            let (p, q) = self.edge(i);
            let w = p.x * q.y - q.x * p.y;
            cx += (p.x + q.x) * w;
            cy += (p.y + q.y) * w;
        }
        Point2::new(cx / (6.0 * a), cy / (6.0 * a))
    }

    /// Max pairwise vertex distance.
    pub fn diameter(&self) -> f64 {
        let mut d2: f64 = 0.0;
        for i in 0..self.vertices.len() {
            for j in i + 1..self.vertices.len() {
                d2 = d2.max((self.vertices[j] - self.vertices[i]).norm_squared());
            }
        }
        d2.sqrt()
    }

    /// Second-moment (inertia) tensor about the centroid:
    /// `[[∫(x−cx)², ∫(x−cx)(y−cy)], [·, ∫(y−cy)²]]`, exact shoelace sums.
    pub fn second_moment(&self) -> Matrix2<f64> {
        let mut ixx = 0.0;
        let mut iyy = 0.0;
        let mut ixy = 0.0;
        for i in 0..self.nv() {
            let (p, q) = self.edge(i);
            let w = p.x * q.y - q.x * p.y;
            ixx += w * (p.x * p.x + p.x * q.x + q.x * q.x);
            iyy += w * (p.y * p.y + p.y * q.y + q.y * q.y);
            ixy += w * (2.0 * p.x * p.y + p.x * q.y + q.x * p.y + 2.0 * q.x * q.y);
        }
        ixx /= 12.0;
        iyy /= 12.0;
        ixy /= 24.0;
        let a = self.signed_area();
        let c = self.centroid();
        Matrix2::new(
            ixx - a * c.x * c.x,
            ixy - a * c.x * c.y,
            ixy - a * c.x * c.y,
            iyy - a * c.y * c.y,
        )
    }

    /// Crossing-number point-in-polygon test (boundary points unspecified).
    pub fn contains(&self, p: Point2) -> bool {
        let mut inside = false;
        for i in 0..self.nv() {
            let (a, b) = self.edge(i);
            if (a.y > p.y) != (b.y > p.y) {
                let t = (p.y - a.y) / (b.y - a.y);
                if p.x < a.x + t * (b.x - a.x) {
                    inside = !inside;
                }
            }
        }
        inside
    }

    /// Star-shapedness w.r.t. the centroid, via positivity of every fan
    /// triangle (centroid, v_i, v_{i+1}). Sufficient for the centroid-fan
    /// quadrature to produce positive weights.
    pub fn is_star_shaped_wrt_centroid(&self) -> bool {
        let c = self.centroid();
        (0..self.nv()).all(|i| {
            let (a, b) = self.edge(i);
            cross2(a - c, b - c) > 0.0
        })
    }

    /// Unit exterior angle bisector at vertex `i`: the interior angle is
    /// measured CCW from the outgoing edge to the incoming edge reversed;
    /// the exterior bisector is the interior bisector negated. At a hanging
    /// node (angle π) this is the outward edge normal.
    pub fn exterior_bisector(&self, i: usize) -> Vector2<f64> {
        let v = self.vertices[i];
        let a = (self.vertices[self.next_idx(i)] - v).normalize();
        let b = (self.vertices[self.prev_idx(i)] - v).normalize();
        let mut alpha = cross2(a, b).atan2(a.dot(&b));
        if alpha <= 0.0 {
            alpha += 2.0 * std::f64::consts::PI;
        }
        -rotate(a, 0.5 * alpha)
    }

    fn is_simple(&self) -> bool {
        let n = self.nv();
        for i in 0..n {
            let (a1, a2) = self.edge(i);
            for j in i + 1..n {
                // Adjacent edges share exactly one endpoint; skip them.
                if j == i || self.next_idx(i) == j || self.next_idx(j) == i {
                    continue;
                }
                let (b1, b2) = self.edge(j);
                if segments_intersect(a1, a2, b1, b2) {
                    return false;
                }
            }
        }
        true
    }
}

fn segments_intersect(p1: Point2, p2: Point2, q1: Point2, q2: Point2) -> bool {
    let d1 = cross2(p2 - p1, q1 - p1);
    let d2 = cross2(p2 - p1, q2 - p1);
    let d3 = cross2(q2 - q1, p1 - q1);
    let d4 = cross2(q2 - q1, p2 - q1);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    let on = |d: f64, a: Point2, b: Point2, p: Point2| {
        d == 0.0
            && p.x <= a.x.max(b.x)
            && p.x >= a.x.min(b.x)
            && p.y <= a.y.max(b.y)
            && p.y >= a.y.min(b.y)
    };
    on(d1, p1, p2, q1) || on(d2, p1, p2, q2) || on(d3, q1, q2, p1) || on(d4, q1, q2, p2)
}

/// Metrics entering the classification/normalization pipeline and the mesh
/// statistics tables. `anisotropic_ratio` is λ_max/λ_min of the inertia
/// tensor; `edge_ratio` is max/min over consecutive-vertex segments (hanging
/// nodes split edges and are counted).
#[derive(Debug, Clone, Copy)]
pub struct PolygonMetrics {
    pub area: f64,
    pub centroid: Point2,
    pub diameter: f64,
    pub inertia_tensor: Matrix2<f64>,
    pub anisotropic_ratio: f64,
    pub edge_ratio: f64,
}

pub fn polygon_metrics(p: &Polygon) -> Result<PolygonMetrics> {
    let area = p.signed_area();
    let diameter = p.diameter();
    if area <= 1e-14 * diameter * diameter {
        return Err(Error::DegeneratePolygon(format!(
            "area {area:.3e} below 1e-14 * diameter^2"
        )));
    }
    let inertia = p.second_moment();
    let (l1, l2, _, _) = sym_eigen_2x2(&inertia);
    let mut emin = f64::INFINITY;
    let mut emax: f64 = 0.0;
    for i in 0..p.nv() {
        let l = p.edge_length(i);
        emin = emin.min(l);
        emax = emax.max(l);
    }
    Ok(PolygonMetrics {
        area,
        centroid: p.centroid(),
        diameter,
        inertia_tensor: inertia,
        anisotropic_ratio: l1 / l2,
        edge_ratio: emax / emin,
    })
}

/// Affine map `x ↦ linear·x + shift` with invertible linear part.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineMap {
    pub linear: Matrix2<f64>,
    pub shift: Vector2<f64>,
}

impl AffineMap {
    pub fn new(linear: Matrix2<f64>, shift: Vector2<f64>) -> Result<Self> {
        if linear.determinant().abs() <= 1e-14 {
            return Err(Error::SingularMap(format!(
                "det = {:.3e}",
                linear.determinant()
            )));
        }
        Ok(AffineMap { linear, shift })
    }

    pub fn identity() -> Self {
        AffineMap {
            linear: Matrix2::identity(),
            shift: Vector2::zeros(),
        }
    }

    /// Similarity `x ↦ scale·R(angle)·x + shift`.
    pub fn similarity(scale: f64, angle: f64, shift: Vector2<f64>) -> Result<Self> {
        let (s, c) = angle.sin_cos();
        Self::new(Matrix2::new(c, -s, s, c) * scale, shift)
    }

    pub fn apply(&self, p: Point2) -> Point2 {
        Point2::from(self.linear * p.coords + self.shift)
    }

    pub fn apply_vector(&self, v: Vector2<f64>) -> Vector2<f64> {
        self.linear * v
    }

    /// `self ∘ other` (apply `other` first).
    pub fn compose(&self, other: &AffineMap) -> AffineMap {
        AffineMap {
            linear: self.linear * other.linear,
            shift: self.linear * other.shift + self.shift,
        }
    }

    pub fn inverse(&self) -> AffineMap {
        let inv = self.linear.try_inverse().expect("invertible by construction");
        AffineMap {
            linear: inv,
            shift: -(inv * self.shift),
        }
    }

    pub fn det(&self) -> f64 {
        self.linear.determinant()
    }

    pub fn map_polygon(&self, p: &Polygon) -> Result<Polygon> {
        let verts = p.vertices().iter().map(|&v| self.apply(v)).collect();
        Polygon::with_hanging(verts, p.hanging_flags().to_vec())
    }

    /// The unique affine map sending `from[k] ↦ to[k]` for k = 0, 1, 2.
    pub fn from_triangles(from: &[Point2; 3], to: &[Point2; 3]) -> Result<Self> {
        let tf = Matrix2::from_columns(&[from[1] - from[0], from[2] - from[0]]);
        let tt = Matrix2::from_columns(&[to[1] - to[0], to[2] - to[0]]);
        let tf_inv = tf.try_inverse().ok_or_else(|| {
            Error::SingularMap("source triangle is degenerate".into())
        })?;
        let linear = tt * tf_inv;
        Self::new(linear, to[0].coords - linear * from[0].coords)
    }
}

/// Reference equilateral triangle (circumradius 1, vertical right edge) used
/// as the common frame for triangle-shaped elements.
pub fn reference_triangle() -> [Point2; 3] {
    let s = 3f64.sqrt() / 2.0;
    [
        Point2::new(-1.0, 0.0),
        Point2::new(0.5, -s),
        Point2::new(0.5, s),
    ]
}

/// Eigendecomposition of a symmetric 2×2 matrix with a canonical eigenbasis:
/// λ1 ≥ λ2, right-handed (v1, v2), v1 taken in the half-plane x ≥ 0.
/// Repeated eigenvalues (relative gap < 1e-12) return the axis-aligned basis
/// so downstream maps stay deterministic.
pub fn sym_eigen_2x2(m: &Matrix2<f64>) -> (f64, f64, Vector2<f64>, Vector2<f64>) {
    let a = m[(0, 0)];
    let b = m[(0, 1)];
    let c = m[(1, 1)];
    let tr = a + c;
    let gap = ((a - c).powi(2) + 4.0 * b * b).sqrt();
    let l1 = 0.5 * (tr + gap);
    let l2 = 0.5 * (tr - gap);
    if gap <= 1e-12 * tr.abs().max(1e-300) {
        return (l1, l2, Vector2::x(), Vector2::y());
    }
    let theta = 0.5 * (2.0 * b).atan2(a - c);
    let v1 = Vector2::new(theta.cos(), theta.sin());
    let v2 = Vector2::new(-v1.y, v1.x);
    (l1, l2, v1, v2)
}

/// The inverse inertial map F_E⁻¹: translate the centroid to the origin,
/// rotate to principal axes, scale each axis by 1/√λ, then rescale uniformly
/// to unit diameter. The image has centroid 0, diameter 1, anisotropic
/// ratio 1; orientation is preserved.
pub fn inertial_map(p: &Polygon) -> Result<AffineMap> {
    let m = polygon_metrics(p)?;
    let (l1, l2, v1, v2) = sym_eigen_2x2(&m.inertia_tensor);
    if l2 <= 0.0 {
        return Err(Error::DegeneratePolygon(
            "inertia tensor not positive definite".into(),
        ));
    }
    // Rows of B are the principal axes scaled by 1/sqrt(λ).
    let b = Matrix2::new(
        v1.x / l1.sqrt(),
        v1.y / l1.sqrt(),
        v2.x / l2.sqrt(),
        v2.y / l2.sqrt(),
    );
    let c = m.centroid.coords;
    let isotropic = AffineMap::new(b, -(b * c))?;
    let mapped = isotropic.map_polygon(p)?;
    let s = 1.0 / mapped.diameter();
    AffineMap::new(b * s, -(b * c) * s)
}

/// The inverse alignment map G⁻¹ for an inertial-mapped polygon: the
/// similarity (rotation + uniform scaling) sending vertex `j` to (1, 0).
pub fn vertex_alignment_map(p: &Polygon, j: usize) -> Result<AffineMap> {
    let v = p.vertex(j).coords;
    let r = v.norm();
    if r <= 1e-14 {
        return Err(Error::VertexAtOrigin);
    }
    // R(-θ)/r with θ = atan2(v.y, v.x), written directly from v.
    let linear = Matrix2::new(v.x, v.y, -v.y, v.x) / (r * r);
    AffineMap::new(linear, Vector2::zeros())
}
