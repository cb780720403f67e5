//! The vertex function Φ: a harmonic function on the square Ω_Φ = (-1,1)²
//! that is 1 at the edge midpoint (1,0), tent-linear on the right edge and 0
//! on the rest of the boundary. It is approximated once, offline, by a
//! rational + polynomial least-squares fit with poles clustered
//! root-exponentially outside (1,0), then reused on every element through a
//! similarity map that carries (1,0) onto a vertex and the +x axis onto that
//! vertex's exterior angle bisector.

use nalgebra::{DMatrix, DVector, Vector2};
use num_complex::Complex64;

use super::equilibrated_lsq;
use crate::geometry::{AffineMap, Point2, Polygon};
use crate::{Error, Result};

pub const DEFAULT_N1: usize = 50;
pub const DEFAULT_N2: usize = 25;
pub const DEFAULT_SAMPLES_PER_SIDE: usize = 300;

#[derive(Debug, Clone, PartialEq)]
pub struct PhiFunction {
    pub n1: usize,
    pub n2: usize,
    /// Real pole positions z_α = 1 + d_α, strictly right of the square.
    pub poles: Vec<f64>,
    /// Pole distances d_α = 2·exp(-4(√N1 - √α)).
    pub d: Vec<f64>,
    /// Coefficients of the pole terms Re(d_α / (z - z_α)).
    pub c1: DVector<f64>,
    /// Coefficients of the polynomial terms Re((z/2)^β), β = 0..=N2.
    pub c2: DVector<f64>,
    /// Max boundary residual of the fit over the sample set.
    pub residual: f64,
}

pub fn pole_distances(n1: usize) -> Vec<f64> {
    (1..=n1)
        .map(|alpha| 2.0 * (-4.0 * ((n1 as f64).sqrt() - (alpha as f64).sqrt())).exp())
        .collect()
}

/// Tent boundary data: 1 - |x2| on the right edge, 0 on the other three.
pub fn tent_data(p: Point2) -> f64 {
    if (p.x - 1.0).abs() < 1e-12 {
        (1.0 - p.y.abs()).max(0.0)
    } else {
        0.0
    }
}

/// Boundary samples of Ω_Φ: root-exponential ladders clustered toward (1,0)
/// on the sides that approach it (split right edge, bottom, top), uniform on
/// the left edge. Matches the pole clustering so the fit is controlled where
/// Φ has its derivative kink.
pub fn phi_boundary_samples(per_side: usize) -> Vec<Point2> {
    let ladder = |count: usize| -> Vec<f64> {
        (1..=count)
            .map(|k| (-4.0 * ((count as f64).sqrt() - (k as f64).sqrt())).exp())
            .collect()
    };
    let mut out = Vec::with_capacity(4 * per_side);
    for &t in &ladder(per_side) {
        out.push(Point2::new(1.0 - 2.0 * t, -1.0));
        out.push(Point2::new(1.0 - 2.0 * t, 1.0));
    }
    let half = per_side.div_ceil(2);
    for &t in &ladder(half) {
        out.push(Point2::new(1.0, -t));
        out.push(Point2::new(1.0, t));
    }
    for k in 0..per_side {
        out.push(Point2::new(-1.0, -1.0 + 2.0 * (k as f64 + 0.5) / per_side as f64));
    }
    out
}

pub fn build_phi(n1: usize, n2: usize, samples_per_side: usize) -> Result<PhiFunction> {
    assert!(n1 >= 1 && n2 >= 1);
    let samples = phi_boundary_samples(samples_per_side);
    assert!(samples.len() >= 3 * (n1 + n2));
    let d = pole_distances(n1);
    let poles: Vec<f64> = d.iter().map(|&d| 1.0 + d).collect();

    let dim = n1 + n2 + 1;
    let mut a = DMatrix::zeros(samples.len(), dim);
    let mut b = DVector::zeros(samples.len());
    for (row, &p) in samples.iter().enumerate() {
        let z = Complex64::new(p.x, p.y);
        for (alpha, (&za, &da)) in poles.iter().zip(&d).enumerate() {
            a[(row, alpha)] = (da / (z - za)).re;
        }
        let mut w = Complex64::new(1.0, 0.0);
        for beta in 0..=n2 {
            a[(row, n1 + beta)] = w.re;
            w *= z / 2.0;
        }
        b[row] = tent_data(p);
    }
    let (coeffs, _) = equilibrated_lsq(a.clone(), &b);
    let residual = (a * &coeffs - b).abs().max();
    if residual > 1e-2 {
        return Err(Error::PhiFit { residual });
    }
    Ok(PhiFunction {
        n1,
        n2,
        poles,
        d,
        c1: coeffs.rows(0, n1).into_owned(),
        c2: coeffs.rows(n1, n2 + 1).into_owned(),
        residual,
    })
}

impl PhiFunction {
    pub fn with_defaults() -> Result<Self> {
        build_phi(DEFAULT_N1, DEFAULT_N2, DEFAULT_SAMPLES_PER_SIDE)
    }

    /// Value and gradient in reference coordinates. The complex derivative
    /// of each term gives the gradient through the Cauchy-Riemann relations.
    pub fn eval(&self, p: Point2) -> (f64, Vector2<f64>) {
        let z = Complex64::new(p.x, p.y);
        let mut value = 0.0;
        let mut dz = Complex64::new(0.0, 0.0);
        for ((&za, &da), &c) in self.poles.iter().zip(&self.d).zip(self.c1.iter()) {
            let inv = 1.0 / (z - za);
            value += c * (da * inv).re;
            dz += -c * da * inv * inv;
        }
        let mut w = Complex64::new(1.0, 0.0);
        let mut prev = w;
        for (beta, &c) in self.c2.iter().enumerate() {
            value += c * w.re;
            if beta >= 1 {
                dz += c * beta as f64 / 2.0 * prev;
            }
            prev = w;
            w *= z / 2.0;
        }
        (value, Vector2::new(dz.re, -dz.im))
    }
}

/// Φ attached to a vertex: a similarity carrying Ω_Φ onto a square around
/// the element, with (1,0) on the vertex and the +x axis on its exterior
/// bisector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MappedPhi {
    pub map: AffineMap,
    inv: AffineMap,
}

impl MappedPhi {
    pub fn eval(&self, base: &PhiFunction, p: Point2) -> (f64, Vector2<f64>) {
        let q = self.inv.apply(p);
        let (value, grad) = base.eval(q);
        // Chain rule through the inverse map: grad_x (Φ∘inv) = L_inv^T grad.
        (value, self.inv.linear.transpose() * grad)
    }
}

/// Builds the similarity for vertex `i`, starting at scale diameter(E) and
/// escalating 1.5× (three times at most) until all vertices of E land inside
/// the reference square. For interior angles up to π the first scale always
/// contains E; the escalation only rescues near-degenerate inputs, and truly
/// reflex corners fail.
pub fn map_phi_to_vertex(e: &Polygon, i: usize) -> Result<MappedPhi> {
    let v = e.vertex(i);
    let bis = e.exterior_bisector(i);
    let angle = bis.y.atan2(bis.x);
    let mut scale = e.diameter();
    for _ in 0..4 {
        let map = AffineMap::similarity(scale, angle, v.coords - scale * bis)?;
        let inv = map.inverse();
        let contained = e.vertices().iter().all(|&p| {
            let q = inv.apply(p);
            q.x.abs() <= 1.0 + 1e-9 && q.y.abs() <= 1.0 + 1e-9
        });
        if contained {
            return Ok(MappedPhi { map, inv });
        }
        scale *= 1.5;
    }
    Err(Error::Containment(format!(
        "element does not fit the mapped square at vertex {i} (reflex corner?)"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harmonic::fd_laplacian;

    #[test]
    fn pole_ladder_endpoints() {
        let d = pole_distances(50);
        assert_eq!(d.len(), 50);
        assert!((d[49] - 2.0).abs() < 1e-15);
        assert!((1.0 + d[49] - 3.0).abs() < 1e-15);
        // Innermost pole hugs the vertex at root-exponential distance.
        assert!(d[0] < 1e-9 && d[0] > 0.0);
        assert!(d.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn phi_fit_hits_the_tent_data() {
        let phi = PhiFunction::with_defaults().unwrap();
        assert!(phi.residual < 1e-3, "residual {:.3e}", phi.residual);
        let tol = 10.0 * phi.residual.max(1e-12);
        let (at_vertex, _) = phi.eval(Point2::new(1.0, 0.0));
        assert!((at_vertex - 1.0).abs() < tol);
        let (far, _) = phi.eval(Point2::new(-1.0, 0.0));
        assert!(far.abs() < tol);
        let (mid, _) = phi.eval(Point2::new(1.0, 0.5));
        assert!((mid - 0.5).abs() < tol);
    }

    #[test]
    fn phi_is_harmonic_inside_the_square() {
        let phi = PhiFunction::with_defaults().unwrap();
        // Points keep a distance from (1,0): the FD stencil error grows like
        // the 4th derivative, which blows up toward the pole cluster even
        // though Φ itself stays harmonic there. The step balances truncation
        // against the ~1e-12 evaluation noise left by the large fitted
        // coefficients; 1e-3 times the domain diameter sits near the optimum.
        let step = 1e-3 * (2.0 * 2.0f64.sqrt());
        let mut worst = 0.0f64;
        for &p in &[
            Point2::new(0.0, 0.0),
            Point2::new(-0.5, 0.5),
            Point2::new(-0.5, -0.5),
            Point2::new(-0.8, 0.0),
            Point2::new(0.0, -0.7),
        ] {
            let lap = fd_laplacian(|q| phi.eval(q).0, p, step);
            worst = worst.max(lap.abs());
        }
        assert!(worst < 5e-6, "FD Laplacian {worst:.3e}");
    }

    #[test]
    fn phi_gradient_matches_finite_differences() {
        let phi = PhiFunction::with_defaults().unwrap();
        let step = 1e-6;
        for &p in &[Point2::new(0.3, 0.4), Point2::new(-0.6, 0.1), Point2::new(0.8, -0.2)] {
            let (_, g) = phi.eval(p);
            let fx = (phi.eval(Point2::new(p.x + step, p.y)).0
                - phi.eval(Point2::new(p.x - step, p.y)).0)
                / (2.0 * step);
            let fy = (phi.eval(Point2::new(p.x, p.y + step)).0
                - phi.eval(Point2::new(p.x, p.y - step)).0)
                / (2.0 * step);
            assert!((g.x - fx).abs() < 1e-6 * g.norm().max(1.0));
            assert!((g.y - fy).abs() < 1e-6 * g.norm().max(1.0));
        }
    }

    #[test]
    fn vertex_map_fixes_vertex_and_bisector() {
        let square = Polygon::new(vec![
            Point2::new(0.0, 0.0),
            Point2::new(2.0, 0.0),
            Point2::new(2.0, 2.0),
            Point2::new(0.0, 2.0),
        ])
        .unwrap();
        for i in 0..4 {
            let mapped = map_phi_to_vertex(&square, i).unwrap();
            let image = mapped.map.apply(Point2::new(1.0, 0.0));
            assert!((image - square.vertex(i)).norm() < 1e-12);
            // The +x direction lands on the exterior bisector.
            let dir = mapped.map.apply_vector(Vector2::new(1.0, 0.0)).normalize();
            assert!((dir - square.exterior_bisector(i)).norm() < 1e-12);
            // All vertices inside the mapped square.
            for k in 0..4 {
                let q = mapped.map.inverse().apply(square.vertex(k));
                assert!(q.x.abs() <= 1.0 + 1e-9 && q.y.abs() <= 1.0 + 1e-9);
            }
        }
    }

    #[test]
    fn reflex_corner_fails_containment() {
        let lshape = Polygon::new(vec![
            Point2::new(0.0, 0.0),
            Point2::new(2.0, 0.0),
            Point2::new(2.0, 1.0),
            Point2::new(1.0, 1.0),
            Point2::new(1.0, 2.0),
            Point2::new(0.0, 2.0),
        ])
        .unwrap();
        assert!(matches!(
            map_phi_to_vertex(&lshape, 3),
            Err(Error::Containment(_))
        ));
    }
}
