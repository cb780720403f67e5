//! Manufactured benchmark problems on the unit square.
//!
//! Each problem fixes coefficients and an exact solution; the forcing is
//! derived by hand from the strong form and double-checked against a finite
//! difference of the flux divergence in the tests.

use nalgebra::{Matrix2, Vector2};
use std::f64::consts::PI;
use std::sync::Arc;

use crate::geometry::Point2;

pub type ScalarField = Arc<dyn Fn(Point2) -> f64 + Send + Sync>;
pub type VectorField = Arc<dyn Fn(Point2) -> Vector2<f64> + Send + Sync>;
pub type MatrixField = Arc<dyn Fn(Point2) -> Matrix2<f64> + Send + Sync>;

/// Scalar diffusion depending on the solution value, D = D(u; lambda),
/// with its derivative in u. The linearized solvers need both.
#[derive(Clone)]
pub struct NonlinearDiffusion {
    pub lambda: f64,
    pub d: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub d_du: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

/// -div(D grad u) + beta . grad u + gamma u = f, u = g_D on the boundary.
/// When `nonlinear` is set the diffusion is the scalar D(u; lambda) and the
/// `diffusion` field is ignored by the Newton paths.
#[derive(Clone)]
pub struct ProblemSpec {
    pub diffusion: MatrixField,
    pub advection: VectorField,
    pub reaction: ScalarField,
    pub forcing: ScalarField,
    pub dirichlet: ScalarField,
    pub exact: Option<ScalarField>,
    pub exact_gradient: Option<VectorField>,
    pub nonlinear: Option<NonlinearDiffusion>,
}

fn test1_solution(p: Point2) -> (f64, Vector2<f64>, Matrix2<f64>) {
    let (x, y) = (p.x, p.y);
    let a = (x - 0.2) + (y - 0.3) / 2.0;
    let b = (x - 0.7) / 2.0 + (y - 0.8);
    let sx = (2.0 * PI * x).sin();
    let cx = (2.0 * PI * x).cos();
    let sy = (3.0 * PI * y).sin();
    let cy = (3.0 * PI * y).cos();
    let u = 3.0 * a * a + 2.0 * b * b * b + sx * sy;
    let ux = 6.0 * a + 3.0 * b * b + 2.0 * PI * cx * sy;
    let uy = 3.0 * a + 6.0 * b * b + 3.0 * PI * sx * cy;
    let uxx = 6.0 + 3.0 * b - 4.0 * PI * PI * sx * sy;
    let uxy = 3.0 + 6.0 * b + 6.0 * PI * PI * cx * cy;
    let uyy = 1.5 + 12.0 * b - 9.0 * PI * PI * sx * sy;
    (
        u,
        Vector2::new(ux, uy),
        Matrix2::new(uxx, uxy, uxy, uyy),
    )
}

/// Advection-diffusion-reaction with the rotation-like variable tensor
/// D = [[1+y^2, -xy], [-xy, 1+x^2]], wind (x, -y) and reaction xy.
pub fn test1() -> ProblemSpec {
    let diffusion = |p: Point2| {
        Matrix2::new(
            1.0 + p.y * p.y,
            -p.x * p.y,
            -p.x * p.y,
            1.0 + p.x * p.x,
        )
    };
    ProblemSpec {
        diffusion: Arc::new(diffusion),
        advection: Arc::new(|p| Vector2::new(p.x, -p.y)),
        reaction: Arc::new(|p| p.x * p.y),
        forcing: Arc::new(move |p: Point2| {
            let (x, y) = (p.x, p.y);
            let (u, g, h) = test1_solution(p);
            let d = diffusion(p);
            // div(D grad u) expands to D:H(u) + (div D) . grad u with
            // column divergences (-x, -y).
            let ddiv = d.m11 * h.m11 + 2.0 * d.m12 * h.m12 + d.m22 * h.m22 - x * g.x - y * g.y;
            -ddiv + x * g.x - y * g.y + x * y * u
        }),
        dirichlet: Arc::new(|p| test1_solution(p).0),
        exact: Some(Arc::new(|p| test1_solution(p).0)),
        exact_gradient: Some(Arc::new(|p| test1_solution(p).1)),
        nonlinear: None,
    }
}

fn test2_solution(p: Point2) -> (f64, Vector2<f64>, Matrix2<f64>) {
    let (x, y) = (p.x, p.y);
    let a = x - 2.0 * y * y;
    let b = y + 2.0 * x;
    let w = 3.0 * a.cos().powi(2) + 4.0 * b.sin().powi(2);
    let wx = -3.0 * (2.0 * a).sin() + 8.0 * (2.0 * b).sin();
    let wy = 12.0 * y * (2.0 * a).sin() + 4.0 * (2.0 * b).sin();
    let wxx = -6.0 * (2.0 * a).cos() + 32.0 * (2.0 * b).cos();
    let wxy = 24.0 * y * (2.0 * a).cos() + 16.0 * (2.0 * b).cos();
    let wyy = 12.0 * (2.0 * a).sin() - 96.0 * y * y * (2.0 * a).cos() + 8.0 * (2.0 * b).cos();
    let u = w.sin();
    let (sw, cw) = (w.sin(), w.cos());
    let ux = cw * wx;
    let uy = cw * wy;
    let uxx = -sw * wx * wx + cw * wxx;
    let uxy = -sw * wx * wy + cw * wxy;
    let uyy = -sw * wy * wy + cw * wyy;
    (
        u,
        Vector2::new(ux, uy),
        Matrix2::new(uxx, uxy, uxy, uyy),
    )
}

/// Constant strongly anisotropic tensor: eigenvalues (1, 1e-6) rotated by
/// pi/6. Pure diffusion.
pub fn test2() -> ProblemSpec {
    let g = Matrix2::new(
        (PI / 6.0).cos(),
        -(PI / 6.0).sin(),
        (PI / 6.0).sin(),
        (PI / 6.0).cos(),
    );
    let d = g * Matrix2::new(1.0, 0.0, 0.0, 1.0e-6) * g.transpose();
    ProblemSpec {
        diffusion: Arc::new(move |_| d),
        advection: Arc::new(|_| Vector2::zeros()),
        reaction: Arc::new(|_| 0.0),
        forcing: Arc::new(move |p: Point2| {
            let (_, _, h) = test2_solution(p);
            -(d.m11 * h.m11 + 2.0 * d.m12 * h.m12 + d.m22 * h.m22)
        }),
        dirichlet: Arc::new(|p| test2_solution(p).0),
        exact: Some(Arc::new(|p| test2_solution(p).0)),
        exact_gradient: Some(Arc::new(|p| test2_solution(p).1)),
        nonlinear: None,
    }
}

fn test3_solution(p: Point2) -> (f64, Vector2<f64>, f64) {
    let (x, y) = (p.x, p.y);
    let rho = Vector2::new(x - 0.5, y - 0.5);
    let s = 3.0 * PI * rho.norm_squared();
    let u = 0.125 * s.sin().powi(3);
    // grad u = g(s) rho with g = (3/8) sin^2 s cos s * 6 pi / ... collected:
    let g = 0.125 * 3.0 * s.sin().powi(2) * s.cos() * 6.0 * PI;
    let grad = g * rho;
    let dg_ds = 0.125 * 3.0 * 6.0 * PI
        * (2.0 * s.sin() * s.cos().powi(2) - s.sin().powi(3));
    let lap = 2.0 * g + rho.norm_squared() * dg_ds * 6.0 * PI;
    (u, grad, lap)
}

/// Quasilinear diffusion D(u) = 1/(lambda + u^2) with a radial oscillatory
/// exact solution independent of lambda.
pub fn test3(lambda: f64) -> ProblemSpec {
    let d = move |u: f64| 1.0 / (lambda + u * u);
    let d_du = move |u: f64| -2.0 * u / (lambda + u * u).powi(2);
    ProblemSpec {
        diffusion: Arc::new(move |_| Matrix2::identity() * d(0.0)),
        advection: Arc::new(|_| Vector2::zeros()),
        reaction: Arc::new(|_| 0.0),
        forcing: Arc::new(move |p: Point2| {
            let (u, grad, lap) = test3_solution(p);
            // -div(D(u) grad u) = -D lap u - D'(u) |grad u|^2
            -d(u) * lap - d_du(u) * grad.norm_squared()
        }),
        dirichlet: Arc::new(|p| test3_solution(p).0),
        exact: Some(Arc::new(|p| test3_solution(p).0)),
        exact_gradient: Some(Arc::new(|p| test3_solution(p).1)),
        nonlinear: Some(NonlinearDiffusion {
            lambda,
            d: Arc::new(d),
            d_du: Arc::new(d_du),
        }),
    }
}
