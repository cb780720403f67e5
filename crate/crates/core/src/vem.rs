//! Lowest-order virtual element method on polygonal meshes.
//!
//! One degree of freedom per mesh vertex. All element integrals that the
//! method needs reduce to boundary integrals of the linear trace plus the
//! element area, so the projectors below are assembled in closed form.

use nalgebra::{DMatrix, DVector, Vector2};

use crate::geometry::mesh::Mesh;
use crate::geometry::quadrature::interior_quadrature;
use crate::geometry::{Point2, Polygon};
use crate::problems::ProblemSpec;
use crate::{Error, Result};

/// Quadrature degree for assembling variable coefficients.
const ASSEMBLY_DEGREE: usize = 2;
/// Quadrature degree for error norms, deliberately much higher than the
/// scheme order so the measured error is not polluted by integration.
const ERROR_DEGREE: usize = 8;

pub(crate) const NEWTON_MAX_ITERS: usize = 100;
pub(crate) const NEWTON_EPS_RES_REL: f64 = 1e-12;
pub(crate) const NEWTON_EPS_RES_ABS: f64 = 1e-12;
pub(crate) const NEWTON_EPS_STEP_REL: f64 = 1e-10;
pub(crate) const NEWTON_EPS_STEP_ABS: f64 = 1e-10;

/// Elliptic projections of the local virtual space onto P1, expressed in
/// the scaled monomials {1, (x-cx)/h, (y-cy)/h}.
pub struct LocalProjectors {
    pub centroid: Point2,
    pub h: f64,
    /// Row i holds the monomial coefficients of the H1 projection of the
    /// i-th vertex basis function.
    pub pi_nabla: DMatrix<f64>,
    /// Row i holds the (constant) gradient of that projection; this equals
    /// the L2 projection of the gradient because traces are linear.
    pub pi0_grad: DMatrix<f64>,
}

impl LocalProjectors {
    /// The L2 projection onto P1 coincides with the H1 one at lowest order,
    /// which is what makes the variable-coefficient terms computable.
    pub fn pi0_1(&self) -> &DMatrix<f64> {
        &self.pi_nabla
    }

    /// Evaluate a monomial coefficient triple at a physical point.
    pub fn eval(&self, coeffs: &DVector<f64>, p: Point2) -> f64 {
        coeffs[0]
            + coeffs[1] * (p.x - self.centroid.x) / self.h
            + coeffs[2] * (p.y - self.centroid.y) / self.h
    }

    /// Monomial coefficients of the projection of a local dof vector.
    pub fn project(&self, dofs: &DVector<f64>) -> DVector<f64> {
        self.pi_nabla.tr_mul(dofs)
    }

    /// Constant gradient of the projection of a local dof vector.
    pub fn project_gradient(&self, dofs: &DVector<f64>) -> Vector2<f64> {
        let g = self.pi0_grad.tr_mul(dofs);
        Vector2::new(g[0], g[1])
    }

    /// Dof-to-dof projection matrix P with P[i][j] = (pi v_j)(V_i).
    fn dof_matrix(&self, e: &Polygon) -> DMatrix<f64> {
        let n = e.nv();
        DMatrix::from_fn(n, n, |i, j| {
            let row = self.pi_nabla.row(j);
            row[0]
                + row[1] * (e.vertex(i).x - self.centroid.x) / self.h
                + row[2] * (e.vertex(i).y - self.centroid.y) / self.h
        })
    }
}

/// Build the H1 projector from boundary integrals. The gradient part uses
/// int_E dv/dx = sum_e |e| n_x (v_a + v_b) / 2, exact for linear traces;
/// the constant part matches boundary averages of v and its projection.
pub fn projector_nabla(e: &Polygon) -> Result<LocalProjectors> {
    let n = e.nv();
    let area = e.area();
    let h = e.diameter();
    if !(area > 0.0) || !(h > 0.0) {
        return Err(Error::DegeneratePolygon(format!(
            "area {area:.3e}, diameter {h:.3e}"
        )));
    }
    let c = e.centroid();

    // b[i] = integral over E of grad v_i, one row per dof. Only the two
    // edges touching vertex i contribute; |e| n equals the rotated edge
    // vector so no normalization is needed.
    let mut b: DMatrix<f64> = DMatrix::zeros(n, 2);
    for k in 0..n {
        let (a, bb) = e.edge(k);
        let scaled_normal = Vector2::new(bb.y - a.y, -(bb.x - a.x));
        for i in [k, e.next_idx(k)] {
            b[(i, 0)] += 0.5 * scaled_normal.x;
            b[(i, 1)] += 0.5 * scaled_normal.y;
        }
    }

    // Boundary (trapezoid) integrals of the scaled monomials and of each
    // vertex basis function, used to pin the constant coefficient.
    let perimeter: f64 = (0..n).map(|k| e.edge_length(k)).sum();
    let m2 = |p: Point2| (p.x - c.x) / h;
    let m3 = |p: Point2| (p.y - c.y) / h;
    let mut bd_m2 = 0.0;
    let mut bd_m3 = 0.0;
    for k in 0..n {
        let (a, bb) = e.edge(k);
        let len = e.edge_length(k);
        bd_m2 += 0.5 * len * (m2(a) + m2(bb));
        bd_m3 += 0.5 * len * (m3(a) + m3(bb));
    }

    let mut pi_nabla: DMatrix<f64> = DMatrix::zeros(n, 3);
    let mut pi0_grad: DMatrix<f64> = DMatrix::zeros(n, 2);
    for i in 0..n {
        let a2 = h * b[(i, 0)] / area;
        let a3 = h * b[(i, 1)] / area;
        let bd_v = 0.5 * (e.edge_length(e.prev_idx(i)) + e.edge_length(i));
        let a1 = (bd_v - a2 * bd_m2 - a3 * bd_m3) / perimeter;
        pi_nabla[(i, 0)] = a1;
        pi_nabla[(i, 1)] = a2;
        pi_nabla[(i, 2)] = a3;
        pi0_grad[(i, 0)] = b[(i, 0)] / area;
        pi0_grad[(i, 1)] = b[(i, 1)] / area;
    }

    Ok(LocalProjectors {
        centroid: c,
        h,
        pi_nabla,
        pi0_grad,
    })
}

/// Element contributions split by bilinear form.
pub struct LocalVemMatrices {
    pub projectors: LocalProjectors,
    pub consistency: DMatrix<f64>,
    pub stabilization: DMatrix<f64>,
    pub advection: DMatrix<f64>,
    pub reaction: DMatrix<f64>,
    pub rhs: DVector<f64>,
}

impl LocalVemMatrices {
    pub fn stiffness(&self) -> DMatrix<f64> {
        &self.consistency + &self.stabilization + &self.advection + &self.reaction
    }
}

/// Assemble all local forms of the linear problem on one element.
pub fn local_vem_matrices(e: &Polygon, problem: &ProblemSpec) -> Result<LocalVemMatrices> {
    let n = e.nv();
    let proj = projector_nabla(e)?;
    let quad = interior_quadrature(e, ASSEMBLY_DEGREE)?;

    let rows: Vec<DVector<f64>> = (0..n).map(|i| proj.pi_nabla.row(i).transpose()).collect();
    let grads: Vec<Vector2<f64>> = (0..n)
        .map(|i| Vector2::new(proj.pi0_grad[(i, 0)], proj.pi0_grad[(i, 1)]))
        .collect();

    let mut consistency: DMatrix<f64> = DMatrix::zeros(n, n);
    let mut advection: DMatrix<f64> = DMatrix::zeros(n, n);
    let mut reaction: DMatrix<f64> = DMatrix::zeros(n, n);
    let mut rhs_f = 0.0;
    for (q, &w) in quad.points.iter().zip(&quad.weights) {
        let d = (problem.diffusion)(*q);
        let beta = (problem.advection)(*q);
        let gamma = (problem.reaction)(*q);
        rhs_f += w * (problem.forcing)(*q);
        for i in 0..n {
            let vi = proj.eval(&rows[i], *q);
            for j in 0..n {
                consistency[(i, j)] += w * (grads[i].dot(&(d * grads[j])));
                advection[(i, j)] += w * beta.dot(&grads[j]) * vi;
                if gamma != 0.0 {
                    reaction[(i, j)] += w * gamma * vi * proj.eval(&rows[j], *q);
                }
            }
        }
    }

    // dofi-dofi stabilization scaled by the local diffusion magnitude.
    let p = proj.dof_matrix(e);
    let complement = DMatrix::identity(n, n) - p;
    let scale = (problem.diffusion)(proj.centroid).trace() / 2.0;
    let stabilization = complement.transpose() * &complement * scale;

    // Load: the zeroth moment of each basis function is approximated by its
    // boundary average times the element area (first-order accurate).
    let perimeter: f64 = (0..n).map(|k| e.edge_length(k)).sum();
    let rhs = DVector::from_fn(n, |i, _| {
        let bd_mean = 0.5 * (e.edge_length(e.prev_idx(i)) + e.edge_length(i)) / perimeter;
        bd_mean * rhs_f
    });

    Ok(LocalVemMatrices {
        projectors: proj,
        consistency,
        stabilization,
        advection,
        reaction,
        rhs,
    })
}

fn dirichlet_rows(mesh: &Mesh, problem: &ProblemSpec, k: &mut DMatrix<f64>, rhs: &mut DVector<f64>) {
    for i in 0..mesh.n_vertices() {
        if mesh.is_boundary(i) {
            k.row_mut(i).fill(0.0);
            k[(i, i)] = 1.0;
            rhs[i] = (problem.dirichlet)(mesh.vertex(i));
        }
    }
}

/// Solve the linear problem. Boundary conditions are imposed by replacing
/// boundary rows with identity rows; trial columns keep their entries,
/// which is consistent because those rows fix the boundary values exactly.
pub fn solve_vem(mesh: &Mesh, problem: &ProblemSpec) -> Result<DVector<f64>> {
    let nv = mesh.n_vertices();
    let mut k: DMatrix<f64> = DMatrix::zeros(nv, nv);
    let mut rhs: DVector<f64> = DVector::zeros(nv);
    for e in 0..mesh.n_elements() {
        let poly = mesh.element_polygon(e);
        let local = local_vem_matrices(&poly, problem)?;
        let a = local.stiffness();
        let idx = mesh.element(e);
        for (li, &gi) in idx.iter().enumerate() {
            rhs[gi] += local.rhs[li];
            for (lj, &gj) in idx.iter().enumerate() {
                k[(gi, gj)] += a[(li, lj)];
            }
        }
    }
    dirichlet_rows(mesh, problem, &mut k, &mut rhs);
    k.lu()
        .solve(&rhs)
        .ok_or_else(|| Error::SingularSystem("vem global matrix".into()))
}

/// Converged Newton iteration together with its residual trace.
pub struct NewtonSolution {
    pub dofs: DVector<f64>,
    pub iterations: usize,
    pub residuals: Vec<f64>,
}

/// Element forms linearized around the current iterate: the stiffness with
/// diffusion frozen at the projected iterate, plus the derivative terms.
fn local_newton(
    e: &Polygon,
    problem: &ProblemSpec,
    z_local: &DVector<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>, DVector<f64>)> {
    let nl = problem
        .nonlinear
        .as_ref()
        .ok_or(Error::UnsupportedVariant("newton solve of a linear problem"))?;
    let n = e.nv();
    let proj = projector_nabla(e)?;
    let quad = interior_quadrature(e, ASSEMBLY_DEGREE)?;

    let z_coeffs = proj.project(z_local);
    let z_grad = proj.project_gradient(z_local);
    // Value of the projected iterate at the centroid = constant coefficient,
    // since the remaining scaled monomials vanish there.
    let z_mean = z_coeffs[0];

    let rows: Vec<DVector<f64>> = (0..n).map(|i| proj.pi_nabla.row(i).transpose()).collect();
    let grads: Vec<Vector2<f64>> = (0..n)
        .map(|i| Vector2::new(proj.pi0_grad[(i, 0)], proj.pi0_grad[(i, 1)]))
        .collect();

    let mut a: DMatrix<f64> = DMatrix::zeros(n, n);
    let mut jac_extra: DMatrix<f64> = DMatrix::zeros(n, n);
    let mut rhs_f = 0.0;
    for (q, &w) in quad.points.iter().zip(&quad.weights) {
        let zq = proj.eval(&z_coeffs, *q);
        let d = (nl.d)(zq);
        let d_du = (nl.d_du)(zq);
        let beta = (problem.advection)(*q);
        let gamma = (problem.reaction)(*q);
        rhs_f += w * (problem.forcing)(*q);
        for i in 0..n {
            let vi = proj.eval(&rows[i], *q);
            let zg_gi = z_grad.dot(&grads[i]);
            for j in 0..n {
                a[(i, j)] += w * (d * grads[i].dot(&grads[j]) + beta.dot(&grads[j]) * vi);
                if gamma != 0.0 {
                    a[(i, j)] += w * gamma * vi * proj.eval(&rows[j], *q);
                }
                // d/dz_j of the consistency term, evaluated against test i.
                jac_extra[(i, j)] += w * d_du * proj.eval(&rows[j], *q) * zg_gi;
            }
        }
    }

    let p = proj.dof_matrix(e);
    let complement = DMatrix::identity(n, n) - p;
    let s = complement.transpose() * &complement;
    let sz = &s * z_local;
    let d_mean = (nl.d)(z_mean);
    let dd_mean = (nl.d_du)(z_mean);
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] += d_mean * s[(i, j)];
            // d/dz_j of the stabilization scale.
            jac_extra[(i, j)] += dd_mean * proj.pi_nabla[(j, 0)] * sz[i];
        }
    }

    let perimeter: f64 = (0..n).map(|k| e.edge_length(k)).sum();
    let rhs = DVector::from_fn(n, |i, _| {
        let bd_mean = 0.5 * (e.edge_length(e.prev_idx(i)) + e.edge_length(i)) / perimeter;
        bd_mean * rhs_f
    });

    Ok((a, jac_extra, rhs))
}

/// Newton iteration for the quasilinear problem, starting from zero. Both
/// the residual and the step must fall below their tolerances; the residual
/// tolerance is relative to the first residual norm.
pub fn solve_vem_newton(mesh: &Mesh, problem: &ProblemSpec) -> Result<NewtonSolution> {
    let nv = mesh.n_vertices();
    let mut z: DVector<f64> = DVector::zeros(nv);
    let u0_norm = z.norm();
    let mut residuals = Vec::new();
    let mut f0_norm = 0.0;
    let mut last_step = f64::INFINITY;

    for it in 0..NEWTON_MAX_ITERS {
        let mut a: DMatrix<f64> = DMatrix::zeros(nv, nv);
        let mut jac: DMatrix<f64> = DMatrix::zeros(nv, nv);
        let mut rhs: DVector<f64> = DVector::zeros(nv);
        for e in 0..mesh.n_elements() {
            let poly = mesh.element_polygon(e);
            let idx = mesh.element(e);
            let z_local = DVector::from_fn(idx.len(), |li, _| z[idx[li]]);
            let (la, lj, lr) = local_newton(&poly, problem, &z_local)?;
            for (li, &gi) in idx.iter().enumerate() {
                rhs[gi] += lr[li];
                for (lj_i, &gj) in idx.iter().enumerate() {
                    a[(gi, gj)] += la[(li, lj_i)];
                    jac[(gi, gj)] += la[(li, lj_i)] + lj[(li, lj_i)];
                }
            }
        }
        // Residual of the nonlinear equation at z; boundary rows measure
        // the mismatch with the Dirichlet data.
        let mut f = rhs - &a * &z;
        for i in 0..nv {
            if mesh.is_boundary(i) {
                jac.row_mut(i).fill(0.0);
                jac[(i, i)] = 1.0;
                f[i] = (problem.dirichlet)(mesh.vertex(i)) - z[i];
            }
        }
        let fnorm = f.norm();
        residuals.push(fnorm);
        if it == 0 {
            f0_norm = fnorm;
        }
        let res_ok = fnorm <= NEWTON_EPS_RES_REL * f0_norm + NEWTON_EPS_RES_ABS;
        let step_ok = last_step <= NEWTON_EPS_STEP_REL * u0_norm + NEWTON_EPS_STEP_ABS;
        if res_ok && step_ok {
            return Ok(NewtonSolution {
                dofs: z,
                iterations: it,
                residuals,
            });
        }
        let delta = jac
            .lu()
            .solve(&f)
            .ok_or_else(|| Error::SingularSystem("newton jacobian".into()))?;
        last_step = delta.norm();
        z += &delta;
    }
    Err(Error::NewtonDidNotConverge {
        iterations: NEWTON_MAX_ITERS,
        history: residuals,
    })
}

/// Absolute L2 and H1-seminorm errors of the projected discrete solution
/// against the exact fields of the problem.
pub fn vem_errors(mesh: &Mesh, dofs: &DVector<f64>, problem: &ProblemSpec) -> Result<(f64, f64)> {
    let exact = problem
        .exact
        .as_ref()
        .ok_or(Error::UnsupportedVariant("error norms need an exact solution"))?;
    let exact_grad = problem
        .exact_gradient
        .as_ref()
        .ok_or(Error::UnsupportedVariant("error norms need an exact gradient"))?;
    let mut err0 = 0.0f64;
    let mut err1 = 0.0f64;
    for e in 0..mesh.n_elements() {
        let poly = mesh.element_polygon(e);
        let idx = mesh.element(e);
        let local = DVector::from_fn(idx.len(), |li, _| dofs[idx[li]]);
        let proj = projector_nabla(&poly)?;
        let coeffs = proj.project(&local);
        let grad = proj.project_gradient(&local);
        let quad = interior_quadrature(&poly, ERROR_DEGREE)?;
        for (q, &w) in quad.points.iter().zip(&quad.weights) {
            let du = exact(*q) - proj.eval(&coeffs, *q);
            err0 += w * du * du;
            err1 += w * (exact_grad(*q) - grad).norm_squared();
        }
    }
    Ok((err0.sqrt(), err1.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::families::{generate_mesh, rdqm, MeshFamily, RdqmParams};
    use crate::problems::{test1, test3};
    use nalgebra::Matrix2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn laplace() -> ProblemSpec {
        ProblemSpec {
            diffusion: Arc::new(|_| Matrix2::identity()),
            advection: Arc::new(|_| Vector2::zeros()),
            reaction: Arc::new(|_| 0.0),
            forcing: Arc::new(|_| 0.0),
            dirichlet: Arc::new(|p| 2.0 + 3.0 * p.x - 5.0 * p.y),
            exact: Some(Arc::new(|p| 2.0 + 3.0 * p.x - 5.0 * p.y)),
            exact_gradient: Some(Arc::new(|_| Vector2::new(3.0, -5.0))),
            nonlinear: None,
        }
    }

    fn random_polygon(rng: &mut ChaCha8Rng) -> Polygon {
        // Radial construction around a random center: always simple.
        let n = rng.random_range(3..=8);
        let cx = rng.random::<f64>();
        let cy = rng.random::<f64>() - 0.5;
        let mut angles: Vec<f64> = (0..n)
            .map(|k| std::f64::consts::TAU * (k as f64 + 0.35 * rng.random::<f64>()) / n as f64)
            .collect();
        angles.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let pts: Vec<Point2> = angles
            .iter()
            .map(|&t| {
                let r = 0.4 + 0.6 * rng.random::<f64>();
                Point2::new(cx + r * t.cos(), cy + r * t.sin())
            })
            .collect();
        Polygon::new(pts).unwrap()
    }

    #[test]
    fn projector_reproduces_linears() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..40 {
            let e = random_polygon(&mut rng);
            let proj = projector_nabla(&e).unwrap();
            let (a, b, c) = (
                rng.random::<f64>() - 0.5,
                2.0 * rng.random::<f64>(),
                -1.5 * rng.random::<f64>(),
            );
            let p1 = |p: Point2| a + b * p.x + c * p.y;
            let dofs = DVector::from_fn(e.nv(), |i, _| p1(e.vertex(i)));
            let coeffs = proj.project(&dofs);
            for k in 0..e.nv() {
                let v = e.vertex(k);
                assert!((proj.eval(&coeffs, v) - p1(v)).abs() < 1e-12);
            }
            let g = proj.project_gradient(&dofs);
            assert!((g - Vector2::new(b, c)).norm() < 1e-12);
        }
    }

    #[test]
    fn consistency_is_exact_on_linears() {
        // a_h(p, v) must equal the exact bilinear form a(p, v) whenever p is
        // linear, for every virtual v: the stabilization vanishes on linears
        // and the consistency term integrates the constant gradient exactly.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let problem = laplace();
        for _ in 0..20 {
            let e = random_polygon(&mut rng);
            let local = local_vem_matrices(&e, &problem).unwrap();
            let k = local.stiffness();
            let (a, b, c) = (
                rng.random::<f64>(),
                rng.random::<f64>() - 0.3,
                rng.random::<f64>() + 0.2,
            );
            let p_dofs = DVector::from_fn(e.nv(), |i, _| {
                let v = e.vertex(i);
                a + b * v.x + c * v.y
            });
            let v_dofs = DVector::from_fn(e.nv(), |_, _| rng.random::<f64>() - 0.5);
            let lhs = (k.tr_mul(&p_dofs)).dot(&v_dofs);
            // a(p, v) = grad p . int_E grad v, and the integral of grad v is
            // area times the projected gradient.
            let gv = local.projectors.project_gradient(&v_dofs);
            let rhs = Vector2::new(b, c).dot(&gv) * e.area();
            assert!(
                (lhs - rhs).abs() < 1e-12 * (1.0 + k.amax()),
                "consistency violated: {lhs} vs {rhs}"
            );
        }
    }

    #[test]
    fn stabilization_kernel_is_exactly_the_linears() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for _ in 0..10 {
            let e = random_polygon(&mut rng);
            let n = e.nv();
            let proj = projector_nabla(&e).unwrap();
            let p = proj.dof_matrix(&e);
            let s = (DMatrix::identity(n, n) - &p).transpose() * (DMatrix::identity(n, n) - &p);
            // Linear dof vectors are killed.
            for (b, c) in [(1.0, 0.0), (0.0, 1.0), (0.3, -0.8)] {
                let dofs = DVector::from_fn(n, |i, _| 1.0 + b * e.vertex(i).x + c * e.vertex(i).y);
                assert!((&s * &dofs).norm() < 1e-12 * dofs.norm());
            }
            // And the rank is n - 3: the kernel is no bigger.
            let eig = s.symmetric_eigen();
            let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
            vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
            assert!(vals[..3].iter().all(|v| v.abs() < 1e-10));
            if n > 3 {
                assert!(vals[3] > 1e-10, "stabilization lost rank: {:?}", vals);
            }
        }
    }

    #[test]
    fn global_laplace_matrix_is_symmetric_and_has_zero_row_sums() {
        let mesh = generate_mesh(
            &MeshFamily::Rdqm(RdqmParams {
                n: 4,
                distortion: 0.2,
            }),
            5,
        )
        .unwrap();
        let problem = laplace();
        let nv = mesh.n_vertices();
        let mut k: DMatrix<f64> = DMatrix::zeros(nv, nv);
        for e in 0..mesh.n_elements() {
            let local = local_vem_matrices(&mesh.element_polygon(e), &problem).unwrap();
            let a = local.stiffness();
            let idx = mesh.element(e);
            for (li, &gi) in idx.iter().enumerate() {
                for (lj, &gj) in idx.iter().enumerate() {
                    k[(gi, gj)] += a[(li, lj)];
                }
            }
        }
        assert!((&k - k.transpose()).amax() < 1e-12 * k.amax());
        let ones = DVector::from_element(nv, 1.0);
        assert!((&k * &ones).amax() < 1e-10 * k.amax());
        // Positive semidefinite: constants are the only kernel on a
        // connected mesh.
        let eig = k.clone().symmetric_eigen();
        let min = eig.eigenvalues.min();
        assert!(min > -1e-10 * k.amax(), "negative eigenvalue {min}");
    }

    #[test]
    fn linear_patch_test_is_nodally_exact() {
        let mesh = rdqm(
            RdqmParams {
                n: 3,
                distortion: 0.25,
            },
            7,
        )
        .unwrap();
        let problem = laplace();
        let u = solve_vem(&mesh, &problem).unwrap();
        for i in 0..mesh.n_vertices() {
            let p = mesh.vertex(i);
            let want = 2.0 + 3.0 * p.x - 5.0 * p.y;
            assert!(
                (u[i] - want).abs() < 1e-10,
                "vertex {i}: {} vs {want}",
                u[i]
            );
        }
        let (e0, e1) = vem_errors(&mesh, &u, &problem).unwrap();
        assert!(e0 < 1e-10 && e1 < 1e-9, "patch errors {e0:.2e} {e1:.2e}");
    }

    #[test]
    fn full_problem_converges_under_refinement() {
        let problem = test1();
        let mut errs = Vec::new();
        let mut hs = Vec::new();
        for n in [4, 8] {
            let mesh = rdqm(RdqmParams { n, distortion: 0.2 }, 11).unwrap();
            let u = solve_vem(&mesh, &problem).unwrap();
            let (e0, e1) = vem_errors(&mesh, &u, &problem).unwrap();
            hs.push(mesh.h());
            errs.push((e0, e1));
        }
        let rate0 = (errs[0].0 / errs[1].0).ln() / (hs[0] / hs[1]).ln();
        let rate1 = (errs[0].1 / errs[1].1).ln() / (hs[0] / hs[1]).ln();
        assert!(rate0 > 1.5, "l2 rate {rate0:.2} errs {errs:?}");
        assert!(rate1 > 0.7, "h1 rate {rate1:.2} errs {errs:?}");
    }

    #[test]
    fn newton_converges_and_tracks_the_exact_solution() {
        let mesh = rdqm(RdqmParams { n: 6, distortion: 0.1 }, 3).unwrap();
        let problem = test3(1.0);
        let sol = solve_vem_newton(&mesh, &problem).unwrap();
        assert!(sol.iterations <= 25, "iterations {}", sol.iterations);
        // Residuals settle at machine precision relative to the start.
        let last = *sol.residuals.last().unwrap();
        assert!(last <= 1e-12 * sol.residuals[0] + 1e-12);
        let (e0, _) = vem_errors(&mesh, &sol.dofs, &problem).unwrap();
        assert!(e0 < 0.05, "l2 error {e0:.3e}");
    }

    #[test]
    fn newton_needs_more_iterations_for_smaller_lambda() {
        let mesh = rdqm(RdqmParams { n: 4, distortion: 0.1 }, 3).unwrap();
        let mut counts = Vec::new();
        for lambda in [1.0, 0.5, 0.1] {
            let sol = solve_vem_newton(&mesh, &test3(lambda)).unwrap();
            counts.push(sol.iterations);
        }
        assert!(
            counts[0] <= counts[1] && counts[1] <= counts[2],
            "iteration counts {counts:?}"
        );
    }

    #[test]
    fn newton_rejects_linear_problems() {
        let mesh = rdqm(RdqmParams { n: 2, distortion: 0.0 }, 1).unwrap();
        assert!(matches!(
            solve_vem_newton(&mesh, &laplace()),
            Err(Error::UnsupportedVariant(_))
        ));
    }
}
