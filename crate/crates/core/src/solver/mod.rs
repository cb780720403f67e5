//! Solvers built on predicted or fitted basis functions.
//!
//! The discrete space is broken across elements: basis functions of
//! neighbouring elements share vertex degrees of freedom but their traces
//! only match up to the boundary fit quality. Assembly is element-wise with
//! the usual scatter; nothing else in the pipeline needs continuity.

pub mod basis;

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector, Vector2};

pub use basis::{
    element_basis, hat_fit, BasisMode, BasisProvenance, ElementBasis, ElementBasisBundle,
    ModelSet, SolverContext,
};

use crate::geometry::mesh::Mesh;
use crate::geometry::quadrature::{gauss_legendre, interior_quadrature};
use crate::geometry::Point2;
use crate::problems::ProblemSpec;
use crate::vem::{
    NEWTON_EPS_RES_ABS, NEWTON_EPS_RES_REL, NEWTON_EPS_STEP_ABS, NEWTON_EPS_STEP_REL,
};
use crate::{Error, Result};

const ASSEMBLY_DEGREE: usize = 2;
const ERROR_DEGREE: usize = 8;

/// Local stiffness and load from a materialized basis bundle:
/// A_ij = sum_q w_q [ q_i . D q_j + (beta . q_j) phi_i + gamma phi_i phi_j ],
/// rhs_i = sum_q w_q f phi_i.
pub fn local_navem_matrices(
    bundle: &ElementBasisBundle,
    points: &[Point2],
    weights: &[f64],
    problem: &ProblemSpec,
) -> (DMatrix<f64>, DVector<f64>) {
    let n = bundle.n_dofs();
    let mut a: DMatrix<f64> = DMatrix::zeros(n, n);
    let mut rhs: DVector<f64> = DVector::zeros(n);
    for (k, (&w, p)) in weights.iter().zip(points).enumerate() {
        let d = (problem.diffusion)(*p);
        let beta = (problem.advection)(*p);
        let gamma = (problem.reaction)(*p);
        let f = (problem.forcing)(*p);
        for i in 0..n {
            let phi_i = bundle.values[(k, i)];
            let qi = bundle.gradient(k, i);
            rhs[i] += w * f * phi_i;
            for j in 0..n {
                let qj = bundle.gradient(k, j);
                a[(i, j)] += w
                    * (qi.dot(&(d * qj))
                        + beta.dot(&qj) * phi_i
                        + gamma * phi_i * bundle.values[(k, j)]);
            }
        }
    }
    (a, rhs)
}

/// One element prepared for assembly: global indices, quadrature, bundle.
struct PreparedElement {
    idx: Vec<usize>,
    points: Vec<Point2>,
    weights: Vec<f64>,
    bundle: ElementBasisBundle,
}

fn prepare_elements<'a>(
    mesh: &Mesh,
    mode: BasisMode,
    ctx: &'a SolverContext,
    degree: usize,
) -> Result<Vec<PreparedElement>> {
    (0..mesh.n_elements())
        .map(|e| {
            let poly = mesh.element_polygon(e);
            let quad = interior_quadrature(&poly, degree)?;
            let basis = element_basis(&poly, mode, ctx)?;
            let bundle = basis.bundle(&quad.points)?;
            Ok(PreparedElement {
                idx: mesh.element(e).to_vec(),
                points: quad.points,
                weights: quad.weights,
                bundle,
            })
        })
        .collect()
}

fn apply_dirichlet(
    mesh: &Mesh,
    problem: &ProblemSpec,
    k: &mut DMatrix<f64>,
    rhs: &mut DVector<f64>,
) {
    for i in 0..mesh.n_vertices() {
        if mesh.is_boundary(i) {
            k.row_mut(i).fill(0.0);
            k[(i, i)] = 1.0;
            rhs[i] = (problem.dirichlet)(mesh.vertex(i));
        }
    }
}

/// Solve the linear problem with predicted or fitted basis functions.
/// Dirichlet data is interpolated at boundary vertices.
pub fn solve_navem(
    mesh: &Mesh,
    problem: &ProblemSpec,
    mode: BasisMode,
    ctx: &SolverContext,
) -> Result<DVector<f64>> {
    let nv = mesh.n_vertices();
    let mut k: DMatrix<f64> = DMatrix::zeros(nv, nv);
    let mut rhs: DVector<f64> = DVector::zeros(nv);
    for pe in prepare_elements(mesh, mode, ctx, ASSEMBLY_DEGREE)? {
        let (a, lr) = local_navem_matrices(&pe.bundle, &pe.points, &pe.weights, problem);
        for (li, &gi) in pe.idx.iter().enumerate() {
            rhs[gi] += lr[li];
            for (lj, &gj) in pe.idx.iter().enumerate() {
                k[(gi, gj)] += a[(li, lj)];
            }
        }
    }
    apply_dirichlet(mesh, problem, &mut k, &mut rhs);
    k.lu()
        .solve(&rhs)
        .ok_or_else(|| Error::SingularSystem("navem global matrix".into()))
}

/// Newton iteration for the quasilinear problem. The basis bundles are
/// iteration-independent and prepared once; each iteration re-evaluates the
/// diffusion at the current discrete solution's quadrature values.
pub fn solve_navem_newton(
    mesh: &Mesh,
    problem: &ProblemSpec,
    mode: BasisMode,
    ctx: &SolverContext,
    max_iters: usize,
) -> Result<crate::vem::NewtonSolution> {
    let nl = problem
        .nonlinear
        .as_ref()
        .ok_or(Error::UnsupportedVariant("newton solve of a linear problem"))?;
    let prepared = prepare_elements(mesh, mode, ctx, ASSEMBLY_DEGREE)?;
    let nv = mesh.n_vertices();
    let mut z: DVector<f64> = DVector::zeros(nv);
    let u0_norm = z.norm();
    let mut residuals = Vec::new();
    let mut f0_norm = 0.0;
    let mut last_step = f64::INFINITY;

    for it in 0..max_iters {
        let mut a: DMatrix<f64> = DMatrix::zeros(nv, nv);
        let mut jac: DMatrix<f64> = DMatrix::zeros(nv, nv);
        let mut rhs: DVector<f64> = DVector::zeros(nv);
        for pe in &prepared {
            let n = pe.idx.len();
            let z_local = DVector::from_fn(n, |li, _| z[pe.idx[li]]);
            let u_q = &pe.bundle.values * &z_local;
            let gx_q = &pe.bundle.grad_x * &z_local;
            let gy_q = &pe.bundle.grad_y * &z_local;
            let mut la: DMatrix<f64> = DMatrix::zeros(n, n);
            let mut lj: DMatrix<f64> = DMatrix::zeros(n, n);
            let mut lr: DVector<f64> = DVector::zeros(n);
            for (k, (&w, p)) in pe.weights.iter().zip(&pe.points).enumerate() {
                let d = (nl.d)(u_q[k]);
                let d_du = (nl.d_du)(u_q[k]);
                let beta = (problem.advection)(*p);
                let gamma = (problem.reaction)(*p);
                let zg = Vector2::new(gx_q[k], gy_q[k]);
                let f = (problem.forcing)(*p);
                for i in 0..n {
                    let phi_i = pe.bundle.values[(k, i)];
                    let qi = pe.bundle.gradient(k, i);
                    lr[i] += w * f * phi_i;
                    let zg_qi = zg.dot(&qi);
                    for j in 0..n {
                        let qj = pe.bundle.gradient(k, j);
                        la[(i, j)] += w
                            * (d * qi.dot(&qj)
                                + beta.dot(&qj) * phi_i
                                + gamma * phi_i * pe.bundle.values[(k, j)]);
                        lj[(i, j)] += w * d_du * pe.bundle.values[(k, j)] * zg_qi;
                    }
                }
            }
            for (li, &gi) in pe.idx.iter().enumerate() {
                rhs[gi] += lr[li];
                for (lj_i, &gj) in pe.idx.iter().enumerate() {
                    a[(gi, gj)] += la[(li, lj_i)];
                    jac[(gi, gj)] += la[(li, lj_i)] + lj[(li, lj_i)];
                }
            }
        }
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
            return Ok(crate::vem::NewtonSolution {
                dofs: z,
                iterations: it,
                residuals,
            });
        }
        let delta = jac
            .lu()
            .solve(&f)
            .ok_or_else(|| Error::SingularSystem("navem newton jacobian".into()))?;
        last_step = delta.norm();
        z += &delta;
    }
    Err(Error::NewtonDidNotConverge {
        iterations: max_iters,
        history: residuals,
    })
}

/// Broken L2 and H1-seminorm errors, with basis functions evaluated at
/// high-order quadrature points.
pub fn navem_errors(
    mesh: &Mesh,
    dofs: &DVector<f64>,
    problem: &ProblemSpec,
    mode: BasisMode,
    ctx: &SolverContext,
) -> Result<(f64, f64)> {
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
    for pe in prepare_elements(mesh, mode, ctx, ERROR_DEGREE)? {
        let local = DVector::from_fn(pe.idx.len(), |li, _| dofs[pe.idx[li]]);
        let u_q = &pe.bundle.values * &local;
        let gx_q = &pe.bundle.grad_x * &local;
        let gy_q = &pe.bundle.grad_y * &local;
        for (k, (&w, p)) in pe.weights.iter().zip(&pe.points).enumerate() {
            let du = exact(*p) - u_q[k];
            err0 += w * du * du;
            err1 += w * (exact_grad(*p) - Vector2::new(gx_q[k], gy_q[k])).norm_squared();
        }
    }
    Ok((err0.sqrt(), err1.sqrt()))
}

/// L2 norm of the trace mismatch across one interior edge (or sub-edge).
pub struct EdgeJump {
    pub elements: (usize, usize),
    pub l2: f64,
}

pub struct JumpReport {
    pub edges: Vec<EdgeJump>,
    /// sqrt of the summed squared jumps.
    pub aggregate: f64,
}

/// Trace of the discrete solution of `element` along a segment.
fn trace_on_segment(
    basis: &ElementBasis,
    mesh: &Mesh,
    element: usize,
    dofs: &DVector<f64>,
    points: &[Point2],
) -> Result<Vec<f64>> {
    let bundle = basis.bundle(points)?;
    let local = DVector::from_fn(mesh.element(element).len(), |li, _| {
        dofs[mesh.element(element)[li]]
    });
    Ok((bundle.values * local).iter().copied().collect())
}

/// Discontinuity diagnostic: for every interior edge, the L2 norm of the
/// difference between the two adjacent elements' traces. Edges split by a
/// hanging node on one side are matched to the containing edge on the other
/// side and integrated over the sub-edge extent.
pub fn interface_jump(
    mesh: &Mesh,
    dofs: &DVector<f64>,
    mode: BasisMode,
    ctx: &SolverContext,
) -> Result<JumpReport> {
    // Edge registry: undirected vertex-index pair -> (element, endpoints).
    struct Side {
        element: usize,
        a: Point2,
        b: Point2,
    }
    let mut by_key: HashMap<(usize, usize), Vec<Side>> = HashMap::new();
    for e in 0..mesh.n_elements() {
        let idx = mesh.element(e);
        for k in 0..idx.len() {
            let (va, vb) = (idx[k], idx[(k + 1) % idx.len()]);
            let key = (va.min(vb), va.max(vb));
            by_key.entry(key).or_default().push(Side {
                element: e,
                a: mesh.vertex(va),
                b: mesh.vertex(vb),
            });
        }
    }
    let mut pairs: Vec<(usize, usize, Point2, Point2)> = Vec::new();
    let mut leftovers: Vec<Side> = Vec::new();
    for (_, mut sides) in by_key {
        match sides.len() {
            1 => leftovers.push(sides.pop().unwrap()),
            2 => {
                let s1 = sides.pop().unwrap();
                let s0 = sides.pop().unwrap();
                pairs.push((s0.element, s1.element, s0.a, s0.b));
            }
            n => {
                return Err(Error::InvalidMesh(format!(
                    "edge shared by {n} elements"
                )))
            }
        }
    }
    // Sub-edges created by hanging nodes: pair each leftover with a longer
    // leftover of another element that geometrically contains it.
    let contains = |long: &Side, p: Point2| -> bool {
        let d = long.b - long.a;
        let len2 = d.norm_squared();
        let t = (p - long.a).dot(&d) / len2;
        if !(-1e-9..=1.0 + 1e-9).contains(&t) {
            return false;
        }
        let proj = long.a + d * t;
        (p - proj).norm() < 1e-9 * len2.sqrt()
    };
    for s in &leftovers {
        let s_len = (s.b - s.a).norm();
        for l in &leftovers {
            if l.element == s.element || (l.b - l.a).norm() <= s_len * (1.0 + 1e-9) {
                continue;
            }
            if contains(l, s.a) && contains(l, s.b) {
                pairs.push((s.element, l.element, s.a, s.b));
                break;
            }
        }
    }
    // Remaining unpaired edges lie on the domain boundary.

    let mut bases: Vec<Option<ElementBasis>> = (0..mesh.n_elements()).map(|_| None).collect();
    let mut need = vec![false; mesh.n_elements()];
    for &(e1, e2, _, _) in &pairs {
        need[e1] = true;
        need[e2] = true;
    }
    for e in 0..mesh.n_elements() {
        if need[e] {
            bases[e] = Some(element_basis(&mesh.element_polygon(e), mode, ctx)?);
        }
    }

    let (gl_nodes, gl_weights) = gauss_legendre(4);
    let mut edges = Vec::with_capacity(pairs.len());
    let mut total = 0.0f64;
    for (e1, e2, a, b) in pairs {
        let half = (b - a) * 0.5;
        let mid = a + half;
        let points: Vec<Point2> = gl_nodes.iter().map(|&t| mid + half * t).collect();
        let t1 = trace_on_segment(bases[e1].as_ref().unwrap(), mesh, e1, dofs, &points)?;
        let t2 = trace_on_segment(bases[e2].as_ref().unwrap(), mesh, e2, dofs, &points)?;
        let scale = half.norm();
        let l2sq: f64 = gl_weights
            .iter()
            .zip(t1.iter().zip(&t2))
            .map(|(&w, (&u1, &u2))| w * (u1 - u2) * (u1 - u2) * scale)
            .sum();
        total += l2sq;
        edges.push(EdgeJump {
            elements: (e1, e2),
            l2: l2sq.sqrt(),
        });
    }
    Ok(JumpReport {
        edges,
        aggregate: total.sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::families::{htm, rdqm, HtmParams, RdqmParams};
    use crate::geometry::Polygon;
    use crate::problems::{test1, test3};
    use nalgebra::Matrix2;
    use std::sync::Arc;

    fn ctx() -> SolverContext {
        SolverContext::with_defaults().unwrap()
    }

    fn laplace() -> ProblemSpec {
        ProblemSpec {
            diffusion: Arc::new(|_| Matrix2::identity()),
            advection: Arc::new(|_| Vector2::zeros()),
            reaction: Arc::new(|_| 0.0),
            forcing: Arc::new(|_| 0.0),
            dirichlet: Arc::new(|p| 1.0 - 2.0 * p.x + 4.0 * p.y),
            exact: Some(Arc::new(|p| 1.0 - 2.0 * p.x + 4.0 * p.y)),
            exact_gradient: Some(Arc::new(|_| Vector2::new(-2.0, 4.0))),
            nonlinear: None,
        }
    }

    /// Unit square split into 2 n^2 right triangles.
    fn triangle_mesh(n: usize) -> Mesh {
        let m = n + 1;
        let mut vertices = Vec::with_capacity(m * m);
        let mut boundary = Vec::with_capacity(m * m);
        for j in 0..m {
            for i in 0..m {
                vertices.push(Point2::new(i as f64 / n as f64, j as f64 / n as f64));
                boundary.push(i == 0 || j == 0 || i == n || j == n);
            }
        }
        let mut elements = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                let v00 = j * m + i;
                let v10 = v00 + 1;
                let v01 = v00 + m;
                let v11 = v01 + 1;
                elements.push(vec![v00, v10, v11]);
                elements.push(vec![v00, v11, v01]);
            }
        }
        let hanging = vec![false; m * m];
        Mesh::new(vertices, elements, boundary, hanging).unwrap()
    }

    /// Independent P1 stiffness: A_ij = area grad(l_i) . grad(l_j) with
    /// gradients from the rotated opposite edges.
    fn fem_stiffness(t: &Polygon) -> DMatrix<f64> {
        let area = t.area();
        let grads: Vec<Vector2<f64>> = (0..3)
            .map(|i| {
                let a = t.vertex((i + 1) % 3);
                let b = t.vertex((i + 2) % 3);
                Vector2::new(a.y - b.y, b.x - a.x) / (2.0 * area)
            })
            .collect();
        DMatrix::from_fn(3, 3, |i, j| area * grads[i].dot(&grads[j]))
    }

    #[test]
    fn oracle_triangle_assembly_matches_p1_fem() {
        let mesh = triangle_mesh(3);
        let context = ctx();
        let problem = laplace();
        let nv = mesh.n_vertices();
        let mut k: DMatrix<f64> = DMatrix::zeros(nv, nv);
        let mut k_fem: DMatrix<f64> = DMatrix::zeros(nv, nv);
        for pe in prepare_elements(&mesh, BasisMode::Oracle, &context, ASSEMBLY_DEGREE).unwrap() {
            let (a, lr) = local_navem_matrices(&pe.bundle, &pe.points, &pe.weights, &problem);
            assert_eq!(lr.amax(), 0.0, "zero forcing must give a zero load");
            for (li, &gi) in pe.idx.iter().enumerate() {
                for (lj, &gj) in pe.idx.iter().enumerate() {
                    k[(gi, gj)] += a[(li, lj)];
                }
            }
        }
        for e in 0..mesh.n_elements() {
            let a = fem_stiffness(&mesh.element_polygon(e));
            let idx = mesh.element(e);
            for (li, &gi) in idx.iter().enumerate() {
                for (lj, &gj) in idx.iter().enumerate() {
                    k_fem[(gi, gj)] += a[(li, lj)];
                }
            }
        }
        assert!(
            (&k - &k_fem).amax() < 1e-10,
            "stiffness deviates from FEM by {:.2e}",
            (&k - &k_fem).amax()
        );
    }

    #[test]
    fn linear_solutions_are_nodally_exact_on_triangles() {
        let mesh = triangle_mesh(3);
        let problem = laplace();
        let u = solve_navem(&mesh, &problem, BasisMode::Oracle, &ctx()).unwrap();
        for i in 0..mesh.n_vertices() {
            let p = mesh.vertex(i);
            assert!((u[i] - (1.0 - 2.0 * p.x + 4.0 * p.y)).abs() < 1e-9);
        }
        let (e0, e1) = navem_errors(&mesh, &u, &problem, BasisMode::Oracle, &ctx()).unwrap();
        assert!(e0 < 1e-9 && e1 < 1e-9, "errors {e0:.2e} {e1:.2e}");
    }

    #[test]
    fn oracle_patch_test_on_quads_is_bounded_by_the_fit_residual() {
        let mesh = rdqm(
            RdqmParams {
                n: 3,
                distortion: 0.2,
            },
            7,
        )
        .unwrap();
        let context = ctx();
        let problem = laplace();
        let u = solve_navem(&mesh, &problem, BasisMode::Oracle, &context).unwrap();
        for i in 0..mesh.n_vertices() {
            let p = mesh.vertex(i);
            let want = 1.0 - 2.0 * p.x + 4.0 * p.y;
            assert!(
                (u[i] - want).abs() < 1e-3,
                "vertex {i}: {:.3e}",
                (u[i] - want).abs()
            );
        }
    }

    #[test]
    fn oracle_laplace_rows_sum_to_near_zero() {
        // Partition of unity holds to the boundary fit quality, so constants
        // are in the kernel up to that accuracy.
        let mesh = rdqm(
            RdqmParams {
                n: 3,
                distortion: 0.15,
            },
            13,
        )
        .unwrap();
        let context = ctx();
        let problem = laplace();
        let nv = mesh.n_vertices();
        let mut k: DMatrix<f64> = DMatrix::zeros(nv, nv);
        for pe in prepare_elements(&mesh, BasisMode::Oracle, &context, ASSEMBLY_DEGREE).unwrap() {
            let (a, _) = local_navem_matrices(&pe.bundle, &pe.points, &pe.weights, &problem);
            for (li, &gi) in pe.idx.iter().enumerate() {
                for (lj, &gj) in pe.idx.iter().enumerate() {
                    k[(gi, gj)] += a[(li, lj)];
                }
            }
        }
        let ones = DVector::from_element(nv, 1.0);
        assert!(
            (&k * &ones).amax() < 1e-4 * k.amax(),
            "row sums {:.2e}",
            (&k * &ones).amax()
        );
    }

    #[test]
    fn local_matrix_of_test1_at_the_origin_is_laplacian() {
        // Test 1's tensor evaluates to the identity at (0, 0); on a tiny
        // element there the local matrix must match the pure Laplacian.
        let t = Polygon::new(vec![
            Point2::new(0.0, 0.0),
            Point2::new(1e-3, 0.0),
            Point2::new(0.0, 1e-3),
        ])
        .unwrap();
        let context = ctx();
        let basis = element_basis(&t, BasisMode::Oracle, &context).unwrap();
        let quad = interior_quadrature(&t, ASSEMBLY_DEGREE).unwrap();
        let bundle = basis.bundle(&quad.points).unwrap();
        let (a1, _) = local_navem_matrices(&bundle, &quad.points, &quad.weights, &test1());
        let (a2, _) = local_navem_matrices(&bundle, &quad.points, &quad.weights, &laplace());
        assert!((&a1 - &a2).amax() < 1e-4 * a2.amax());
    }

    #[test]
    fn oracle_convergence_on_quads() {
        let context = ctx();
        let problem = test1();
        let mut data = Vec::new();
        for n in [4, 8] {
            let mesh = rdqm(RdqmParams { n, distortion: 0.2 }, 11).unwrap();
            let u = solve_navem(&mesh, &problem, BasisMode::Oracle, &context).unwrap();
            let (e0, e1) = navem_errors(&mesh, &u, &problem, BasisMode::Oracle, &context).unwrap();
            data.push((mesh.h(), e0, e1));
        }
        let rate0 = (data[0].1 / data[1].1).ln() / (data[0].0 / data[1].0).ln();
        let rate1 = (data[0].2 / data[1].2).ln() / (data[0].0 / data[1].0).ln();
        assert!(rate0 > 1.5, "l2 rate {rate0:.2}, data {data:?}");
        assert!(rate1 > 0.7, "h1 rate {rate1:.2}, data {data:?}");
    }

    #[test]
    fn newton_on_the_quasilinear_problem_converges_fast() {
        let mesh = rdqm(RdqmParams { n: 6, distortion: 0.1 }, 3).unwrap();
        let problem = test3(1.0);
        let sol = solve_navem_newton(&mesh, &problem, BasisMode::Oracle, &ctx(), 20).unwrap();
        assert!(sol.iterations <= 20);
        let (e0, _) = navem_errors(&mesh, &sol.dofs, &problem, BasisMode::Oracle, &ctx()).unwrap();
        assert!(e0 < 0.05, "l2 error {e0:.3e}");
    }

    #[test]
    fn jumps_vanish_on_conforming_triangles() {
        let mesh = triangle_mesh(2);
        let problem = laplace();
        let context = ctx();
        let u = solve_navem(&mesh, &problem, BasisMode::Oracle, &context).unwrap();
        let report = interface_jump(&mesh, &u, BasisMode::Oracle, &context).unwrap();
        // 2x2 grid: 4 diagonals plus 4 shared cell borders.
        assert_eq!(report.edges.len(), 8);
        assert!(report.aggregate < 1e-12, "aggregate {:.2e}", report.aggregate);
    }

    #[test]
    fn jumps_on_quads_sit_at_the_fit_residual_scale() {
        let mesh = rdqm(
            RdqmParams {
                n: 3,
                distortion: 0.2,
            },
            7,
        )
        .unwrap();
        let context = ctx();
        let problem = laplace();
        let u = solve_navem(&mesh, &problem, BasisMode::Oracle, &context).unwrap();
        let report = interface_jump(&mesh, &u, BasisMode::Oracle, &context).unwrap();
        assert!(!report.edges.is_empty());
        assert!(
            report.aggregate > 0.0 && report.aggregate < 1e-3,
            "aggregate {:.2e}",
            report.aggregate
        );
    }

    #[test]
    fn single_element_meshes_have_no_interior_edges() {
        let mesh = Mesh::new(
            vec![
                Point2::new(0.0, 0.0),
                Point2::new(1.0, 0.0),
                Point2::new(1.0, 1.0),
                Point2::new(0.0, 1.0),
            ],
            vec![vec![0, 1, 2, 3]],
            vec![true; 4],
            vec![false; 4],
        )
        .unwrap();
        let report =
            interface_jump(&mesh, &DVector::zeros(4), BasisMode::Oracle, &ctx()).unwrap();
        assert!(report.edges.is_empty());
        assert_eq!(report.aggregate, 0.0);
    }

    #[test]
    fn hanging_node_meshes_solve_and_report_jumps() {
        let mesh = htm(
            HtmParams {
                n: 4,
                edge_probability: 0.5,
                max_hanging: 3,
            },
            19,
        )
        .unwrap();
        let context = ctx();
        let problem = laplace();
        let u = solve_navem(&mesh, &problem, BasisMode::Oracle, &context).unwrap();
        // Multi-hanging hats have gradient singularities at their trace
        // kinks that no smooth fit can follow, so the consistency floor
        // here sits well above the plain value-fit residual.
        for i in 0..mesh.n_vertices() {
            let p = mesh.vertex(i);
            let want = 1.0 - 2.0 * p.x + 4.0 * p.y;
            assert!(
                (u[i] - want).abs() < 5e-3,
                "vertex {i} error {:.3e}",
                (u[i] - want).abs()
            );
        }
        let report = interface_jump(&mesh, &u, BasisMode::Oracle, &context).unwrap();
        assert!(!report.edges.is_empty());
        assert!(report.aggregate < 1e-3, "aggregate {:.2e}", report.aggregate);
    }
}
