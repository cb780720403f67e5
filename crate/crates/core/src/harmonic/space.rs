//! The per-element approximation space: the shared orthonormal harmonic
//! polynomials plus three Φ members mapped to the vertices j-1, j, j+1, and
//! least-squares fitting of boundary traces into that space (the oracle that
//! the networks are trained to imitate).

use nalgebra::{DMatrix, DVector};

use super::phi::{map_phi_to_vertex, MappedPhi, PhiFunction};
use super::{equilibrated_lsq, OrthonormalHarmonicBasis};
use crate::geometry::quadrature::BoundaryQuadrature;
use crate::geometry::{Point2, Polygon};
use crate::Result;

#[derive(Debug, Clone)]
pub struct ApproxSpace<'a> {
    pub shared: &'a OrthonormalHarmonicBasis,
    pub base_phi: &'a PhiFunction,
    /// Φ members attached to vertices j-1, j, j+1 (in that column order).
    pub phis: [MappedPhi; 3],
}

pub fn build_approx_space<'a>(
    e: &Polygon,
    j: usize,
    shared: &'a OrthonormalHarmonicBasis,
    base_phi: &'a PhiFunction,
) -> Result<ApproxSpace<'a>> {
    let phis = [
        map_phi_to_vertex(e, e.prev_idx(j))?,
        map_phi_to_vertex(e, j)?,
        map_phi_to_vertex(e, e.next_idx(j))?,
    ];
    Ok(ApproxSpace {
        shared,
        base_phi,
        phis,
    })
}

impl ApproxSpace<'_> {
    pub fn dim(&self) -> usize {
        self.shared.dim() + 3
    }
}

/// Values and partial derivatives of every member at every point, one row
/// per point, one column per member.
#[derive(Debug, Clone)]
pub struct VandermondeBlock {
    pub v: DMatrix<f64>,
    pub v_x1: DMatrix<f64>,
    pub v_x2: DMatrix<f64>,
}

pub fn vandermonde(space: &ApproxSpace, points: &[Point2]) -> VandermondeBlock {
    let n = points.len();
    let dim = space.dim();
    let poly = space.shared.dim();
    let (pv, px, py) = space.shared.eval(points);
    let mut v = DMatrix::zeros(n, dim);
    let mut v_x1 = DMatrix::zeros(n, dim);
    let mut v_x2 = DMatrix::zeros(n, dim);
    v.view_mut((0, 0), (n, poly)).copy_from(&pv);
    v_x1.view_mut((0, 0), (n, poly)).copy_from(&px);
    v_x2.view_mut((0, 0), (n, poly)).copy_from(&py);
    for (k, phi) in space.phis.iter().enumerate() {
        for (row, &p) in points.iter().enumerate() {
            let (value, grad) = phi.eval(space.base_phi, p);
            v[(row, poly + k)] = value;
            v_x1[(row, poly + k)] = grad.x;
            v_x2[(row, poly + k)] = grad.y;
        }
    }
    VandermondeBlock { v, v_x1, v_x2 }
}

/// What a boundary fit matches: plain trace values, or tangential
/// derivatives plus the trace mean (which pins the constant member that the
/// tangential data cannot see).
#[derive(Debug, Clone, Copy)]
pub enum LsqTarget<'t> {
    Values(&'t [f64]),
    Tangential { derivative: &'t [f64], mean: f64 },
}

#[derive(Debug, Clone)]
pub struct LsqFit {
    pub coeffs: DVector<f64>,
    /// Weighted RMS residual of the fitted quantity over the boundary rule.
    pub residual: f64,
    pub max_residual: f64,
    /// Whether the rank-deficiency fallback fired.
    pub ridged: bool,
}

pub fn lsq_fit(space: &ApproxSpace, rule: &BoundaryQuadrature, target: LsqTarget) -> LsqFit {
    let block = vandermonde(space, &rule.points);
    let n = rule.points.len();
    let dim = space.dim();
    let perimeter: f64 = rule.weights.iter().sum();
    let sqrt_w: Vec<f64> = rule.weights.iter().map(|w| w.sqrt()).collect();

    let weighted = |m: &DMatrix<f64>, rhs: &[f64]| -> (DMatrix<f64>, DVector<f64>) {
        let mut a = m.clone();
        let mut b = DVector::zeros(n);
        for q in 0..n {
            for k in 0..m.ncols() {
                a[(q, k)] *= sqrt_w[q];
            }
            b[q] = rhs[q] * sqrt_w[q];
        }
        (a, b)
    };

    match target {
        LsqTarget::Values(values) => {
            assert_eq!(values.len(), n);
            let (a, b) = weighted(&block.v, values);
            let (coeffs, ridged) = equilibrated_lsq(a, &b);
            let (residual, max_residual) = residuals(&block.v, &coeffs, values, rule, perimeter);
            LsqFit {
                coeffs,
                residual,
                max_residual,
                ridged,
            }
        }
        LsqTarget::Tangential { derivative, mean } => {
            assert_eq!(derivative.len(), n);
            let mut vt = DMatrix::zeros(n, dim);
            for q in 0..n {
                let t = rule.tangents[q];
                for k in 0..dim {
                    vt[(q, k)] = t.x * block.v_x1[(q, k)] + t.y * block.v_x2[(q, k)];
                }
            }
            // The constant member has no tangential signature: fit without
            // it, then set it so the fitted trace mean matches the target.
            let reduced = vt.columns(1, dim - 1).into_owned();
            let (a, b) = weighted(&reduced, derivative);
            let (c_rest, ridged) = equilibrated_lsq(a, &b);
            let mut coeffs = DVector::zeros(dim);
            coeffs.rows_mut(1, dim - 1).copy_from(&c_rest);
            let trace = &block.v * &coeffs;
            let fitted_mean: f64 = trace
                .iter()
                .zip(&rule.weights)
                .map(|(&t, &w)| t * w)
                .sum::<f64>()
                / perimeter;
            let constant_value = space.shared.r[(0, 0)];
            coeffs[0] = (mean - fitted_mean) / constant_value;
            let (residual, max_residual) = residuals(&vt, &coeffs, derivative, rule, perimeter);
            LsqFit {
                coeffs,
                residual,
                max_residual,
                ridged,
            }
        }
    }
}

fn residuals(
    m: &DMatrix<f64>,
    coeffs: &DVector<f64>,
    target: &[f64],
    rule: &BoundaryQuadrature,
    perimeter: f64,
) -> (f64, f64) {
    let fit = m * coeffs;
    let mut sq = 0.0;
    let mut max = 0.0f64;
    for q in 0..target.len() {
        let r = fit[q] - target[q];
        sq += rule.weights[q] * r * r;
        max = max.max(r.abs());
    }
    ((sq / perimeter).sqrt(), max)
}
