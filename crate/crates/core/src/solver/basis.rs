//! Per-element basis construction: ENCODE the element, obtain coefficients
//! from a trained network or from a direct least-squares fit, and evaluate
//! values and gradients at arbitrary physical points.
//!
//! Plain triangles and row-6 hanging triangles never touch the
//! approximation space: their basis functions are affine and evaluated in
//! closed form.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, Matrix3, Vector2, Vector3};

use crate::encoding::{config6_basis, config6_gradients, encode, reference_element, EncodedInput, PolygonClass};
use crate::geometry::quadrature::boundary_quadrature;
use crate::geometry::{Point2, Polygon};
use crate::harmonic::phi::PhiFunction;
use crate::harmonic::space::{build_approx_space, lsq_fit, ApproxSpace, LsqTarget};
use crate::harmonic::{orthonormalize_basis, OrthonormalHarmonicBasis};
use crate::network::{evaluate_with_coefficients, PredictorPair};
use crate::training::{target_hat, TRAINING_EDGE_POINTS};
use crate::{Error, Result};

/// Immutable state shared by every element of the online phase.
pub struct SolverContext {
    pub shared: OrthonormalHarmonicBasis,
    pub base_phi: PhiFunction,
}

impl SolverContext {
    /// The production approximation space: harmonic polynomials up to
    /// degree 20 plus the singular member.
    pub fn with_defaults() -> Result<Self> {
        Ok(SolverContext {
            shared: orthonormalize_basis(20, 3.0, 50)?,
            base_phi: PhiFunction::with_defaults()?,
        })
    }
}

/// Trained predictor pairs keyed by class.
#[derive(Default)]
pub struct ModelSet {
    pairs: BTreeMap<PolygonClass, PredictorPair>,
}

impl ModelSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Register a pair, replacing any previous model of the same class.
    pub fn insert(&mut self, pair: PredictorPair) {
        self.pairs.insert(pair.class, pair);
    }

    pub fn get(&self, class: PolygonClass) -> Option<&PredictorPair> {
        self.pairs.get(&class)
    }

    pub fn classes(&self) -> impl Iterator<Item = PolygonClass> + '_ {
        self.pairs.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Where coefficients come from for classes that need the space.
#[derive(Clone, Copy)]
pub enum BasisMode<'m> {
    /// Least-squares fit of the boundary target per element and dof.
    /// Isolates the discretization from training noise.
    Oracle,
    /// Trained networks; every class present in the mesh must be covered.
    Network(&'m ModelSet),
}

/// How the values in a bundle were produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisProvenance {
    /// All dofs affine (plain triangles, row-6 hanging triangles).
    ClosedForm,
    Oracle,
    Network,
}

enum DofBasis<'a> {
    /// a + b . x on the physical element.
    Affine { a: f64, b: Vector2<f64> },
    Fitted {
        space: ApproxSpace<'a>,
        enc: EncodedInput,
        c_phi: DVector<f64>,
        c_q: DVector<f64>,
    },
}

/// All basis functions of one element, evaluable at any interior point.
pub struct ElementBasis<'a> {
    dofs: Vec<DofBasis<'a>>,
    pub provenance: BasisProvenance,
}

/// Basis values and gradients materialized at a fixed point set. Row k is
/// the point, column j the local dof.
pub struct ElementBasisBundle {
    pub provenance: BasisProvenance,
    pub values: DMatrix<f64>,
    pub grad_x: DMatrix<f64>,
    pub grad_y: DMatrix<f64>,
}

impl ElementBasisBundle {
    pub fn n_points(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_dofs(&self) -> usize {
        self.values.ncols()
    }

    pub fn gradient(&self, point: usize, dof: usize) -> Vector2<f64> {
        Vector2::new(self.grad_x[(point, dof)], self.grad_y[(point, dof)])
    }
}

/// Affine hats of a plain triangle by interpolation: row i of the inverse
/// Vandermonde gives hat i.
fn triangle_hats(e: &Polygon) -> Result<Vec<DofBasis<'static>>> {
    let v = Matrix3::from_fn(|i, k| match k {
        0 => 1.0,
        1 => e.vertex(i).x,
        _ => e.vertex(i).y,
    });
    let inv = v
        .try_inverse()
        .ok_or_else(|| Error::DegeneratePolygon("triangle vertices are collinear".into()))?;
    Ok((0..3)
        .map(|i| {
            let col: Vector3<f64> = inv.column(i).into_owned();
            DofBasis::Affine {
                a: col[0],
                b: Vector2::new(col[1], col[2]),
            }
        })
        .collect())
}

/// Fit the piecewise-linear boundary target of vertex `j` in the space:
/// values for the phi coefficients, tangential derivatives with a matched
/// boundary mean for the gradient coefficients.
pub fn hat_fit(
    space: &ApproxSpace,
    fe: &Polygon,
    jf: usize,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let rule = boundary_quadrature(fe, TRAINING_EDGE_POINTS);
    let (trace, tangent) = target_hat(fe, jf, &rule.points)?;
    let fit_v = lsq_fit(space, &rule, LsqTarget::Values(&trace));
    let perimeter: f64 = rule.weights.iter().sum();
    let mean = trace
        .iter()
        .zip(&rule.weights)
        .map(|(t, w)| t * w)
        .sum::<f64>()
        / perimeter;
    let fit_t = lsq_fit(
        space,
        &rule,
        LsqTarget::Tangential {
            derivative: &tangent,
            mean,
        },
    );
    Ok((fit_v.coeffs, fit_t.coeffs))
}

fn fitted_dof<'a>(
    e: &Polygon,
    j: usize,
    class: PolygonClass,
    enc: EncodedInput,
    mode: BasisMode,
    ctx: &'a SolverContext,
) -> Result<(DofBasis<'a>, BasisProvenance)> {
    let (fe, jf) = match class {
        PolygonClass::NvClass(_) => (enc.frame.map_polygon(e)?, j),
        PolygonClass::HangingTriangle(c) => reference_element(c, &enc.x0_coef)?,
        PolygonClass::PlainTriangle => unreachable!("affine path handles plain triangles"),
    };
    let space = build_approx_space(&fe, jf, &ctx.shared, &ctx.base_phi)?;
    let (c_phi, c_q, provenance) = match mode {
        BasisMode::Oracle => {
            let (c_phi, c_q) = hat_fit(&space, &fe, jf)?;
            (c_phi, c_q, BasisProvenance::Oracle)
        }
        BasisMode::Network(models) => {
            let pair = models
                .get(class)
                .ok_or_else(|| Error::MissingModel(class.label()))?;
            let (c_phi, c_q) = pair.coefficients(&enc.x0_coef)?;
            (c_phi, c_q, BasisProvenance::Network)
        }
    };
    Ok((
        DofBasis::Fitted {
            space,
            enc,
            c_phi,
            c_q,
        },
        provenance,
    ))
}

/// Build the basis of every dof of one element.
pub fn element_basis<'a>(
    e: &Polygon,
    mode: BasisMode,
    ctx: &'a SolverContext,
) -> Result<ElementBasis<'a>> {
    let mut dofs = Vec::with_capacity(e.nv());
    let mut provenance = BasisProvenance::ClosedForm;
    if e.nv() == 3 && (0..3).all(|i| !e.is_hanging(i)) {
        dofs = triangle_hats(e)?;
    } else {
        for j in 0..e.nv() {
            let (class, enc) = encode(e, j)?;
            match class {
                PolygonClass::PlainTriangle => unreachable!("handled above"),
                PolygonClass::HangingTriangle(6) => {
                    // The reduced triangle's first reference hat composed
                    // with the frame stays affine.
                    let a_hat = config6_basis(Point2::origin())[0];
                    let b_hat = config6_gradients()[0];
                    let b = enc.frame.linear.transpose() * b_hat;
                    let a = a_hat + b_hat.dot(&enc.frame.shift);
                    dofs.push(DofBasis::Affine { a, b });
                }
                _ => {
                    let (dof, p) = fitted_dof(e, j, class, enc, mode, ctx)?;
                    if provenance == BasisProvenance::ClosedForm {
                        provenance = p;
                    }
                    dofs.push(dof);
                }
            }
        }
    }
    Ok(ElementBasis { dofs, provenance })
}

impl ElementBasis<'_> {
    pub fn n_dofs(&self) -> usize {
        self.dofs.len()
    }

    /// Materialize values and gradients at the given physical points.
    pub fn bundle(&self, points: &[Point2]) -> Result<ElementBasisBundle> {
        let np = points.len();
        let nd = self.dofs.len();
        let mut values: DMatrix<f64> = DMatrix::zeros(np, nd);
        let mut grad_x: DMatrix<f64> = DMatrix::zeros(np, nd);
        let mut grad_y: DMatrix<f64> = DMatrix::zeros(np, nd);
        for (j, dof) in self.dofs.iter().enumerate() {
            match dof {
                DofBasis::Affine { a, b } => {
                    for (k, p) in points.iter().enumerate() {
                        values[(k, j)] = a + b.x * p.x + b.y * p.y;
                        grad_x[(k, j)] = b.x;
                        grad_y[(k, j)] = b.y;
                    }
                }
                DofBasis::Fitted {
                    space,
                    enc,
                    c_phi,
                    c_q,
                } => {
                    let (vals, grads) = evaluate_with_coefficients(space, c_phi, c_q, enc, points)?;
                    for k in 0..np {
                        values[(k, j)] = vals[k];
                        grad_x[(k, j)] = grads[k].x;
                        grad_y[(k, j)] = grads[k].y;
                    }
                }
            }
        }
        if values.iter().any(|v| !v.is_finite())
            || grad_x.iter().any(|v| !v.is_finite())
            || grad_y.iter().any(|v| !v.is_finite())
        {
            return Err(Error::Mismatch("non-finite basis evaluation".into()));
        }
        Ok(ElementBasisBundle {
            provenance: self.provenance,
            values,
            grad_x,
            grad_y,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::families::convex_hull_quad;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ctx() -> SolverContext {
        SolverContext::with_defaults().unwrap()
    }

    #[test]
    fn triangle_hats_are_exact_partitions_of_unity() {
        let e = Polygon::new(vec![
            Point2::new(0.1, 0.2),
            Point2::new(0.9, 0.3),
            Point2::new(0.4, 1.1),
        ])
        .unwrap();
        let context = ctx();
        let basis = element_basis(&e, BasisMode::Oracle, &context).unwrap();
        assert_eq!(basis.provenance, BasisProvenance::ClosedForm);
        let pts = vec![e.centroid(), Point2::new(0.5, 0.5), e.vertex(2)];
        let bundle = basis.bundle(&pts).unwrap();
        for k in 0..pts.len() {
            let row_sum: f64 = (0..3).map(|j| bundle.values[(k, j)]).sum();
            assert!((row_sum - 1.0).abs() < 1e-14);
            let gsum: Vector2<f64> = (0..3).map(|j| bundle.gradient(k, j)).sum();
            assert!(gsum.norm() < 1e-14);
        }
        // Nodal values at a vertex.
        assert!((bundle.values[(2, 2)] - 1.0).abs() < 1e-14);
        assert!(bundle.values[(2, 0)].abs() < 1e-14);
    }

    #[test]
    fn oracle_quad_basis_is_a_near_partition_of_unity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let context = ctx();
        let pts: Vec<Point2> = (0..8)
            .map(|_| {
                Point2::new(
                    rng.random::<f64>() * 0.2 - 0.1,
                    rng.random::<f64>() * 0.2 - 0.1,
                )
            })
            .collect();
        for _ in 0..3 {
            let draw: Vec<Point2> = (0..4)
                .map(|_| {
                    let r = rng.random::<f64>().sqrt();
                    let t = std::f64::consts::TAU * rng.random::<f64>();
                    Point2::new(r * t.cos(), r * t.sin())
                })
                .collect();
            let e = match convex_hull_quad(&draw) {
                Some(q) => q,
                None => continue,
            };
            let inside: Vec<Point2> = pts
                .iter()
                .map(|p| e.centroid() + (p - Point2::origin()) * 0.3)
                .collect();
            let basis = element_basis(&e, BasisMode::Oracle, &context).unwrap();
            assert_eq!(basis.provenance, BasisProvenance::Oracle);
            let bundle = basis.bundle(&inside).unwrap();
            for k in 0..inside.len() {
                let s: f64 = (0..4).map(|j| bundle.values[(k, j)]).sum();
                assert!((s - 1.0).abs() < 1e-5, "partition of unity off: {s}");
                let g: Vector2<f64> = (0..4).map(|j| bundle.gradient(k, j)).sum();
                assert!(g.norm() < 1e-3, "gradient sum {:.2e}", g.norm());
            }
        }
    }

    #[test]
    fn missing_model_names_the_class() {
        let e = Polygon::new(vec![
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(1.1, 0.9),
            Point2::new(-0.1, 1.0),
        ])
        .unwrap();
        let models = ModelSet::new();
        let context = ctx();
        match element_basis(&e, BasisMode::Network(&models), &context) {
            Err(Error::MissingModel(label)) => assert_eq!(label, "N4"),
            Err(other) => panic!("unexpected error {other:?}"),
            Ok(_) => panic!("expected a missing model error"),
        }
    }
}
