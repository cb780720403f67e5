//! Harmonic approximation spaces: scaled harmonic polynomials orthonormalized
//! over a reference square, plus three pole-based vertex functions per
//! element (see [`phi`] and [`space`]).

pub mod phi;
pub mod space;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::geometry::Point2;
use crate::{Error, Result};

/// Polynomial degree of the shared harmonic basis.
pub const DEFAULT_ELL: usize = 20;
/// Half-width of the reference square the basis is orthonormalized on.
pub const DEFAULT_H_REF: f64 = 3.0;
/// Lattice resolution (per axis) for the discrete inner product.
pub const DEFAULT_LATTICE: usize = 50;

/// Values and gradients of the scaled harmonic polynomials
/// {1, Re((z/h)^l), Im((z/h)^l)} for l = 1..=ell, one row per point,
/// computed by the complex power recurrence. Column order: constant, then
/// (Re, Im) pairs of increasing degree.
pub fn eval_scaled_harmonics(
    ell: usize,
    h_ref: f64,
    points: &[Point2],
) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    assert!(h_ref > 0.0);
    let m = 2 * ell + 1;
    let mut v = DMatrix::zeros(points.len(), m);
    let mut vx = DMatrix::zeros(points.len(), m);
    let mut vy = DMatrix::zeros(points.len(), m);
    for (row, p) in points.iter().enumerate() {
        let zh = Complex64::new(p.x / h_ref, p.y / h_ref);
        v[(row, 0)] = 1.0;
        // w holds (z/h)^(l-1); the Cauchy-Riemann relations turn it into the
        // gradient of degree l.
        let mut w = Complex64::new(1.0, 0.0);
        for l in 1..=ell {
            let wl = w * zh;
            let s = l as f64 / h_ref;
            v[(row, 2 * l - 1)] = wl.re;
            v[(row, 2 * l)] = wl.im;
            vx[(row, 2 * l - 1)] = s * w.re;
            vy[(row, 2 * l - 1)] = -s * w.im;
            vx[(row, 2 * l)] = s * w.im;
            vy[(row, 2 * l)] = s * w.re;
            w = wl;
        }
    }
    (v, vx, vy)
}

/// Harmonic polynomial basis orthonormalized over a lattice on the square
/// [-h_ref, h_ref]², with the lattice mean as inner product.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthonormalHarmonicBasis {
    pub ell: usize,
    pub h_ref: f64,
    /// Upper-triangular change of basis: orthonormal values are the scaled
    /// monomial harmonic values times `r` (and likewise for gradients).
    pub r: DMatrix<f64>,
}

impl OrthonormalHarmonicBasis {
    pub fn dim(&self) -> usize {
        2 * self.ell + 1
    }

    pub fn eval(&self, points: &[Point2]) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        let (v, vx, vy) = eval_scaled_harmonics(self.ell, self.h_ref, points);
        (v * &self.r, vx * &self.r, vy * &self.r)
    }
}

/// Double modified Gram-Schmidt on the lattice Vandermonde matrix. The
/// second pass repairs the orthogonality loss of the first, giving a lattice
/// Gram matrix within 1e-10 of the identity.
pub fn orthonormalize_basis(
    ell: usize,
    h_ref: f64,
    lattice_n: usize,
) -> Result<OrthonormalHarmonicBasis> {
    let m = 2 * ell + 1;
    if lattice_n * lattice_n < m {
        return Err(Error::RankDeficient(format!(
            "lattice {lattice_n}x{lattice_n} cannot resolve {m} functions"
        )));
    }
    let points = square_lattice(h_ref, lattice_n);
    let (mut a, _, _) = eval_scaled_harmonics(ell, h_ref, &points);
    let inv_n = 1.0 / points.len() as f64;
    let r1 = mgs(&mut a, inv_n)?;
    let r2 = mgs(&mut a, inv_n)?;
    let rt = r2 * r1;
    let r = rt
        .solve_upper_triangular(&DMatrix::identity(m, m))
        .ok_or_else(|| Error::RankDeficient("triangular factor not invertible".into()))?;
    Ok(OrthonormalHarmonicBasis { ell, h_ref, r })
}

pub fn square_lattice(h_ref: f64, n: usize) -> Vec<Point2> {
    assert!(n >= 2);
    let coord = |i: usize| -h_ref + 2.0 * h_ref * i as f64 / (n - 1) as f64;
    (0..n)
        .flat_map(|j| (0..n).map(move |i| Point2::new(coord(i), coord(j))))
        .collect()
}

/// One modified Gram-Schmidt sweep under the mean inner product; `a` is
/// replaced by the orthonormal factor and the triangular factor is returned.
fn mgs(a: &mut DMatrix<f64>, inv_n: f64) -> Result<DMatrix<f64>> {
    let m = a.ncols();
    let mut r = DMatrix::zeros(m, m);
    for j in 0..m {
        for i in 0..j {
            let rij = a.column(i).dot(&a.column(j)) * inv_n;
            r[(i, j)] = rij;
            let qi = a.column(i).into_owned();
            a.column_mut(j).axpy(-rij, &qi, 1.0);
        }
        let norm = (a.column(j).norm_squared() * inv_n).sqrt();
        if norm < 1e-13 {
            return Err(Error::RankDeficient(format!(
                "column {j} vanishes under orthogonalization"
            )));
        }
        r[(j, j)] = norm;
        a.column_mut(j).scale_mut(1.0 / norm);
    }
    Ok(r)
}

/// Least squares min ‖A x − b‖₂ via thin QR on the column-equilibrated
/// matrix; a numerically rank-deficient triangular factor falls back to the
/// ridge-regularized (1e-12) normal equations. Returns the solution and
/// whether the fallback fired.
pub(crate) fn equilibrated_lsq(mut a: DMatrix<f64>, b: &DVector<f64>) -> (DVector<f64>, bool) {
    let n = a.ncols();
    let mut scale = vec![1.0; n];
    for j in 0..n {
        let s = a.column(j).norm();
        if s > 0.0 {
            scale[j] = s;
            a.column_mut(j).scale_mut(1.0 / s);
        }
    }
    let qr = a.clone().qr();
    let r = qr.r();
    let dmax = (0..n).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    let direct = if (0..n).all(|i| r[(i, i)].abs() > 1e-13 * dmax) {
        let qtb = qr.q().transpose() * b;
        r.solve_upper_triangular(&qtb)
    } else {
        None
    };
    let (mut x, ridged) = match direct {
        Some(x) => (x, false),
        None => {
            let mut ata = a.transpose() * &a;
            for i in 0..n {
                ata[(i, i)] += 1e-12;
            }
            let atb = a.transpose() * b;
            let x = ata
                .lu()
                .solve(&atb)
                .expect("ridge-regularized system is positive definite");
            (x, true)
        }
    };
    for j in 0..n {
        x[j] /= scale[j];
    }
    (x, ridged)
}

/// 5-point finite-difference Laplacian, the harmonicity oracle used in tests.
pub fn fd_laplacian(f: impl Fn(Point2) -> f64, p: Point2, step: f64) -> f64 {
    let e1 = nalgebra::Vector2::new(step, 0.0);
    let e2 = nalgebra::Vector2::new(0.0, step);
    (f(p + e1) + f(p - e1) + f(p + e2) + f(p - e2) - 4.0 * f(p)) / (step * step)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn harmonics_match_complex_powers() {
        let h = 2.5;
        let p = Point2::new(h, h);
        let (v, _, _) = eval_scaled_harmonics(3, h, &[p]);
        assert_eq!(v.ncols(), 7);
        assert!((v[(0, 1)] - 1.0).abs() < 1e-15);
        assert!((v[(0, 2)] - 1.0).abs() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let p = Point2::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
            let (v, _, _) = eval_scaled_harmonics(6, h, &[p]);
            let z = Complex64::new(p.x / h, p.y / h);
            for l in 1..=6u32 {
                let w = z.powu(l);
                assert!((v[(0, 2 * l as usize - 1)] - w.re).abs() < 1e-13);
                assert!((v[(0, 2 * l as usize)] - w.im).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let h = 3.0;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let step = 1e-6 * h;
        for _ in 0..100 {
            let p = Point2::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            let (v0, vx, vy) = eval_scaled_harmonics(8, h, &[p]);
            let shifted = |dx: f64, dy: f64| {
                let (v, _, _) = eval_scaled_harmonics(8, h, &[Point2::new(p.x + dx, p.y + dy)]);
                v
            };
            let (vxp, vxm) = (shifted(step, 0.0), shifted(-step, 0.0));
            let (vyp, vym) = (shifted(0.0, step), shifted(0.0, -step));
            for k in 0..v0.ncols() {
                let fdx = (vxp[(0, k)] - vxm[(0, k)]) / (2.0 * step);
                let fdy = (vyp[(0, k)] - vym[(0, k)]) / (2.0 * step);
                let scale = vx[(0, k)].abs().max(vy[(0, k)].abs()).max(1.0);
                assert!((vx[(0, k)] - fdx).abs() < 1e-7 * scale, "col {k}");
                assert!((vy[(0, k)] - fdy).abs() < 1e-7 * scale, "col {k}");
            }
        }
    }

    #[test]
    fn degree_zero_basis_is_the_constant() {
        let b = orthonormalize_basis(0, 3.0, 4).unwrap();
        assert_eq!(b.dim(), 1);
        assert!((b.r[(0, 0)] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn lattice_gram_is_identity() {
        let b = orthonormalize_basis(DEFAULT_ELL, DEFAULT_H_REF, DEFAULT_LATTICE).unwrap();
        assert_eq!(b.dim(), 41);
        let points = square_lattice(b.h_ref, DEFAULT_LATTICE);
        let (v, _, _) = b.eval(&points);
        let gram = v.transpose() * &v / points.len() as f64;
        let dev = (gram - DMatrix::identity(41, 41)).abs().max();
        assert!(dev < 1e-10, "max |G - I| = {dev:.3e}");
    }

    #[test]
    fn orthonormal_basis_spans_the_harmonics() {
        // Project Re((z/h)^5) on the orthonormal basis with the lattice mean
        // inner product; the reconstruction must be exact to roundoff.
        let b = orthonormalize_basis(10, 3.0, 40).unwrap();
        let points = square_lattice(b.h_ref, 40);
        let (raw, _, _) = eval_scaled_harmonics(10, 3.0, &points);
        let target = raw.column(9).into_owned();
        let (v, _, _) = b.eval(&points);
        let coeffs = v.transpose() * &target / points.len() as f64;
        let residual = (&v * coeffs - target).abs().max();
        assert!(residual < 1e-12, "residual {residual:.3e}");
    }

    #[test]
    fn lattice_must_resolve_the_basis() {
        assert!(matches!(
            orthonormalize_basis(20, 3.0, 6),
            Err(Error::RankDeficient(_))
        ));
    }

    #[test]
    fn lsq_helper_recovers_exact_solutions() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = DMatrix::from_fn(40, 7, |_, _| rng.random_range(-1.0..1.0));
        let x_true = DVector::from_fn(7, |i, _| i as f64 - 3.0);
        let b = &a * &x_true;
        let (x, ridged) = equilibrated_lsq(a, &b);
        assert!(!ridged);
        assert!((x - x_true).abs().max() < 1e-10);
    }

    #[test]
    fn lsq_helper_survives_rank_deficiency() {
        // Two identical columns: QR cannot separate them, the ridge fallback
        // must still reproduce the target.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut a = DMatrix::from_fn(30, 4, |_, _| rng.random_range(-1.0..1.0));
        let c0 = a.column(0).into_owned();
        a.set_column(3, &c0);
        let x_true = DVector::from_vec(vec![1.0, 2.0, -1.0, 1.0]);
        let b = &a * &x_true;
        let (x, ridged) = equilibrated_lsq(a.clone(), &b);
        assert!(ridged);
        assert!((a * x - b).abs().max() < 1e-6);
    }
}
