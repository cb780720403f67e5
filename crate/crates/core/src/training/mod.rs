//! Offline phase: hat-function targets, per-class datasets, losses and the
//! two-stage optimization (Adam warmup, then limited-memory BFGS).

pub mod dataset;
pub mod loss;
pub mod optim;

pub use dataset::{
    build_htm_datasets, build_rdqm_dataset, build_vm_datasets, reference_placement,
    sample_on_frame_element, TRAINING_EDGE_POINTS,
};
pub use loss::{
    loss_l0, loss_l1, oracle_coefficients, tangent_loss_with_coefficients,
    trace_loss_with_coefficients,
};
pub use optim::{adam, lbfgs, AdamConfig, LbfgsConfig};

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::encoding::PolygonClass;
use crate::geometry::quadrature::BoundaryQuadrature;
use crate::geometry::{Point2, Polygon};
use crate::network::Mlp;
use crate::{Error, Result};

/// One supervised pair: an encoded element with the boundary data of the hat
/// function at its target vertex, plus the frozen Vandermonde factors that
/// turn predicted coefficients into boundary traces (`v`) and tangential
/// derivatives (`v_t`).
#[derive(Debug, Clone)]
pub struct TrainingSample {
    pub x0_coef: Vec<f64>,
    /// Frame element the fit lives on.
    pub element: Polygon,
    /// Index of the hat vertex on the frame element.
    pub vertex: usize,
    pub boundary: BoundaryQuadrature,
    /// Boundary quadrature weights as a vector.
    pub w: DVector<f64>,
    pub v: DMatrix<f64>,
    pub v_t: DMatrix<f64>,
    pub target_trace: DVector<f64>,
    pub target_tangent: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub class: PolygonClass,
    pub samples: Vec<TrainingSample>,
    /// Generator description baked into saved models.
    pub provenance: String,
}

/// The implemented scheme trains two networks per class; the single-network
/// combined loss is recognized but not implemented.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainingVariant {
    TwoNetworks,
    CombinedLoss,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub variant: TrainingVariant,
    pub adam: AdamConfig,
    pub lbfgs: LbfgsConfig,
    pub regularization: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            variant: TrainingVariant::TwoNetworks,
            adam: AdamConfig::default(),
            lbfgs: LbfgsConfig::default(),
            regularization: 1e-8,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub adam_losses: Vec<f64>,
    pub lbfgs_losses: Vec<f64>,
    pub final_loss: f64,
}

/// Boundary trace and tangential derivative of the hat function of vertex
/// `j` at points on the boundary of `e`. The hat is 1 at `v_j`, falls
/// linearly to 0 along the two incident edges and vanishes elsewhere; its
/// tangential derivative is `+-1/|edge|` on those edges. Points further than
/// `1e-10 * diameter` from the boundary are rejected.
pub fn target_hat(e: &Polygon, j: usize, points: &[Point2]) -> Result<(Vec<f64>, Vec<f64>)> {
    let tol = 1e-10 * e.diameter();
    let rising = e.prev_idx(j);
    let mut trace = Vec::with_capacity(points.len());
    let mut tangent = Vec::with_capacity(points.len());
    for &p in points {
        let mut best = (f64::INFINITY, 0usize, 0.0f64);
        for i in 0..e.nv() {
            let (a, b) = e.edge(i);
            let ab = b - a;
            let t = ((p - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
            let d = (p - (a + ab * t)).norm();
            if d < best.0 {
                best = (d, i, t);
            }
        }
        let (dist, i, t) = best;
        if dist > tol {
            return Err(Error::Mismatch(format!(
                "point ({:.6}, {:.6}) lies {dist:.3e} off the boundary",
                p.x, p.y
            )));
        }
        let (val, der) = if i == rising {
            (t, 1.0 / e.edge_length(i))
        } else if i == j {
            (1.0 - t, -1.0 / e.edge_length(i))
        } else {
            (0.0, 0.0)
        };
        trace.push(val);
        tangent.push(der);
    }
    Ok((trace, tangent))
}

fn run_training(
    net: &mut Mlp,
    data: &Dataset,
    cfg: &TrainConfig,
    tangential: bool,
) -> Result<TrainReport> {
    if cfg.variant == TrainingVariant::CombinedLoss {
        return Err(Error::UnsupportedVariant("combined single-network loss"));
    }
    if data.samples.is_empty() {
        return Err(Error::Mismatch(format!(
            "dataset for class {} is empty",
            data.class.label()
        )));
    }
    let all: Vec<usize> = (0..data.samples.len()).collect();
    let mut x = net.pack();
    let mut scratch = net.clone();
    let samples = &data.samples;
    let reg = cfg.regularization;

    let adam_result = match cfg.adam.batch {
        Some(b) if b < samples.len() => {
            let n_chunks = samples.len().div_ceil(b);
            let mut order = all.clone();
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
            let mut step = 0usize;
            adam(&mut x, cfg.adam.epochs * n_chunks, &cfg.adam, |p| {
                if step % n_chunks == 0 {
                    order.shuffle(&mut rng);
                }
                let lo = (step % n_chunks) * b;
                let hi = (lo + b).min(samples.len());
                step += 1;
                scratch.unpack(p)?;
                let (l, g) = loss::loss_batch(&scratch, samples, &order[lo..hi], reg, tangential)?;
                Ok((l, g.pack()))
            })
        }
        _ => adam(&mut x, cfg.adam.epochs, &cfg.adam, |p| {
            scratch.unpack(p)?;
            let (l, g) = loss::loss_batch(&scratch, samples, &all, reg, tangential)?;
            Ok((l, g.pack()))
        }),
    };
    // Keep whatever checkpoint the optimizer left, even on divergence.
    net.unpack(&x)?;
    let adam_losses = adam_result?;

    let lbfgs_result = lbfgs(&mut x, &cfg.lbfgs, |p| {
        scratch.unpack(p)?;
        let (l, g) = loss::loss_batch(&scratch, samples, &all, reg, tangential)?;
        Ok((l, g.pack()))
    });
    net.unpack(&x)?;
    let lbfgs_losses = lbfgs_result?;

    let final_loss = lbfgs_losses
        .last()
        .or(adam_losses.last())
        .copied()
        .unwrap_or(f64::NAN);
    Ok(TrainReport {
        adam_losses,
        lbfgs_losses,
        final_loss,
    })
}

/// Fit the trace network: Adam warmup followed by limited-memory BFGS on the
/// full batch. The network is left at the last finite iterate even when the
/// optimization diverges.
pub fn train_phi_net(net: &mut Mlp, data: &Dataset, cfg: &TrainConfig) -> Result<TrainReport> {
    run_training(net, data, cfg, false)
}

/// Fit the gradient network: start from the trained trace network and
/// fine-tune on the tangential-derivative loss. With a zero-step config the
/// returned network equals `phi_net` exactly.
pub fn train_q_net(phi_net: &Mlp, data: &Dataset, cfg: &TrainConfig) -> Result<(Mlp, TrainReport)> {
    let mut q = phi_net.clone();
    let report = run_training(&mut q, data, cfg, true)?;
    Ok((q, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::{encode, reference_element, TRAINING_SPACING_FLOOR};
    use crate::harmonic::phi::PhiFunction;
    use crate::harmonic::{orthonormalize_basis, OrthonormalHarmonicBasis};
    use nalgebra::DVector;
    use rand::Rng;

    fn small_shared() -> OrthonormalHarmonicBasis {
        orthonormalize_basis(10, 3.0, 50).unwrap()
    }

    fn phi() -> PhiFunction {
        PhiFunction::with_defaults().unwrap()
    }

    fn pentagon() -> Polygon {
        Polygon::new(vec![
            Point2::new(0.0, 0.0),
            Point2::new(1.1, -0.2),
            Point2::new(1.6, 0.8),
            Point2::new(0.7, 1.5),
            Point2::new(-0.4, 0.9),
        ])
        .unwrap()
    }

    #[test]
    fn hats_partition_unity_on_the_boundary() {
        let e = pentagon();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let points: Vec<Point2> = (0..200)
            .map(|_| {
                let i = rng.random_range(0..e.nv());
                let (a, b) = e.edge(i);
                let t: f64 = rng.random();
                a + (b - a) * t
            })
            .collect();
        let mut sum_val = vec![0.0; points.len()];
        let mut sum_der = vec![0.0; points.len()];
        for j in 0..e.nv() {
            let (val, der) = target_hat(&e, j, &points).unwrap();
            for k in 0..points.len() {
                sum_val[k] += val[k];
                sum_der[k] += der[k];
            }
        }
        for k in 0..points.len() {
            assert!((sum_val[k] - 1.0).abs() < 1e-12);
            assert!(sum_der[k].abs() < 1e-12);
        }
    }

    #[test]
    fn hat_values_on_a_square() {
        let e = Polygon::new(vec![
            Point2::new(0.0, 0.0),
            Point2::new(2.0, 0.0),
            Point2::new(2.0, 2.0),
            Point2::new(0.0, 2.0),
        ])
        .unwrap();
        let pts = vec![
            Point2::new(0.5, 0.0),  // on edge 0, t = 0.25
            Point2::new(2.0, 1.0),  // on edge 1, t = 0.5
            Point2::new(1.0, 2.0),  // on edge 2 (reversed direction)
            Point2::new(0.0, 0.5),  // on edge 3
        ];
        let (val, der) = target_hat(&e, 1, &pts).unwrap();
        assert!((val[0] - 0.25).abs() < 1e-14 && (der[0] - 0.5).abs() < 1e-14);
        assert!((val[1] - 0.5).abs() < 1e-14 && (der[1] + 0.5).abs() < 1e-14);
        assert_eq!((val[2], der[2]), (0.0, 0.0));
        assert_eq!((val[3], der[3]), (0.0, 0.0));

        let off = target_hat(&e, 1, &[Point2::new(1.0, 1.0)]);
        assert!(matches!(off, Err(Error::Mismatch(_))));
    }

    #[test]
    fn representable_targets_reach_machine_zero() {
        // Hats on true triangles are degree-1 harmonic polynomials, so the
        // least-squares fit must drive both losses to quadrature noise.
        let shared = small_shared();
        let base = phi();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut samples = Vec::new();
        while samples.len() < 10 {
            let tri: Vec<Point2> = (0..3)
                .map(|_| Point2::new(rng.random::<f64>() * 2.0, rng.random::<f64>() * 2.0))
                .collect();
            let Ok(p) = Polygon::new(tri) else { continue };
            if p.area() < 0.1 {
                continue;
            }
            let j = rng.random_range(0..3);
            samples.push(sample_on_frame_element(&p, j, Vec::new(), &shared, &base).unwrap());
        }
        let coeffs: Vec<(DVector<f64>, DVector<f64>)> = samples
            .iter()
            .map(|s| oracle_coefficients(s, &shared, &base).unwrap())
            .collect();
        let c_v: Vec<DVector<f64>> = coeffs.iter().map(|c| c.0.clone()).collect();
        let c_t: Vec<DVector<f64>> = coeffs.iter().map(|c| c.1.clone()).collect();
        let l0 = trace_loss_with_coefficients(&samples, &c_v);
        let l1 = tangent_loss_with_coefficients(&samples, &c_t);
        assert!(l0.sqrt() < 1e-6, "sqrt L0 = {:.3e}", l0.sqrt());
        assert!(l1.sqrt() < 1e-6, "sqrt L1 = {:.3e}", l1.sqrt());
    }

    #[test]
    fn oracle_coefficients_bound_the_trace_loss() {
        let shared = small_shared();
        let base = phi();
        let data = build_rdqm_dataset(3, 21, &shared, &base).unwrap();
        assert_eq!(data.samples.len(), 12);
        let oracle: Vec<DVector<f64>> = data
            .samples
            .iter()
            .map(|s| oracle_coefficients(s, &shared, &base).unwrap().0)
            .collect();
        let floor = trace_loss_with_coefficients(&data.samples, &oracle);
        let net = Mlp::glorot(&[6, 16, 24], 4).unwrap();
        let (loss, _) = loss_l0(&net, &data.samples, 0.0).unwrap();
        assert!(loss >= floor, "network {loss:.3e} below the floor {floor:.3e}");
        assert!(floor >= 0.0);
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let shared = small_shared();
        let base = phi();
        let data = build_rdqm_dataset(2, 5, &shared, &base).unwrap();
        let net = Mlp::glorot(&[6, 8, 24], 9).unwrap();
        for tangential in [false, true] {
            let all: Vec<usize> = (0..data.samples.len()).collect();
            let (_, grad) =
                loss::loss_batch(&net, &data.samples, &all, 1e-8, tangential).unwrap();
            let grad = grad.pack();
            let base_params = net.pack();
            let mut probe = net.clone();
            let mut value = |p: &DVector<f64>| -> f64 {
                probe.unpack(p).unwrap();
                loss::loss_batch(&probe, &data.samples, &all, 1e-8, tangential)
                    .unwrap()
                    .0
            };
            let step = 1e-6;
            // Central differences cancel to ~eps*loss/step, so tiny gradient
            // entries are compared against the gradient scale instead.
            let floor = 1e-4 * grad.amax();
            for i in (0..base_params.len()).step_by(7) {
                let mut p = base_params.clone();
                p[i] += step;
                let up = value(&p);
                p[i] -= 2.0 * step;
                let down = value(&p);
                let fd = (up - down) / (2.0 * step);
                let denom = fd.abs().max(grad[i].abs()).max(floor);
                assert!(
                    (fd - grad[i]).abs() / denom < 1e-5,
                    "tangential={tangential} param {i}: fd {fd:.6e} vs {:.6e}",
                    grad[i]
                );
            }
        }
    }

    #[test]
    fn short_training_descends_and_is_deterministic() {
        let shared = small_shared();
        let base = phi();
        let data = build_rdqm_dataset(3, 33, &shared, &base).unwrap();
        let cfg = TrainConfig {
            adam: AdamConfig {
                epochs: 40,
                learning_rate: 3e-3,
                ..AdamConfig::default()
            },
            lbfgs: LbfgsConfig {
                max_iters: 10,
                ..LbfgsConfig::default()
            },
            ..TrainConfig::default()
        };
        let mut net = Mlp::glorot(&[6, 12, 24], 1).unwrap();
        let start = loss_l0(&net, &data.samples, cfg.regularization).unwrap().0;
        let report = train_phi_net(&mut net, &data, &cfg).unwrap();
        assert!(report.final_loss < start);
        assert!(report.lbfgs_losses.windows(2).all(|w| w[1] <= w[0]));

        let mut twin = Mlp::glorot(&[6, 12, 24], 1).unwrap();
        train_phi_net(&mut twin, &data, &cfg).unwrap();
        assert_eq!(net.pack(), twin.pack());
    }

    #[test]
    fn q_training_starts_from_phi_and_descends() {
        let shared = small_shared();
        let base = phi();
        let data = build_rdqm_dataset(3, 55, &shared, &base).unwrap();
        let mut phi_net = Mlp::glorot(&[6, 12, 24], 2).unwrap();
        let cfg = TrainConfig {
            adam: AdamConfig {
                epochs: 30,
                learning_rate: 3e-3,
                ..AdamConfig::default()
            },
            lbfgs: LbfgsConfig {
                max_iters: 5,
                ..LbfgsConfig::default()
            },
            ..TrainConfig::default()
        };
        train_phi_net(&mut phi_net, &data, &cfg).unwrap();

        let frozen = TrainConfig {
            adam: AdamConfig {
                epochs: 0,
                ..AdamConfig::default()
            },
            lbfgs: LbfgsConfig {
                max_iters: 0,
                ..LbfgsConfig::default()
            },
            ..TrainConfig::default()
        };
        let (q0, _) = train_q_net(&phi_net, &data, &frozen).unwrap();
        assert_eq!(q0.pack(), phi_net.pack());

        let before = loss_l1(&phi_net, &data.samples, cfg.regularization).unwrap().0;
        let (q, report) = train_q_net(&phi_net, &data, &cfg).unwrap();
        assert!(report.final_loss < before);
        assert_ne!(q.pack(), phi_net.pack());
    }

    #[test]
    fn combined_loss_variant_is_rejected() {
        let shared = small_shared();
        let base = phi();
        let data = build_rdqm_dataset(1, 8, &shared, &base).unwrap();
        let cfg = TrainConfig {
            variant: TrainingVariant::CombinedLoss,
            ..TrainConfig::default()
        };
        let mut net = Mlp::glorot(&[6, 8, 24], 3).unwrap();
        assert!(matches!(
            train_phi_net(&mut net, &data, &cfg),
            Err(Error::UnsupportedVariant(_))
        ));
    }

    #[test]
    fn rdqm_dataset_is_deterministic_and_normalized() {
        let shared = small_shared();
        let base = phi();
        let a = build_rdqm_dataset(4, 17, &shared, &base).unwrap();
        let b = build_rdqm_dataset(4, 17, &shared, &base).unwrap();
        assert_eq!(a.samples.len(), 16);
        for (x, y) in a.samples.iter().zip(&b.samples) {
            assert_eq!(x.x0_coef, y.x0_coef);
        }
        for s in &a.samples {
            // The frame pins the hat vertex at (1, 0); the remaining vertex
            // coordinates are the network inputs.
            let vj = s.element.vertex(s.vertex);
            assert!((vj - Point2::new(1.0, 0.0)).norm() < 1e-9);
            assert_eq!(s.x0_coef.len(), 6);
            assert!(s.target_trace.iter().all(|&v| (0.0..=1.0).contains(&v)));
            assert_eq!(s.v.nrows(), 64);
            assert_eq!(s.v.ncols(), 24);
        }
    }

    #[test]
    fn htm_datasets_respect_the_spacing_floor() {
        let shared = small_shared();
        let base = phi();
        let sets = build_htm_datasets(3, 29, &shared, &base).unwrap();
        assert_eq!(sets.len(), 5);
        for set in &sets {
            let PolygonClass::HangingTriangle(c) = set.class else {
                panic!("unexpected class");
            };
            let dims = set.class.input_dim().unwrap();
            assert_eq!(set.samples.len(), 3);
            for s in &set.samples {
                assert_eq!(s.x0_coef.len(), dims);
                for &t in &s.x0_coef {
                    assert!(t >= TRAINING_SPACING_FLOOR && t <= 1.0 - TRAINING_SPACING_FLOOR);
                }
                if matches!(c, 3 | 4) {
                    assert!(s.x0_coef.windows(2).all(|w| w[1] - w[0] >= TRAINING_SPACING_FLOOR));
                }
                // Rebuilding the reference element and encoding it must
                // reproduce the sampled coordinates.
                let (fe, jj) = reference_element(c, &s.x0_coef).unwrap();
                let (class, enc) = encode(&fe, jj).unwrap();
                assert_eq!(class, set.class);
                for (u, v) in enc.x0_coef.iter().zip(&s.x0_coef) {
                    assert!((u - v).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn vm_datasets_split_by_vertex_count() {
        let shared = small_shared();
        let base = phi();
        let sets = build_vm_datasets(&[48, 96], 1, 5, 7, &shared, &base).unwrap();
        assert_eq!(sets.len(), 3);
        for (set, nv) in sets.iter().zip(5usize..=7) {
            assert_eq!(set.class, PolygonClass::NvClass(nv));
            assert!(set.samples.len() >= 5);
            for s in set.samples.iter().take(3) {
                assert_eq!(s.x0_coef.len(), 2 * (nv - 1));
                let vj = s.element.vertex(s.vertex);
                assert!((vj - Point2::new(1.0, 0.0)).norm() < 1e-9);
            }
        }
    }

}

