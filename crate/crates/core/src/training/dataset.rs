//! Dataset builders for the three polygon-class groups.
//!
//! Every sample lives on a frame element: the inertially mapped polygon for
//! general classes, the reference equilateral layout for hanging-triangle
//! classes. Targets, boundary rules and Vandermonde factors are precomputed
//! here so the training loop touches only network parameters.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::f64::consts::TAU;

use super::{target_hat, Dataset, TrainingSample};
use crate::encoding::{
    encode, reference_element, EncodedInput, PolygonClass, TRAINING_SPACING_FLOOR,
};
use crate::geometry::families::{convex_hull_quad, vm, VmParams};
use crate::geometry::quadrature::boundary_quadrature;
use crate::geometry::{Point2, Polygon};
use crate::harmonic::phi::PhiFunction;
use crate::harmonic::space::{build_approx_space, vandermonde};
use crate::harmonic::OrthonormalHarmonicBasis;
use crate::{Error, Result};

/// Gauss points per edge for all training boundary rules.
pub const TRAINING_EDGE_POINTS: usize = 16;

/// Assemble one sample on an already-placed frame element.
pub fn sample_on_frame_element(
    frame_element: &Polygon,
    j: usize,
    x0_coef: Vec<f64>,
    shared: &OrthonormalHarmonicBasis,
    base_phi: &PhiFunction,
) -> Result<TrainingSample> {
    let space = build_approx_space(frame_element, j, shared, base_phi)?;
    let boundary = boundary_quadrature(frame_element, TRAINING_EDGE_POINTS);
    let (trace, tang) = target_hat(frame_element, j, &boundary.points)?;
    let block = vandermonde(&space, &boundary.points);
    let n = boundary.points.len();
    let dim = space.dim();
    let mut v_t = DMatrix::zeros(n, dim);
    for i in 0..n {
        let t = boundary.tangents[i];
        for k in 0..dim {
            v_t[(i, k)] = t.x * block.v_x1[(i, k)] + t.y * block.v_x2[(i, k)];
        }
    }
    let w = DVector::from_vec(boundary.weights.clone());
    Ok(TrainingSample {
        x0_coef,
        element: frame_element.clone(),
        vertex: j,
        boundary,
        w,
        v: block.v,
        v_t,
        target_trace: DVector::from_vec(trace),
        target_tangent: DVector::from_vec(tang),
    })
}

/// Classify and place `(e, j)` on its frame element. `None` for classes with
/// closed-form basis functions (true triangles and their fully split case).
pub fn reference_placement(
    e: &Polygon,
    j: usize,
) -> Result<Option<(PolygonClass, EncodedInput, Polygon, usize)>> {
    let (class, enc) = encode(e, j)?;
    if class.input_dim().is_none() {
        return Ok(None);
    }
    let placed = match class {
        PolygonClass::HangingTriangle(c) => reference_element(c, &enc.x0_coef)?,
        _ => (enc.frame.map_polygon(e)?, j),
    };
    Ok(Some((class, enc, placed.0, placed.1)))
}

fn samples_for_element(
    e: &Polygon,
    shared: &OrthonormalHarmonicBasis,
    base_phi: &PhiFunction,
) -> Result<Vec<(PolygonClass, TrainingSample)>> {
    let mut out = Vec::new();
    for j in 0..e.nv() {
        if let Some((class, enc, fe, jj)) = reference_placement(e, j)? {
            out.push((
                class,
                sample_on_frame_element(&fe, jj, enc.x0_coef, shared, base_phi)?,
            ));
        }
    }
    Ok(out)
}

/// Random convex quadrilaterals: four uniform draws on the unit disk,
/// accepted when they sit in convex position. Each quadrilateral yields one
/// sample per vertex.
pub fn build_rdqm_dataset(
    n_quads: usize,
    seed: u64,
    shared: &OrthonormalHarmonicBasis,
    base_phi: &PhiFunction,
) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(4 * n_quads);
    let mut accepted = 0;
    let mut rejected = 0;
    let budget = 500 * n_quads.max(1);
    for _ in 0..budget {
        if accepted == n_quads {
            break;
        }
        let pts: Vec<Point2> = (0..4)
            .map(|_| {
                let r = rng.random::<f64>().sqrt();
                let a = TAU * rng.random::<f64>();
                Point2::new(r * a.cos(), r * a.sin())
            })
            .collect();
        let Some(quad) = convex_hull_quad(&pts) else {
            rejected += 1;
            continue;
        };
        match samples_for_element(&quad, shared, base_phi) {
            Ok(list) => {
                debug_assert!(list.iter().all(|(c, _)| *c == PolygonClass::NvClass(4)));
                samples.extend(list.into_iter().map(|(_, s)| s));
                accepted += 1;
            }
            // A sliver the basis construction cannot handle; draw again.
            Err(_) => rejected += 1,
        }
    }
    if accepted < n_quads {
        return Err(Error::MeshGeneration(format!(
            "only {accepted} of {n_quads} quadrilaterals accepted within the draw budget"
        )));
    }
    Ok(Dataset {
        class: PolygonClass::NvClass(4),
        samples,
        provenance: format!(
            "convex quadrilaterals from disk draws, n={n_quads}, seed={seed}, rejected={rejected}"
        ),
    })
}

/// Pool elements of Voronoi meshes at several refinements and split them by
/// vertex count into one dataset per class in 5..=7. Quadrilaterals are
/// covered by the N4 networks and triangles by closed forms, so neither is
/// collected. Further refinements are appended until every class holds
/// `min_samples` samples.
pub fn build_vm_datasets(
    refinement_seeds: &[usize],
    lloyd_iterations: usize,
    min_samples: usize,
    seed: u64,
    shared: &OrthonormalHarmonicBasis,
    base_phi: &PhiFunction,
) -> Result<Vec<Dataset>> {
    if refinement_seeds.is_empty() {
        return Err(Error::MeshGeneration("no Voronoi refinements given".into()));
    }
    let mut levels = refinement_seeds.to_vec();
    let mut per_class: BTreeMap<usize, Vec<TrainingSample>> =
        (5..=7).map(|n| (n, Vec::new())).collect();
    let mut skipped = 0;
    let mut level = 0;
    while level < levels.len() {
        let mesh = vm(
            VmParams {
                seeds: levels[level],
                lloyd_iterations,
            },
            seed.wrapping_add(level as u64),
        )?;
        for e in 0..mesh.n_elements() {
            let poly = mesh.element_polygon(e);
            if !(5..=7).contains(&poly.nv()) {
                continue;
            }
            match samples_for_element(&poly, shared, base_phi) {
                Ok(list) => {
                    for (_, s) in list {
                        per_class.get_mut(&poly.nv()).unwrap().push(s);
                    }
                }
                Err(_) => skipped += 1,
            }
        }
        let short = per_class.values().any(|v| v.len() < min_samples);
        if short && level + 1 == levels.len() && levels.len() < refinement_seeds.len() + 6 {
            levels.push(levels[level] * 2);
        }
        level += 1;
    }
    if let Some((nv, list)) = per_class.iter().find(|(_, v)| v.len() < min_samples) {
        return Err(Error::MeshGeneration(format!(
            "class N{nv} holds {} of {min_samples} requested samples after {} refinements",
            list.len(),
            levels.len()
        )));
    }
    let provenance_levels = levels.clone();
    Ok(per_class
        .into_iter()
        .map(|(nv, samples)| Dataset {
            class: PolygonClass::NvClass(nv),
            samples,
            provenance: format!(
                "voronoi pools seeds={provenance_levels:?} lloyd={lloyd_iterations} seed={seed} skipped={skipped}"
            ),
        })
        .collect())
}

/// Hanging-triangle datasets: for each trained configuration, sample the
/// curvilinear coordinates directly on the reference equilateral layout,
/// keeping consecutive boundary vertices at least the training floor apart.
pub fn build_htm_datasets(
    per_class: usize,
    seed: u64,
    shared: &OrthonormalHarmonicBasis,
    base_phi: &PhiFunction,
) -> Result<Vec<Dataset>> {
    let mut out = Vec::new();
    for config in 1u8..=5 {
        let class = PolygonClass::HangingTriangle(config);
        let dims = class.input_dim().expect("configs 1..=5 are trained");
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(config as u64));
        let mut samples = Vec::with_capacity(per_class);
        while samples.len() < per_class {
            let mut coords: Vec<f64> = (0..dims).map(|_| rng.random::<f64>()).collect();
            if matches!(config, 3 | 4) {
                coords.sort_by(f64::total_cmp);
            }
            let spaced = if config == 5 {
                coords
                    .iter()
                    .all(|&t| t >= TRAINING_SPACING_FLOOR && 1.0 - t >= TRAINING_SPACING_FLOOR)
            } else {
                let mut chain = vec![0.0];
                chain.extend_from_slice(&coords);
                chain.push(1.0);
                chain.windows(2).all(|w| w[1] - w[0] >= TRAINING_SPACING_FLOOR)
            };
            if !spaced {
                continue;
            }
            let (fe, jj) = reference_element(config, &coords)?;
            samples.push(sample_on_frame_element(&fe, jj, coords, shared, base_phi)?);
        }
        out.push(Dataset {
            class,
            samples,
            provenance: format!(
                "reference hanging sampler, config={config}, n={per_class}, floor={TRAINING_SPACING_FLOOR}, seed={seed}"
            ),
        });
    }
    Ok(out)
}
