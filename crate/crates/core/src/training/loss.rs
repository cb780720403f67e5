//! Trace and tangential-derivative losses.
//!
//! Both losses share one structure: the network maps encoded inputs to
//! coefficient vectors, a per-sample Vandermonde factor turns coefficients
//! into boundary values (or tangential derivatives), and the weighted
//! squared residual against the hat-function target is averaged over the
//! batch. The Vandermonde factors never change during training, so they are
//! computed once when the dataset is built.

use nalgebra::{DMatrix, DVector};

use super::TrainingSample;
use crate::harmonic::phi::PhiFunction;
use crate::harmonic::space::{build_approx_space, lsq_fit, LsqTarget};
use crate::harmonic::OrthonormalHarmonicBasis;
use crate::network::{Mlp, MlpGradient};
use crate::{Error, Result};

/// Mean weighted squared residual plus `reg * sum ||A||_F^2` over the
/// selected samples, with its exact gradient. `tangent` switches between the
/// trace target and the tangential-derivative target.
pub(crate) fn loss_batch(
    net: &Mlp,
    samples: &[TrainingSample],
    idx: &[usize],
    reg: f64,
    tangent: bool,
) -> Result<(f64, MlpGradient)> {
    if idx.is_empty() {
        return Err(Error::Mismatch("empty training batch".into()));
    }
    let n0 = net.input_dim();
    let out = net.output_dim();
    for &si in idx {
        let s = &samples[si];
        if s.x0_coef.len() != n0 || s.v.ncols() != out {
            return Err(Error::Mismatch(format!(
                "sample expects {} -> {} network, got {} -> {}",
                s.x0_coef.len(),
                s.v.ncols(),
                n0,
                out
            )));
        }
    }
    let count = idx.len() as f64;
    let x = DMatrix::from_fn(n0, idx.len(), |r, c| samples[idx[c]].x0_coef[r]);
    let (coeffs, cache) = net.forward_cached(&x)?;

    let mut data = 0.0;
    let mut cot = DMatrix::zeros(out, idx.len());
    for (k, &si) in idx.iter().enumerate() {
        let s = &samples[si];
        let (mat, target) = if tangent {
            (&s.v_t, &s.target_tangent)
        } else {
            (&s.v, &s.target_trace)
        };
        let mut r = mat * coeffs.column(k);
        r -= target;
        let wr = r.component_mul(&s.w);
        data += r.dot(&wr);
        cot.column_mut(k)
            .copy_from(&(mat.tr_mul(&wr) * (2.0 / count)));
    }
    let mut loss = data / count;
    let mut grad = net.backward(&cache, &cot)?;
    if reg != 0.0 {
        for (g, a) in grad.weights.iter_mut().zip(net.weights()) {
            loss += reg * a.norm_squared();
            g.zip_apply(a, |gv, av| *gv += 2.0 * reg * av);
        }
    }
    Ok((loss, grad))
}

/// Trace loss over the whole dataset.
pub fn loss_l0(net: &Mlp, samples: &[TrainingSample], reg: f64) -> Result<(f64, MlpGradient)> {
    let all: Vec<usize> = (0..samples.len()).collect();
    loss_batch(net, samples, &all, reg, false)
}

/// Tangential-derivative loss over the whole dataset.
pub fn loss_l1(net: &Mlp, samples: &[TrainingSample], reg: f64) -> Result<(f64, MlpGradient)> {
    let all: Vec<usize> = (0..samples.len()).collect();
    loss_batch(net, samples, &all, reg, true)
}

fn loss_with(samples: &[TrainingSample], coeffs: &[DVector<f64>], tangent: bool) -> f64 {
    assert_eq!(samples.len(), coeffs.len());
    let mut data = 0.0;
    for (s, c) in samples.iter().zip(coeffs) {
        let (mat, target) = if tangent {
            (&s.v_t, &s.target_tangent)
        } else {
            (&s.v, &s.target_trace)
        };
        let mut r = mat * c;
        r -= target;
        data += r.dot(&r.component_mul(&s.w));
    }
    data / samples.len() as f64
}

/// Trace loss (no regularization) for externally supplied coefficients, one
/// vector per sample. With least-squares coefficients this is the floor no
/// network can beat.
pub fn trace_loss_with_coefficients(samples: &[TrainingSample], coeffs: &[DVector<f64>]) -> f64 {
    loss_with(samples, coeffs, false)
}

/// Tangential loss (no regularization) for externally supplied coefficients.
pub fn tangent_loss_with_coefficients(samples: &[TrainingSample], coeffs: &[DVector<f64>]) -> f64 {
    loss_with(samples, coeffs, true)
}

/// Best-possible coefficients for one sample: direct least-squares fits of
/// the trace and of the tangential derivative on the sample's own boundary
/// rule.
pub fn oracle_coefficients(
    sample: &TrainingSample,
    shared: &OrthonormalHarmonicBasis,
    base_phi: &PhiFunction,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let space = build_approx_space(&sample.element, sample.vertex, shared, base_phi)?;
    let trace: Vec<f64> = sample.target_trace.iter().copied().collect();
    let fit_v = lsq_fit(&space, &sample.boundary, LsqTarget::Values(&trace));
    let perimeter: f64 = sample.w.iter().sum();
    let mean = sample.target_trace.dot(&sample.w) / perimeter;
    let tang: Vec<f64> = sample.target_tangent.iter().copied().collect();
    let fit_t = lsq_fit(
        &space,
        &sample.boundary,
        LsqTarget::Tangential {
            derivative: &tang,
            mean,
        },
    );
    Ok((fit_v.coeffs, fit_t.coeffs))
}
