//! Coefficient networks: fully-connected tanh MLPs mapping an encoded
//! element to the coefficient vector of its boundary-fitted basis function,
//! plus the Vandermonde composition that turns coefficients into values and
//! gradients.
//!
//! Two networks of identical topology serve each polygon class: one fitted
//! to boundary traces, one fine-tuned on tangential derivatives so that the
//! predicted gradient stays accurate even when the trace fit oscillates.

use nalgebra::{DMatrix, DVector, Vector2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::encoding::{EncodedInput, PolygonClass};
use crate::geometry::Point2;
use crate::harmonic::space::{vandermonde, ApproxSpace};
use crate::{Error, Result};

/// Fully-connected MLP with tanh hidden activations and an affine output
/// layer. Layer `k` maps `layer_sizes[k]` to `layer_sizes[k+1]` values.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layer_sizes: Vec<usize>,
    weights: Vec<DMatrix<f64>>,
    biases: Vec<DVector<f64>>,
}

/// Per-layer activations of a batched forward pass; `activations[0]` is the
/// input batch itself, later entries are tanh outputs.
#[derive(Debug)]
pub struct ForwardCache {
    activations: Vec<DMatrix<f64>>,
}

/// Gradients with the same shapes as the network parameters.
#[derive(Debug, Clone)]
pub struct MlpGradient {
    pub weights: Vec<DMatrix<f64>>,
    pub biases: Vec<DVector<f64>>,
}

impl Mlp {
    /// Glorot normal initialization: weights drawn from
    /// N(0, 2/(fan_in + fan_out)), biases zero. Deterministic per seed; the
    /// draw order is layers outside, rows, then columns.
    pub fn glorot(layer_sizes: &[usize], seed: u64) -> Result<Self> {
        if layer_sizes.len() < 2 || layer_sizes.iter().any(|&n| n == 0) {
            return Err(Error::Mismatch(format!(
                "invalid layer sizes {layer_sizes:?}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in layer_sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let std = (2.0 / (fan_in + fan_out) as f64).sqrt();
            let dist = Normal::new(0.0, std).expect("positive std");
            let mut a = DMatrix::zeros(fan_out, fan_in);
            for r in 0..fan_out {
                for c in 0..fan_in {
                    a[(r, c)] = dist.sample(&mut rng);
                }
            }
            weights.push(a);
            biases.push(DVector::zeros(fan_out));
        }
        Ok(Mlp {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            biases,
        })
    }

    /// Assemble from explicit parameters, validating the shape chain.
    pub fn from_parts(
        layer_sizes: Vec<usize>,
        weights: Vec<DMatrix<f64>>,
        biases: Vec<DVector<f64>>,
    ) -> Result<Self> {
        let l = layer_sizes.len();
        if l < 2 || weights.len() != l - 1 || biases.len() != l - 1 {
            return Err(Error::Mismatch("layer count mismatch".into()));
        }
        for k in 0..l - 1 {
            if weights[k].nrows() != layer_sizes[k + 1]
                || weights[k].ncols() != layer_sizes[k]
                || biases[k].len() != layer_sizes[k + 1]
            {
                return Err(Error::Mismatch(format!(
                    "layer {k} shapes do not chain: {}x{} between sizes {} and {}",
                    weights[k].nrows(),
                    weights[k].ncols(),
                    layer_sizes[k],
                    layer_sizes[k + 1],
                )));
            }
        }
        Ok(Mlp {
            layer_sizes,
            weights,
            biases,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn weights(&self) -> &[DMatrix<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[DVector<f64>] {
        &self.biases
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn n_params(&self) -> usize {
        self.layer_sizes
            .windows(2)
            .map(|w| w[1] * (w[0] + 1))
            .sum()
    }

    /// Batched forward pass: inputs are columns, outputs are columns.
    pub fn forward(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(self.forward_cached(x)?.0)
    }

    /// Forward pass keeping the layer activations for [`Mlp::backward`].
    pub fn forward_cached(&self, x: &DMatrix<f64>) -> Result<(DMatrix<f64>, ForwardCache)> {
        if x.nrows() != self.input_dim() {
            return Err(Error::Mismatch(format!(
                "network expects {} inputs, batch has {} rows",
                self.input_dim(),
                x.nrows()
            )));
        }
        let last = self.weights.len() - 1;
        let mut activations = vec![x.clone()];
        for k in 0..last {
            let mut z = &self.weights[k] * activations.last().unwrap();
            for mut col in z.column_iter_mut() {
                col += &self.biases[k];
            }
            z.apply(|v| *v = v.tanh());
            activations.push(z);
        }
        let mut out = &self.weights[last] * activations.last().unwrap();
        for mut col in out.column_iter_mut() {
            col += &self.biases[last];
        }
        Ok((out, ForwardCache { activations }))
    }

    /// Reverse-mode gradients of `sum_batch cotangent . output` with respect
    /// to every weight and bias. `tanh' = 1 - tanh^2` uses the cached
    /// activations directly.
    pub fn backward(&self, cache: &ForwardCache, cotangent: &DMatrix<f64>) -> Result<MlpGradient> {
        let last = self.weights.len() - 1;
        if cotangent.nrows() != self.output_dim()
            || cotangent.ncols() != cache.activations[0].ncols()
        {
            return Err(Error::Mismatch(format!(
                "cotangent is {}x{}, expected {}x{}",
                cotangent.nrows(),
                cotangent.ncols(),
                self.output_dim(),
                cache.activations[0].ncols()
            )));
        }
        let mut g_weights = vec![DMatrix::zeros(0, 0); last + 1];
        let mut g_biases = vec![DVector::zeros(0); last + 1];
        let mut delta = cotangent.clone();
        for k in (0..=last).rev() {
            g_weights[k] = &delta * cache.activations[k].transpose();
            g_biases[k] = delta.column_sum();
            if k > 0 {
                let mut back = self.weights[k].transpose() * delta;
                back.zip_apply(&cache.activations[k], |b, a| *b *= 1.0 - a * a);
                delta = back;
            }
        }
        Ok(MlpGradient {
            weights: g_weights,
            biases: g_biases,
        })
    }

    /// Flatten all parameters into one vector (layer order, each matrix
    /// row-major, then its bias).
    pub fn pack(&self) -> DVector<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for (a, b) in self.weights.iter().zip(&self.biases) {
            for r in 0..a.nrows() {
                for c in 0..a.ncols() {
                    out.push(a[(r, c)]);
                }
            }
            out.extend(b.iter().copied());
        }
        DVector::from_vec(out)
    }

    /// Inverse of [`Mlp::pack`].
    pub fn unpack(&mut self, packed: &DVector<f64>) -> Result<()> {
        if packed.len() != self.n_params() {
            return Err(Error::Mismatch(format!(
                "parameter vector has {} entries, network needs {}",
                packed.len(),
                self.n_params()
            )));
        }
        let mut i = 0;
        for (a, b) in self.weights.iter_mut().zip(&mut self.biases) {
            for r in 0..a.nrows() {
                for c in 0..a.ncols() {
                    a[(r, c)] = packed[i];
                    i += 1;
                }
            }
            for v in b.iter_mut() {
                *v = packed[i];
                i += 1;
            }
        }
        Ok(())
    }
}

impl MlpGradient {
    /// Same flattening order as [`Mlp::pack`].
    pub fn pack(&self) -> DVector<f64> {
        let mut out = Vec::new();
        for (a, b) in self.weights.iter().zip(&self.biases) {
            for r in 0..a.nrows() {
                for c in 0..a.ncols() {
                    out.push(a[(r, c)]);
                }
            }
            out.extend(b.iter().copied());
        }
        DVector::from_vec(out)
    }
}

/// The two coefficient networks of one polygon class: `phi_net` fitted to
/// boundary traces, `q_net` with the same topology fine-tuned on tangential
/// derivatives.
#[derive(Debug, Clone)]
pub struct PredictorPair {
    pub class: PolygonClass,
    pub phi_net: Mlp,
    pub q_net: Mlp,
}

impl PredictorPair {
    /// Coefficient vectors (c_phi, c_q) for one encoded input, guarding the
    /// class/topology contract.
    pub fn coefficients(&self, x0_coef: &[f64]) -> Result<(DVector<f64>, DVector<f64>)> {
        if self.phi_net.layer_sizes() != self.q_net.layer_sizes() {
            return Err(Error::Mismatch(
                "predictor pair has diverging topologies".into(),
            ));
        }
        if Some(x0_coef.len()) != self.class.input_dim()
            || x0_coef.len() != self.phi_net.input_dim()
        {
            return Err(Error::Mismatch(format!(
                "class {} expects {:?} inputs, got {} (network takes {})",
                self.class.label(),
                self.class.input_dim(),
                x0_coef.len(),
                self.phi_net.input_dim()
            )));
        }
        let x = DMatrix::from_column_slice(x0_coef.len(), 1, x0_coef);
        let c_phi = self.phi_net.forward(&x)?.column(0).into_owned();
        let c_q = self.q_net.forward(&x)?.column(0).into_owned();
        Ok((c_phi, c_q))
    }
}

/// Values and physical-frame gradients of the basis function described by
/// `(c_phi, c_q)` on the frame element, at physical points. Values chain
/// through the frame directly; gradients push back through its transposed
/// linear part.
pub fn evaluate_with_coefficients(
    space: &ApproxSpace,
    c_phi: &DVector<f64>,
    c_q: &DVector<f64>,
    enc: &EncodedInput,
    points: &[Point2],
) -> Result<(Vec<f64>, Vec<Vector2<f64>>)> {
    if c_phi.len() != space.dim() || c_q.len() != space.dim() {
        return Err(Error::Mismatch(format!(
            "coefficient length {} vs space dimension {}",
            c_phi.len(),
            space.dim()
        )));
    }
    let mapped: Vec<Point2> = points.iter().map(|&p| enc.frame.apply(p)).collect();
    let block = vandermonde(space, &mapped);
    let values = (&block.v * c_phi).iter().copied().collect();
    let g1 = &block.v_x1 * c_q;
    let g2 = &block.v_x2 * c_q;
    let lt = enc.frame.linear.transpose();
    let gradients = g1
        .iter()
        .zip(g2.iter())
        .map(|(&a, &b)| lt * Vector2::new(a, b))
        .collect();
    Ok((values, gradients))
}

/// ENCODE output to basis values: run both networks and evaluate. The
/// approximation space must live on the frame element the encoding targets.
pub fn predict_basis(
    pair: &PredictorPair,
    space: &ApproxSpace,
    enc: &EncodedInput,
    points: &[Point2],
) -> Result<(Vec<f64>, Vec<Vector2<f64>>)> {
    let (c_phi, c_q) = pair.coefficients(&enc.x0_coef)?;
    evaluate_with_coefficients(space, &c_phi, &c_q, enc, points)
}
