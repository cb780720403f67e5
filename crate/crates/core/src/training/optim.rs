//! First-order (Adam) and quasi-Newton (limited-memory BFGS with a strong
//! Wolfe line search) minimizers over packed parameter vectors.
//!
//! Both run a user-supplied objective returning loss and gradient. A
//! non-finite loss or gradient rolls the parameters back to the last finite
//! iterate and reports divergence, so a caller always keeps a usable
//! checkpoint.

use nalgebra::DVector;
use std::collections::VecDeque;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Passes over the data (one step per pass at full batch).
    pub epochs: usize,
    /// Minibatch size; None means full batch.
    pub batch: Option<usize>,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            epochs: 2000,
            batch: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbfgsConfig {
    pub max_iters: usize,
    /// Stop once the gradient sup-norm drops below this.
    pub grad_tol: f64,
    /// Number of curvature pairs kept for the inverse Hessian model.
    pub memory: usize,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        LbfgsConfig {
            max_iters: 200,
            grad_tol: 1e-10,
            memory: 20,
        }
    }
}

fn finite(loss: f64, grad: &DVector<f64>) -> bool {
    loss.is_finite() && grad.iter().all(|v| v.is_finite())
}

/// Run `steps` Adam updates on `x`. Returns the loss seen at each step.
/// On divergence `x` is left at the last finite iterate.
pub fn adam<F>(x: &mut DVector<f64>, steps: usize, cfg: &AdamConfig, mut eval: F) -> Result<Vec<f64>>
where
    F: FnMut(&DVector<f64>) -> Result<(f64, DVector<f64>)>,
{
    let n = x.len();
    let mut m: DVector<f64> = DVector::zeros(n);
    let mut v: DVector<f64> = DVector::zeros(n);
    let mut history = Vec::with_capacity(steps);
    let mut last_good = x.clone();
    for step in 1..=steps {
        let (loss, grad) = eval(x)?;
        if !finite(loss, &grad) {
            *x = last_good;
            return Err(Error::TrainingDiverged(format!(
                "non-finite loss at Adam step {step}; checkpoint from step {} kept",
                step - 1
            )));
        }
        last_good.copy_from(x);
        history.push(loss);
        let b1c = 1.0 - cfg.beta1.powi(step as i32);
        let b2c = 1.0 - cfg.beta2.powi(step as i32);
        for i in 0..n {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grad[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
            let mh = m[i] / b1c;
            let vh = v[i] / b2c;
            x[i] -= cfg.learning_rate * mh / (vh.sqrt() + cfg.epsilon);
        }
    }
    Ok(history)
}

struct Pair {
    s: DVector<f64>,
    y: DVector<f64>,
    rho: f64,
}

/// Two-loop recursion: apply the inverse Hessian model to the gradient.
fn lbfgs_direction(grad: &DVector<f64>, pairs: &VecDeque<Pair>) -> DVector<f64> {
    let mut q = grad.clone();
    let mut alphas = Vec::with_capacity(pairs.len());
    for p in pairs.iter().rev() {
        let a = p.rho * p.s.dot(&q);
        q.axpy(-a, &p.y, 1.0);
        alphas.push(a);
    }
    if let Some(last) = pairs.back() {
        let gamma = last.s.dot(&last.y) / last.y.dot(&last.y);
        q *= gamma;
    }
    for (p, &a) in pairs.iter().zip(alphas.iter().rev()) {
        let b = p.rho * p.y.dot(&q);
        q.axpy(a - b, &p.s, 1.0);
    }
    -q
}

const WOLFE_C1: f64 = 1e-4;
const WOLFE_C2: f64 = 0.9;

struct LinePoint {
    alpha: f64,
    f: f64,
    g: DVector<f64>,
    dphi: f64,
}

/// Strong Wolfe line search along `d` (bracket then bisect). Non-finite
/// trial values are treated as overshoot, which shrinks the bracket instead
/// of aborting. Returns None when no acceptable step exists numerically.
fn wolfe_search<F>(
    eval: &mut F,
    x: &DVector<f64>,
    f0: f64,
    dphi0: f64,
    d: &DVector<f64>,
) -> Result<Option<LinePoint>>
where
    F: FnMut(&DVector<f64>) -> Result<(f64, DVector<f64>)>,
{
    let probe = |eval: &mut F, alpha: f64| -> Result<LinePoint> {
        let xt = x + alpha * d;
        let (f, g) = eval(&xt)?;
        let dphi = g.dot(d);
        Ok(LinePoint { alpha, f, g, dphi })
    };
    let armijo = |p: &LinePoint| p.f <= f0 + WOLFE_C1 * p.alpha * dphi0 && p.f.is_finite();
    let curvature = |p: &LinePoint| p.dphi.abs() <= -WOLFE_C2 * dphi0 && p.dphi.is_finite();

    let zoom = |eval: &mut F, mut lo: LinePoint, mut hi_alpha: f64, mut hi_f: f64| -> Result<Option<LinePoint>> {
        for _ in 0..40 {
            let mid = 0.5 * (lo.alpha + hi_alpha);
            let p = probe(eval, mid)?;
            if !armijo(&p) || p.f >= lo.f {
                hi_alpha = mid;
                hi_f = p.f;
            } else {
                if curvature(&p) {
                    return Ok(Some(p));
                }
                if p.dphi * (hi_alpha - lo.alpha) >= 0.0 {
                    hi_alpha = lo.alpha;
                    hi_f = lo.f;
                }
                lo = p;
            }
            if (hi_alpha - lo.alpha).abs() < 1e-14 * (1.0 + lo.alpha.abs()) {
                break;
            }
        }
        let _ = hi_f;
        // The bracket collapsed; keep the best sufficient-decrease point.
        if lo.alpha > 0.0 && lo.f < f0 {
            Ok(Some(lo))
        } else {
            Ok(None)
        }
    };

    let mut prev = LinePoint {
        alpha: 0.0,
        f: f0,
        g: DVector::zeros(x.len()),
        dphi: dphi0,
    };
    let mut alpha = 1.0;
    for i in 0..20 {
        let p = probe(eval, alpha)?;
        if !armijo(&p) || (i > 0 && p.f >= prev.f) {
            return zoom(eval, prev, p.alpha, p.f);
        }
        if curvature(&p) {
            return Ok(Some(p));
        }
        if p.dphi >= 0.0 {
            let hi_alpha = prev.alpha;
            let hi_f = prev.f;
            return zoom(eval, p, hi_alpha, hi_f);
        }
        alpha = (2.0 * p.alpha).min(1e4);
        prev = p;
    }
    if prev.alpha > 0.0 && prev.f < f0 {
        Ok(Some(prev))
    } else {
        Ok(None)
    }
}

/// Limited-memory BFGS with strong Wolfe steps; the returned history is the
/// accepted (monotone) loss sequence. On divergence `x` keeps the last
/// finite iterate.
pub fn lbfgs<F>(x: &mut DVector<f64>, cfg: &LbfgsConfig, mut eval: F) -> Result<Vec<f64>>
where
    F: FnMut(&DVector<f64>) -> Result<(f64, DVector<f64>)>,
{
    let (mut f, mut g) = eval(x)?;
    if !finite(f, &g) {
        return Err(Error::TrainingDiverged(
            "non-finite loss at the quasi-Newton start".into(),
        ));
    }
    let mut history = vec![f];
    let mut pairs: VecDeque<Pair> = VecDeque::new();
    for _ in 0..cfg.max_iters {
        if g.amax() < cfg.grad_tol {
            break;
        }
        let mut d = lbfgs_direction(&g, &pairs);
        let mut dphi0 = g.dot(&d);
        if !dphi0.is_finite() || dphi0 >= 0.0 {
            // Model lost positive definiteness; restart from steepest descent.
            pairs.clear();
            d = -&g;
            dphi0 = g.dot(&d);
        }
        let Some(p) = wolfe_search(&mut eval, x, f, dphi0, &d)? else {
            break;
        };
        if !finite(p.f, &p.g) {
            return Err(Error::TrainingDiverged(format!(
                "non-finite loss after {} quasi-Newton steps; checkpoint kept",
                history.len() - 1
            )));
        }
        let s = p.alpha * &d;
        let y = &p.g - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            if pairs.len() == cfg.memory.max(1) {
                pairs.pop_front();
            }
            pairs.push_back(Pair {
                rho: 1.0 / sy,
                s,
                y,
            });
        }
        *x += p.alpha * &d;
        f = p.f;
        g = p.g;
        history.push(f);
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_reaches_a_quadratic_minimum() {
        let target = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let mut x = DVector::zeros(3);
        let cfg = AdamConfig {
            learning_rate: 0.05,
            epochs: 600,
            ..AdamConfig::default()
        };
        let t = target.clone();
        let hist = adam(&mut x, 600, &cfg, |p| {
            let d = p - &t;
            Ok((d.norm_squared(), 2.0 * d))
        })
        .unwrap();
        assert_eq!(hist.len(), 600);
        assert!((x - target).amax() < 1e-4);
        assert!(hist[599] < hist[0]);
    }

    #[test]
    fn lbfgs_solves_rosenbrock() {
        let mut x = DVector::from_vec(vec![-1.2, 1.0]);
        let cfg = LbfgsConfig {
            max_iters: 200,
            grad_tol: 1e-10,
            memory: 10,
        };
        let hist = lbfgs(&mut x, &cfg, |p| {
            let (a, b) = (p[0], p[1]);
            let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
            let g = DVector::from_vec(vec![
                -2.0 * (1.0 - a) - 400.0 * a * (b - a * a),
                200.0 * (b - a * a),
            ]);
            Ok((f, g))
        })
        .unwrap();
        assert!((x[0] - 1.0).abs() < 1e-6 && (x[1] - 1.0).abs() < 1e-6);
        // Wolfe steps never increase the objective.
        assert!(hist.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn divergence_rolls_back_to_the_last_finite_point() {
        let mut x = DVector::from_vec(vec![0.0]);
        let mut calls = 0;
        let err = adam(&mut x, 100, &AdamConfig::default(), |p| {
            calls += 1;
            if calls > 5 {
                Ok((f64::NAN, DVector::from_vec(vec![f64::NAN])))
            } else {
                Ok((p[0] * p[0], DVector::from_vec(vec![2.0 * p[0]])))
            }
        })
        .unwrap_err();
        assert!(matches!(err, Error::TrainingDiverged(_)));
        assert!(x[0].is_finite());
    }

    #[test]
    fn lbfgs_stops_on_flat_gradients() {
        let mut x = DVector::from_vec(vec![3.0]);
        let hist = lbfgs(&mut x, &LbfgsConfig::default(), |p| {
            Ok((p[0] * p[0], DVector::from_vec(vec![2.0 * p[0]])))
        })
        .unwrap();
        assert!(x[0].abs() < 1e-9);
        assert!(hist.len() >= 2);
    }
}
