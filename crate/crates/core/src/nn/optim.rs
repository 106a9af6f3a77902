//! AdamW with decoupled weight decay and bias-corrected moments.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use super::tensor::{Scalar, Tensor};
use super::NnError;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState<S> {
    pub config: AdamWConfig,
    pub step: u64,
    /// Per-parameter `(m, v)`, created on first update.
    pub moments: IndexMap<String, (Tensor<S>, Tensor<S>)>,
}

impl<S: Scalar> OptimizerState<S> {
    pub fn new(config: AdamWConfig) -> Self {
        Self {
            config,
            step: 0,
            moments: IndexMap::new(),
        }
    }
}

/// One AdamW update at learning rate `lr` for every parameter in `grads`.
pub fn adamw_step<S: Scalar>(
    params: &mut ParamStore<S>,
    grads: &IndexMap<String, Tensor<S>>,
    state: &mut OptimizerState<S>,
    lr: f64,
) -> Result<(), NnError> {
    for (name, g) in grads {
        let w = params.get(name)?;
        if w.shape() != g.shape() {
            return Err(NnError::ShapeMismatch {
                expected: w.shape().to_vec(),
                found: g.shape().to_vec(),
            });
        }
        if let Some((m, _)) = state.moments.get(name) {
            if m.shape() != g.shape() {
                return Err(NnError::ShapeMismatch {
                    expected: m.shape().to_vec(),
                    found: g.shape().to_vec(),
                });
            }
        }
    }
    state.step += 1;
    let cfg = state.config;
    let t = state.step as i32;
    let bc1 = S::from_f64(1.0 - cfg.beta1.powi(t));
    let bc2 = S::from_f64(1.0 - cfg.beta2.powi(t));
    let (b1, b2) = (S::from_f64(cfg.beta1), S::from_f64(cfg.beta2));
    let one = S::one();
    let eps = S::from_f64(cfg.eps);
    let lr_s = S::from_f64(lr);
    let decay = S::from_f64(lr * cfg.weight_decay);

    for (name, g) in grads {
        let (m, v) = state
            .moments
            .entry(name.clone())
            .or_insert_with(|| (Tensor::zeros(g.shape()), Tensor::zeros(g.shape())));
        let w = params.get_mut(name)?;
        let (wd, md, vd) = (w.data_mut(), m.data_mut(), v.data_mut());
        for i in 0..g.len() {
            let gi = g.data()[i];
            md[i] = b1 * md[i] + (one - b1) * gi;
            vd[i] = b2 * vd[i] + (one - b2) * gi * gi;
            let m_hat = md[i] / bc1;
            let v_hat = vd[i] / bc2;
            let w0 = wd[i];
            let delta = decay * w0 + lr_s * m_hat / (v_hat.sqrt() + eps);
            // A zero step must not touch the bits (e.g. the sign of -0.0).
            if delta != S::zero() {
                wd[i] = w0 - delta;
            }
        }
    }
    Ok(())
}

/// Rescales `grads` in place so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm<S: Scalar>(grads: &mut IndexMap<String, Tensor<S>>, max_norm: f64) -> f64 {
    let norm = grads.values().map(Tensor::sq_norm).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = S::from_f64(max_norm / norm);
        for g in grads.values_mut() {
            for x in g.data_mut() {
                *x = *x * s;
            }
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(w: f64, g: f64, lr: f64, wd: f64) -> f64 {
        let mut p = ParamStore::<f64>::new();
        p.insert("w", Tensor::scalar(w));
        let mut grads = IndexMap::new();
        grads.insert("w".to_string(), Tensor::scalar(g));
        let mut st = OptimizerState::new(AdamWConfig {
            weight_decay: wd,
            ..AdamWConfig::default()
        });
        adamw_step(&mut p, &grads, &mut st, lr).unwrap();
        p.get("w").unwrap().data()[0]
    }

    #[test]
    fn first_step_examples() {
        // m_hat = v_hat = 1 after bias correction: step = lr / (1 + eps).
        assert!((single(1.0, 1.0, 0.1, 0.0) - (1.0 - 0.1 / (1.0 + 1e-8))).abs() < 1e-15);
        assert!((single(1.0, 1.0, 0.1, 0.0) - 0.9).abs() < 1e-8);
        assert!((single(1.0, 1.0, 0.1, 0.1) - 0.89).abs() < 1e-8);
        assert_eq!(single(1.0, 0.0, 0.1, 0.0), 1.0);
    }

    #[test]
    fn zero_lr_is_bit_identical() {
        for &w in &[0.3f64, -1e-30, 7.25e10, -0.0] {
            assert_eq!(single(w, 0.7, 0.0, 0.1).to_bits(), w.to_bits());
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut p = ParamStore::<f64>::new();
        p.insert("w", Tensor::zeros(&[2, 2]));
        let mut grads = IndexMap::new();
        grads.insert("w".to_string(), Tensor::zeros(&[4]));
        let mut st = OptimizerState::new(AdamWConfig::default());
        assert!(matches!(
            adamw_step(&mut p, &grads, &mut st, 0.1),
            Err(NnError::ShapeMismatch { .. })
        ));
        assert_eq!(st.step, 0);
    }

    #[test]
    fn clipping_caps_global_norm() {
        let mut grads = IndexMap::new();
        grads.insert("a".to_string(), Tensor::<f64>::from_f64_slice(&[2], &[3.0, 0.0]).unwrap());
        grads.insert("b".to_string(), Tensor::<f64>::from_f64_slice(&[1], &[4.0]).unwrap());
        let n = clip_grad_norm(&mut grads, 1.0);
        assert!((n - 5.0).abs() < 1e-12);
        let after: f64 = grads.values().map(Tensor::sq_norm).sum::<f64>().sqrt();
        assert!((after - 1.0).abs() < 1e-12);
    }
}
