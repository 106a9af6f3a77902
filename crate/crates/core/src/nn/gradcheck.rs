//! Central-difference gradient checking.
//!
//! Each checked tensor gets one directional-derivative probe along a random
//! Gaussian direction (this exercises every entry at once) plus single
//! coordinate probes at its largest-magnitude analytic entries.

use indexmap::IndexMap;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::params::{init_normal, ParamStore};
use super::tensor::Tensor;
use super::NnError;

/// A scalar function of a parameter table, evaluated in 64-bit.
pub trait Objective {
    fn value(&self, params: &ParamStore<f64>) -> Result<f64, NnError>;
    /// Value plus reverse-mode gradients for the trainable parameters.
    fn value_and_grad(
        &self,
        params: &ParamStore<f64>,
    ) -> Result<(f64, IndexMap<String, Tensor<f64>>), NnError>;
}

#[derive(Clone, Debug)]
pub struct GradCheckConfig {
    pub h: f64,
    /// Coordinate probes per tensor (largest analytic entries first).
    pub coords_per_tensor: usize,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            h: 1e-5,
            coords_per_tensor: 3,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst: String,
    pub probes: usize,
    pub tensors: usize,
    pub per_tensor: Vec<(String, f64)>,
}

/// Adds `N(0, std²)` noise to every parameter. Moves a freshly initialized
/// model out of the small-weight regime, where many gradients are too small
/// for central differences to resolve.
pub fn jitter(p: &mut ParamStore<f64>, std: f64, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names: Vec<String> = p.names().map(str::to_string).collect();
    for n in names {
        let t = p.get_mut(&n).expect("listed");
        let noise: Tensor<f64> = init_normal(&mut rng, t.shape(), std);
        for (x, e) in t.data_mut().iter_mut().zip(noise.data()) {
            *x += e;
        }
    }
}

/// `|a - n| / max(|a|, |n|, 1e-8)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

pub fn grad_check<O: Objective>(
    objective: &O,
    params: &ParamStore<f64>,
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport, NnError> {
    let (f0, grads) = objective.value_and_grad(params)?;
    if !f0.is_finite() {
        return Err(NnError::NonFiniteValue("objective at base point".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut work = params.clone();
    let h = cfg.h;
    let eval = |work: &ParamStore<f64>| -> Result<f64, NnError> {
        let v = objective.value(work)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(NnError::NonFiniteValue("objective at perturbed point".into()))
        }
    };

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: String::new(),
        probes: 0,
        tensors: 0,
        per_tensor: Vec::new(),
    };
    for (name, g) in &grads {
        let base = params.get(name)?.clone();
        let mut worst = 0.0f64;

        let dir: Tensor<f64> = init_normal(&mut rng, base.shape(), 1.0);
        let analytic: f64 = g.data().iter().zip(dir.data()).map(|(a, b)| a * b).sum();
        let shifted = |sign: f64| {
            let data = base
                .data()
                .iter()
                .zip(dir.data())
                .map(|(w, d)| w + sign * h * d)
                .collect();
            Tensor::new(base.shape().to_vec(), data).expect("same shape")
        };
        *work.get_mut(name)? = shifted(1.0);
        let fp = eval(&work)?;
        *work.get_mut(name)? = shifted(-1.0);
        let fm = eval(&work)?;
        worst = worst.max(relative_error(analytic, (fp - fm) / (2.0 * h)));
        report.probes += 1;

        let mut order: Vec<usize> = (0..g.len()).collect();
        order.sort_by(|&a, &b| g.data()[b].abs().total_cmp(&g.data()[a].abs()).then(a.cmp(&b)));
        for &i in order.iter().take(cfg.coords_per_tensor) {
            let mut t = base.clone();
            t.data_mut()[i] = base.data()[i] + h;
            *work.get_mut(name)? = t.clone();
            let fp = eval(&work)?;
            t.data_mut()[i] = base.data()[i] - h;
            *work.get_mut(name)? = t;
            let fm = eval(&work)?;
            worst = worst.max(relative_error(g.data()[i], (fp - fm) / (2.0 * h)));
            report.probes += 1;
        }
        *work.get_mut(name)? = base;

        if worst >= report.max_rel_error {
            report.max_rel_error = worst;
            report.worst = name.clone();
        }
        report.tensors += 1;
        report.per_tensor.push((name.clone(), worst));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Graph;

    struct Square {
        corrupt: f64,
    }

    impl Square {
        fn forward(&self, p: &ParamStore<f64>) -> Result<(Graph<f64>, crate::nn::Var), NnError> {
            let mut g = Graph::new();
            let w = g.param("w", p.get("w")?, true);
            let y = g.mul(w, w)?;
            let s = g.sum(y);
            Ok((g, s))
        }
    }

    impl Objective for Square {
        fn value(&self, p: &ParamStore<f64>) -> Result<f64, NnError> {
            let (g, s) = self.forward(p)?;
            Ok(g.value(s).data()[0])
        }
        fn value_and_grad(
            &self,
            p: &ParamStore<f64>,
        ) -> Result<(f64, IndexMap<String, Tensor<f64>>), NnError> {
            let (g, s) = self.forward(p)?;
            let mut grads = g.backward(s).named(&g);
            for t in grads.values_mut() {
                for x in t.data_mut() {
                    *x *= self.corrupt;
                }
            }
            Ok((g.value(s).data()[0], grads))
        }
    }

    fn store(w: f64) -> ParamStore<f64> {
        let mut p = ParamStore::new();
        p.insert("w", Tensor::scalar(w));
        p
    }

    #[test]
    fn square_is_exact() {
        let cfg = GradCheckConfig {
            h: 1e-4,
            ..Default::default()
        };
        let r = grad_check(&Square { corrupt: 1.0 }, &store(3.0), &cfg).unwrap();
        assert!(r.max_rel_error < 1e-8, "{r:?}");
    }

    #[test]
    fn doubled_backward_is_detected() {
        let r = grad_check(&Square { corrupt: 2.0 }, &store(3.0), &GradCheckConfig::default()).unwrap();
        assert!((r.max_rel_error - 0.5).abs() < 1e-6, "{r:?}");
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(1e-9, 0.0) - 0.1).abs() < 1e-12);
    }
}
