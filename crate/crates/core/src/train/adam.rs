use serde::{Deserialize, Serialize};

use super::TrainConfig;
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::model::ParamSet;

/// First and second moment estimates for every parameter tensor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub t: u64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl OptimizerState {
    pub fn new(params: &ParamSet) -> Self {
        let zeros: Vec<Tensor> = params.iter().map(|p| Tensor::zeros(p.value.shape())).collect();
        OptimizerState {
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// Errors unless the moments line up with `params` tensor by tensor.
    pub fn check_matches(&self, params: &ParamSet) -> Result<()> {
        if self.m.len() != params.len() || self.v.len() != params.len() {
            return Err(Error::Contract(format!(
                "optimizer state holds {} tensors, model has {}",
                self.m.len(),
                params.len()
            )));
        }
        for ((p, m), v) in params.iter().zip(&self.m).zip(&self.v) {
            if m.shape() != p.value.shape() || v.shape() != p.value.shape() {
                return Err(Error::Contract(format!(
                    "optimizer moments for `{}` have shape {:?}, parameter has {:?}",
                    p.name,
                    m.shape(),
                    p.value.shape()
                )));
            }
        }
        Ok(())
    }
}

/// One bias-corrected Adam update. `grads[i]` is the flat gradient of
/// parameter `i`.
pub fn adam_step(params: &mut ParamSet, grads: &[Vec<f64>], state: &mut OptimizerState, cfg: &TrainConfig) -> Result<()> {
    state.check_matches(params)?;
    if grads.len() != params.len() {
        return Err(Error::Contract(format!(
            "{} gradients for {} parameters",
            grads.len(),
            params.len()
        )));
    }
    for (i, g) in grads.iter().enumerate() {
        if g.len() != params.get(i).len() {
            return Err(Error::dim("adam_step", params.get(i).shape(), &[g.len()]));
        }
    }

    state.t += 1;
    let t = state.t as i32;
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for (i, g) in grads.iter().enumerate() {
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        let theta = params.get_mut(i).data_mut();
        for j in 0..g.len() {
            m[j] = b1 * m[j] + (1.0 - b1) * g[j];
            v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
            let m_hat = m[j] / c1;
            let v_hat = v[j] / c2;
            theta[j] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scalar_params(x: f64) -> ParamSet {
        let mut p = ParamSet::new();
        p.push("x", Tensor::scalar(x));
        p
    }

    // Textbook scalar Adam.
    fn oracle(x0: f64, grads: &[f64], lr: f64, b1: f64, b2: f64, eps: f64) -> f64 {
        let (mut x, mut m, mut v) = (x0, 0.0, 0.0);
        for (k, g) in grads.iter().enumerate() {
            let t = (k + 1) as i32;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            x -= lr * (m / (1.0 - b1.powi(t))) / ((v / (1.0 - b2.powi(t))).sqrt() + eps);
        }
        x
    }

    #[test]
    fn zero_gradient_keeps_parameters_and_counts_step() {
        let cfg = TrainConfig::default();
        let mut p = scalar_params(1.5);
        let mut s = OptimizerState::new(&p);
        adam_step(&mut p, &[vec![0.0]], &mut s, &cfg).unwrap();
        assert_eq!(p.get(0).item(), Some(1.5));
        assert_eq!(s.t, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let cfg = TrainConfig {
            learning_rate: 0.01,
            ..TrainConfig::default()
        };
        let mut p = scalar_params(0.0);
        let mut s = OptimizerState::new(&p);
        adam_step(&mut p, &[vec![3.0]], &mut s, &cfg).unwrap();
        let expected = -0.01 * 3.0 / (3.0 + 1e-8);
        assert!((p.get(0).item().unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn matches_scalar_oracle_on_random_problems() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..200 {
            let cfg = TrainConfig {
                learning_rate: rng.gen_range(1e-4..1e-1),
                beta1: rng.gen_range(0.5..0.99),
                beta2: rng.gen_range(0.9..0.9999),
                ..TrainConfig::default()
            };
            let x0 = rng.gen_range(-3.0..3.0);
            let grads: Vec<f64> = (0..rng.gen_range(1..30)).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let mut p = scalar_params(x0);
            let mut s = OptimizerState::new(&p);
            for g in &grads {
                adam_step(&mut p, &[vec![*g]], &mut s, &cfg).unwrap();
            }
            let want = oracle(x0, &grads, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps);
            assert!((p.get(0).item().unwrap() - want).abs() < 1e-12);
            assert_eq!(s.t, grads.len() as u64);
        }
    }

    #[test]
    fn constant_gradient_decreases_monotonically() {
        let cfg = TrainConfig::default();
        let mut p = scalar_params(1.0);
        let mut s = OptimizerState::new(&p);
        let mut prev = 1.0;
        for _ in 0..100 {
            adam_step(&mut p, &[vec![0.7]], &mut s, &cfg).unwrap();
            let x = p.get(0).item().unwrap();
            assert!(x < prev);
            prev = x;
        }
    }

    #[test]
    fn mismatched_state_is_rejected() {
        let cfg = TrainConfig::default();
        let mut p = scalar_params(1.0);
        let mut other = ParamSet::new();
        other.push("x", Tensor::zeros(&[2]));
        let mut s = OptimizerState::new(&other);
        assert!(matches!(
            adam_step(&mut p, &[vec![1.0]], &mut s, &cfg),
            Err(Error::Contract(_))
        ));
        let mut s = OptimizerState::new(&p);
        assert!(adam_step(&mut p, &[vec![1.0, 2.0]], &mut s, &cfg).is_err());
        assert_eq!(s.t, 0);
    }
}
