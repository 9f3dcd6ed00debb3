use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor, Var};
use crate::data::WindowSample;
use crate::error::{Error, Result};
use crate::model::{fan_in_uniform, Forecaster, ParamSet};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearConfig {
    pub input_dim: usize,
    pub lookback: usize,
    pub horizon: usize,
    pub hidden: usize,
}

impl LinearConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("input_dim", self.input_dim),
            ("lookback", self.lookback),
            ("horizon", self.horizon),
            ("hidden", self.hidden),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("linear baseline {name} must be positive")));
            }
        }
        Ok(())
    }
}

/// Two dense layers with a ReLU between them, applied to the flattened
/// `d×L` lookback block.
#[derive(Clone, Debug)]
pub struct LinearBaseline {
    config: LinearConfig,
    params: ParamSet,
}

const W1: usize = 0;
const B1: usize = 1;
const W2: usize = 2;
const B2: usize = 3;

impl LinearBaseline {
    pub fn new(config: LinearConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let flat = config.input_dim * config.lookback;
        let mut params = ParamSet::new();
        params.push("linear.w1", fan_in_uniform(&mut rng, &[config.hidden, flat], flat));
        params.push("linear.b1", Tensor::zeros(&[config.hidden, 1]));
        params.push(
            "linear.w2",
            fan_in_uniform(&mut rng, &[config.horizon, config.hidden], config.hidden),
        );
        params.push("linear.b2", Tensor::zeros(&[config.horizon, 1]));
        Ok(LinearBaseline { config, params })
    }

    pub fn from_params(config: LinearConfig, params: &ParamSet) -> Result<Self> {
        let mut model = LinearBaseline::new(config, 0)?;
        model.params.assign(params)?;
        Ok(model)
    }

    pub fn config(&self) -> &LinearConfig {
        &self.config
    }
}

impl Forecaster for LinearBaseline {
    fn lookback(&self) -> usize {
        self.config.lookback
    }

    fn horizon(&self) -> usize {
        self.config.horizon
    }

    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn forward(&self, tape: &mut Tape, leaves: &[Var], sample: &WindowSample) -> Result<Var> {
        let c = &self.config;
        if sample.channels != c.input_dim || sample.lookback_len() != c.lookback {
            return Err(Error::dim(
                "linear_input",
                &[c.input_dim, c.lookback],
                &[sample.channels, sample.lookback_len()],
            ));
        }
        let x = tape.constant(Tensor::new(vec![c.input_dim * c.lookback, 1], sample.lookback.clone())?);
        let h = tape.matmul(leaves[W1], x)?;
        let h = tape.add(h, leaves[B1])?;
        let h = tape.relu(h);
        let y = tape.matmul(leaves[W2], h)?;
        let y = tape.add(y, leaves[B2])?;
        tape.reshape(y, &[c.horizon])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::grad_check_many;
    use crate::synthetic::random_window;
    use rand::Rng;

    fn config() -> LinearConfig {
        LinearConfig {
            input_dim: 2,
            lookback: 5,
            horizon: 3,
            hidden: 4,
        }
    }

    #[test]
    fn zero_weights_predict_output_bias() {
        let mut m = LinearBaseline::new(config(), 1).unwrap();
        m.params_mut().get_mut(W1).data_mut().fill(0.0);
        m.params_mut().get_mut(W2).data_mut().fill(0.0);
        m.params_mut().get_mut(B2).data_mut().copy_from_slice(&[0.1, -0.2, 0.3]);
        let s = random_window(2, 5, 3, &mut ChaCha8Rng::seed_from_u64(2));
        assert_eq!(m.predict(&s).unwrap(), vec![0.1, -0.2, 0.3]);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let m = LinearBaseline::new(config(), 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = random_window(2, 5, 3, &mut rng);
        let mut inputs: Vec<Tensor> = m.params().iter().map(|p| p.value.clone()).collect();
        for b in [B1, B2] {
            inputs[b].data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-0.3..0.3));
        }
        let f = |tape: &mut Tape, v: &[Var]| {
            let y = m.forward(tape, v, &s)?;
            crate::model::mse_loss(tape, y, &s.target)
        };
        assert!(grad_check_many(f, &inputs, 1e-6).unwrap() < 1e-5);
    }

    #[test]
    fn rejects_wrong_window_shape() {
        let m = LinearBaseline::new(config(), 1).unwrap();
        let s = random_window(3, 5, 3, &mut ChaCha8Rng::seed_from_u64(2));
        assert!(m.predict(&s).is_err());
        assert!(LinearBaseline::new(LinearConfig { hidden: 0, ..config() }, 0).is_err());
    }
}
