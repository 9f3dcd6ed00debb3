use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::basis::{build_basis, BasisMatrices};
use super::blocks::{
    dewp_forward, input_embed, DewpOutput, InferenceVars, InputVars, StackVars, TimeExpansionVars,
    VariableExpansionVars,
};
use super::config::ModelConfig;
use super::params::{fan_in_uniform, uniform, ParamSet};
use super::Forecaster;
use crate::autodiff::{Tape, Tensor, Var};
use crate::data::WindowSample;
use crate::error::{Error, Result};

const EMBED_INIT: f64 = 0.05;

#[derive(Clone, Debug, PartialEq)]
struct InputLayout {
    w_features: usize,
    b_features: usize,
    month: usize,
    weekday: usize,
    hour: usize,
    w_mix: usize,
    b_mix: usize,
}

#[derive(Clone, Debug, PartialEq)]
struct StackLayout {
    kernels: [usize; 4],
    biases: [usize; 4],
    w_z: usize,
    b_z: usize,
    w_rho: usize,
    b_rho: usize,
    w_q: usize,
    b_q: usize,
    w_k: usize,
    b_k: usize,
    w_v: usize,
    b_v: usize,
    w_o: usize,
    b_o: usize,
}

/// The full expansion network: input embedding plus `M` stacks, each with
/// variable expansion, time expansion and an inference head.
#[derive(Clone, Debug)]
pub struct DewpModel {
    config: ModelConfig,
    params: ParamSet,
    input: InputLayout,
    stacks: Vec<StackLayout>,
    basis: BasisMatrices,
}

impl DewpModel {
    /// Seeded initialization: fan-in uniform weights, zero biases, small
    /// uniform embedding tables.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = &config;
        let mut p = ParamSet::new();

        let input = InputLayout {
            w_features: p.push(
                "input.w_features",
                fan_in_uniform(&mut rng, &[c.conv_channels, c.input_dim], c.input_dim),
            ),
            b_features: p.push("input.b_features", Tensor::zeros(&[c.conv_channels])),
            month: p.push("input.month_table", uniform(&mut rng, &[12, c.embed_month], EMBED_INIT)),
            weekday: p.push("input.weekday_table", uniform(&mut rng, &[7, c.embed_weekday], EMBED_INIT)),
            hour: p.push("input.hour_table", uniform(&mut rng, &[24, c.embed_hour], EMBED_INIT)),
            w_mix: p.push(
                "input.w_mix",
                fan_in_uniform(&mut rng, &[c.hidden, c.embed_input_width()], c.embed_input_width()),
            ),
            b_mix: p.push("input.b_mix", Tensor::zeros(&[c.hidden])),
        };

        let (l, h, dv, cc, k) = (c.lookback, c.horizon, c.hidden, c.conv_channels, c.kernel_size);
        let mut stacks = Vec::with_capacity(c.stacks);
        for s in 0..c.stacks {
            let widths = [(dv, cc), (cc, cc), (cc, cc), (cc, dv)];
            let mut kernels = [0; 4];
            let mut biases = [0; 4];
            for (layer, &(c_in, c_out)) in widths.iter().enumerate() {
                kernels[layer] = p.push(
                    format!("stack{s}.ve.kernel{layer}"),
                    fan_in_uniform(&mut rng, &[c_out, c_in, k], c_in * k),
                );
                biases[layer] = p.push(format!("stack{s}.ve.bias{layer}"), Tensor::zeros(&[c_out]));
            }
            let mut dense = |p: &mut ParamSet, name: &str, rows: usize, cols: usize, fan_in: usize| {
                p.push(format!("stack{s}.{name}"), fan_in_uniform(&mut rng, &[rows, cols], fan_in))
            };
            let w_z = dense(&mut p, "te.w_z", l, dv, l);
            let w_rho = dense(&mut p, "te.w_rho", dv, l + h, dv);
            let w_q = dense(&mut p, "inf.w_q", h, dv, h);
            let w_k = dense(&mut p, "inf.w_k", h, dv, h);
            let w_v = dense(&mut p, "inf.w_v", h, dv, h);
            let w_o = dense(&mut p, "inf.w_o", h, dv * dv, dv * dv);
            let mut zeros = |name: &str, n: usize| p.push(format!("stack{s}.{name}"), Tensor::zeros(&[n]));
            stacks.push(StackLayout {
                kernels,
                biases,
                w_z,
                b_z: zeros("te.b_z", dv),
                w_rho,
                b_rho: zeros("te.b_rho", l + h),
                w_q,
                b_q: zeros("inf.b_q", dv),
                w_k,
                b_k: zeros("inf.b_k", dv),
                w_v,
                b_v: zeros("inf.b_v", dv),
                w_o,
                b_o: zeros("inf.b_o", h),
            });
        }

        Ok(DewpModel {
            basis: build_basis(c.lookback, c.horizon),
            config,
            params: p,
            input,
            stacks,
        })
    }

    /// Rebuilds a model from stored parameters, checking names and shapes.
    pub fn from_params(config: ModelConfig, params: &ParamSet) -> Result<Self> {
        let mut model = DewpModel::new(config, 0)?;
        model.params.assign(params)?;
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn basis(&self) -> &BasisMatrices {
        &self.basis
    }

    pub fn input_vars(&self, leaves: &[Var]) -> InputVars {
        let i = &self.input;
        InputVars {
            w_features: leaves[i.w_features],
            b_features: leaves[i.b_features],
            month_table: leaves[i.month],
            weekday_table: leaves[i.weekday],
            hour_table: leaves[i.hour],
            w_mix: leaves[i.w_mix],
            b_mix: leaves[i.b_mix],
        }
    }

    pub fn stack_vars(&self, leaves: &[Var]) -> Vec<StackVars> {
        self.stacks
            .iter()
            .map(|s| StackVars {
                ve: VariableExpansionVars {
                    kernels: s.kernels.map(|i| leaves[i]),
                    biases: s.biases.map(|i| leaves[i]),
                },
                te: TimeExpansionVars {
                    w_z: leaves[s.w_z],
                    b_z: leaves[s.b_z],
                    w_rho: leaves[s.w_rho],
                    b_rho: leaves[s.b_rho],
                },
                inf: InferenceVars {
                    w_q: leaves[s.w_q],
                    w_k: leaves[s.w_k],
                    w_v: leaves[s.w_v],
                    b_q: leaves[s.b_q],
                    b_k: leaves[s.b_k],
                    b_v: leaves[s.b_v],
                    w_o: leaves[s.w_o],
                    b_o: leaves[s.b_o],
                },
            })
            .collect()
    }

    fn check_sample(&self, sample: &WindowSample) -> Result<()> {
        let c = &self.config;
        if sample.channels != c.input_dim || sample.lookback_len() != c.lookback {
            return Err(Error::dim(
                "dewp_input",
                &[c.input_dim, c.lookback],
                &[sample.channels, sample.lookback_len()],
            ));
        }
        Ok(())
    }

    /// Forward pass exposing every stack's residual input, backcast,
    /// forecast and attention weights.
    pub fn forward_detailed(&self, tape: &mut Tape, leaves: &[Var], sample: &WindowSample) -> Result<DewpOutput> {
        self.check_sample(sample)?;
        let x0 = input_embed(tape, sample, &self.input_vars(leaves))?;
        let stacks = self.stack_vars(leaves);
        let basis = self.basis.bind(tape);
        dewp_forward(tape, x0, &stacks, &basis, self.config.heads)
    }
}

impl Forecaster for DewpModel {
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
        Ok(self.forward_detailed(tape, leaves, sample)?.y)
    }
}
