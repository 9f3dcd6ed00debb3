//! The expansion network and the interface shared by all forecasters.

mod basis;
mod blocks;
mod config;
mod dewp;
mod params;

pub use basis::{backcast_grid, build_basis, forecast_grid, BasisMatrices, BasisVars};
pub use blocks::{
    dewp_forward, expansion_coefficients, inference, input_embed, mse_loss, project_coefficients,
    time_expansion, variable_expansion, DewpOutput, InferenceOutput, InferenceVars, InputVars,
    StackTrace, StackVars, TimeExpansionVars, VariableExpansionVars,
};
pub use config::ModelConfig;
pub use dewp::DewpModel;
pub use params::{Param, ParamSet};

pub(crate) use params::fan_in_uniform;

use crate::autodiff::{Tape, Var};
use crate::data::WindowSample;
use crate::error::Result;

/// A model mapping one lookback window to an `H`-step power forecast.
pub trait Forecaster {
    fn lookback(&self) -> usize;
    fn horizon(&self) -> usize;
    fn params(&self) -> &ParamSet;
    fn params_mut(&mut self) -> &mut ParamSet;

    /// Records the forward pass for `sample`. `leaves` are the model's
    /// parameters bound on `tape`, in [`ParamSet`] order.
    fn forward(&self, tape: &mut Tape, leaves: &[Var], sample: &WindowSample) -> Result<Var>;

    fn predict(&self, sample: &WindowSample) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let leaves = self.params().bind_constants(&mut tape);
        let y = self.forward(&mut tape, &leaves, sample)?;
        Ok(tape.value(y).data().to_vec())
    }
}
