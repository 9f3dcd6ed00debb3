//! Forward computations of the expansion network, expressed on a [`Tape`].

use super::basis::BasisVars;
use crate::autodiff::{Tape, Tensor, Var};
use crate::data::WindowSample;
use crate::error::{Error, Result};

/// Input projection and calendar embedding tables.
#[derive(Clone, Copy, Debug)]
pub struct InputVars {
    /// `[c, d]`
    pub w_features: Var,
    /// `[c]`
    pub b_features: Var,
    /// `[12, e_month]`
    pub month_table: Var,
    /// `[7, e_weekday]`
    pub weekday_table: Var,
    /// `[24, e_hour]`
    pub hour_table: Var,
    /// `[d_v, c + e_month + e_weekday + e_hour]`
    pub w_mix: Var,
    /// `[d_v]`
    pub b_mix: Var,
}

/// Four convolution layers, `d_v → c → c → c → d_v`.
#[derive(Clone, Copy, Debug)]
pub struct VariableExpansionVars {
    pub kernels: [Var; 4],
    pub biases: [Var; 4],
}

/// Two dense layers producing `L+H` expansion coefficients per channel.
#[derive(Clone, Copy, Debug)]
pub struct TimeExpansionVars {
    /// `[L, d_v]`
    pub w_z: Var,
    /// `[d_v]`
    pub b_z: Var,
    /// `[d_v, L+H]`
    pub w_rho: Var,
    /// `[L+H]`
    pub b_rho: Var,
}

/// Attention over the `d_v` rows of a forecast block plus output projection.
#[derive(Clone, Copy, Debug)]
pub struct InferenceVars {
    /// `[H, d_v]` each
    pub w_q: Var,
    pub w_k: Var,
    pub w_v: Var,
    /// `[d_v]` each
    pub b_q: Var,
    pub b_k: Var,
    pub b_v: Var,
    /// `[H, d_v·d_v]`
    pub w_o: Var,
    /// `[H]`
    pub b_o: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct StackVars {
    pub ve: VariableExpansionVars,
    pub te: TimeExpansionVars,
    pub inf: InferenceVars,
}

/// Builds `X⁽⁰⁾ ∈ R^{d_v×L}` from raw features and calendar embeddings.
pub fn input_embed(tape: &mut Tape, sample: &WindowSample, vars: &InputVars) -> Result<Var> {
    let l = sample.lookback_len();
    let x = tape.constant(Tensor::new(vec![sample.channels, l], sample.lookback.clone())?);
    let projected = tape.matmul(vars.w_features, x)?;
    let features = tape.add_col_broadcast(projected, vars.b_features)?;

    let tf = &sample.time_features;
    let months: Vec<usize> = tf.iter().map(|f| f.month_index).collect();
    let weekdays: Vec<usize> = tf.iter().map(|f| f.weekday_index).collect();
    let hours: Vec<usize> = tf.iter().map(|f| f.hour_index).collect();
    let mut parts = vec![features];
    for (table, idx) in [
        (vars.month_table, months),
        (vars.weekday_table, weekdays),
        (vars.hour_table, hours),
    ] {
        let rows = tape.gather_rows(table, &idx)?;
        parts.push(tape.transpose(rows)?);
    }
    let stacked = tape.concat_rows(&parts)?;
    let mixed = tape.matmul(vars.w_mix, stacked)?;
    tape.add_col_broadcast(mixed, vars.b_mix)
}

/// conv→ReLU ×3 then a final conv without activation; length preserved.
pub fn variable_expansion(tape: &mut Tape, x: Var, vars: &VariableExpansionVars) -> Result<Var> {
    let mut h = x;
    for layer in 0..4 {
        h = tape.conv1d(h, vars.kernels[layer], vars.biases[layer])?;
        if layer < 3 {
            h = tape.relu(h);
        }
    }
    Ok(h)
}

/// Expansion coefficients `ρ ∈ R^{d_v×(L+H)}` (both dense layers use ReLU).
pub fn expansion_coefficients(tape: &mut Tape, z: Var, vars: &TimeExpansionVars) -> Result<Var> {
    let h = tape.matmul(z, vars.w_z)?;
    let h = tape.add_row_broadcast(h, vars.b_z)?;
    let h = tape.relu(h);
    let rho = tape.matmul(h, vars.w_rho)?;
    let rho = tape.add_row_broadcast(rho, vars.b_rho)?;
    Ok(tape.relu(rho))
}

/// Projects coefficients onto the Fourier bases: the first `L` per channel
/// drive the backcast, the last `H` the forecast.
pub fn project_coefficients(tape: &mut Tape, rho: Var, basis: &BasisVars) -> Result<(Var, Var)> {
    let l = tape.value(basis.backcast_t).shape()[0];
    let h = tape.value(basis.forecast_t).shape()[0];
    let width = tape.value(rho).shape()[1];
    if width != l + h {
        return Err(Error::dim("time_expansion", tape.value(rho).shape(), &[l + h]));
    }
    let rho_b = tape.slice_cols(rho, 0, l)?;
    let rho_f = tape.slice_cols(rho, l, l + h)?;
    let backcast = tape.matmul(rho_b, basis.backcast_t)?;
    let forecast = tape.matmul(rho_f, basis.forecast_t)?;
    Ok((backcast, forecast))
}

/// Returns `(backcast [d_v×L], forecast [d_v×H])`.
pub fn time_expansion(
    tape: &mut Tape,
    z: Var,
    vars: &TimeExpansionVars,
    basis: &BasisVars,
) -> Result<(Var, Var)> {
    let rho = expansion_coefficients(tape, z, vars)?;
    project_coefficients(tape, rho, basis)
}

#[derive(Clone, Debug)]
pub struct InferenceOutput {
    /// `[H]`
    pub y: Var,
    /// Per-head `[d_v, d_v]` attention weights.
    pub attention: Vec<Var>,
}

/// Multi-head scaled dot-product attention across the `d_v` rows of the
/// forecast block, then a dense map of the flattened transposed result to `H`.
pub fn inference(tape: &mut Tape, forecast: Var, vars: &InferenceVars, heads: usize) -> Result<InferenceOutput> {
    let (rows, _) = tape
        .value(forecast)
        .dims2()
        .ok_or_else(|| Error::Contract("forecast block must be a matrix".into()))?;
    let q = tape.matmul(forecast, vars.w_q)?;
    let q = tape.add_row_broadcast(q, vars.b_q)?;
    let k = tape.matmul(forecast, vars.w_k)?;
    let k = tape.add_row_broadcast(k, vars.b_k)?;
    let v = tape.matmul(forecast, vars.w_v)?;
    let v = tape.add_row_broadcast(v, vars.b_v)?;

    let width = tape.value(q).shape()[1];
    if heads == 0 || width % heads != 0 {
        return Err(Error::Config(format!("width {width} not divisible by {heads} heads")));
    }
    let dk = width / heads;
    let scale = 1.0 / (dk as f64).sqrt();
    let mut outputs = Vec::with_capacity(heads);
    let mut attention = Vec::with_capacity(heads);
    for head in 0..heads {
        let (a, b) = (head * dk, (head + 1) * dk);
        let qh = tape.slice_cols(q, a, b)?;
        let kh = tape.slice_cols(k, a, b)?;
        let vh = tape.slice_cols(v, a, b)?;
        let kt = tape.transpose(kh)?;
        let logits = tape.matmul(qh, kt)?;
        let logits = tape.scale(logits, scale);
        let weights = tape.softmax_rows(logits)?;
        attention.push(weights);
        outputs.push(tape.matmul(weights, vh)?);
    }
    let attended = if heads == 1 { outputs[0] } else { tape.concat_cols(&outputs)? };
    let transposed = tape.transpose(attended)?;
    let flat = tape.reshape(transposed, &[width * rows, 1])?;
    let y = tape.matmul(vars.w_o, flat)?;
    let n = tape.value(y).len();
    let y = tape.reshape(y, &[n])?;
    let y = tape.add(y, vars.b_o)?;
    Ok(InferenceOutput { y, attention })
}

#[derive(Clone, Debug)]
pub struct StackTrace {
    /// `X⁽ℓ⁾`
    pub input: Var,
    pub backcast: Var,
    pub forecast: Var,
    pub prediction: Var,
    pub attention: Vec<Var>,
}

#[derive(Clone, Debug)]
pub struct DewpOutput {
    /// Sum of every stack's inference output, `[H]`.
    pub y: Var,
    pub stacks: Vec<StackTrace>,
    /// Input a further stack would receive, `X⁽ᴹ⁺¹⁾`.
    pub final_residual: Var,
}

/// Doubly residual composition: each stack's input is the previous input
/// minus its backcast, and the prediction is the sum of stack outputs.
pub fn dewp_forward(
    tape: &mut Tape,
    x0: Var,
    stacks: &[StackVars],
    basis: &BasisVars,
    heads: usize,
) -> Result<DewpOutput> {
    if stacks.is_empty() {
        return Err(Error::Contract("at least one stack is required".into()));
    }
    let mut x = x0;
    let mut y: Option<Var> = None;
    let mut traces = Vec::with_capacity(stacks.len());
    for stack in stacks {
        let z = variable_expansion(tape, x, &stack.ve)?;
        let (backcast, forecast) = time_expansion(tape, z, &stack.te, basis)?;
        let inf = inference(tape, forecast, &stack.inf, heads)?;
        traces.push(StackTrace {
            input: x,
            backcast,
            forecast,
            prediction: inf.y,
            attention: inf.attention,
        });
        x = tape.sub(x, backcast)?;
        y = Some(match y {
            None => inf.y,
            Some(acc) => tape.add(acc, inf.y)?,
        });
    }
    Ok(DewpOutput {
        y: y.expect("non-empty"),
        stacks: traces,
        final_residual: x,
    })
}

/// Mean squared error between a prediction and its target vector.
pub fn mse_loss(tape: &mut Tape, prediction: Var, target: &[f64]) -> Result<Var> {
    let pred_shape = tape.value(prediction).shape().to_vec();
    if pred_shape != [target.len()] {
        return Err(Error::dim("mse_loss", &pred_shape, &[target.len()]));
    }
    let y = tape.constant(Tensor::vector(target.to_vec())?);
    let diff = tape.sub(prediction, y)?;
    let sq = tape.mul(diff, diff)?;
    Ok(tape.mean(sq))
}
