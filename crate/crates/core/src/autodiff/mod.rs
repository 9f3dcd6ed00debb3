//! Dense `f64` tensors with reverse-mode differentiation.

mod tape;
mod tensor;

pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

use crate::error::{Error, Result};

/// Reduces a tensor-valued output to a scalar with a fixed non-uniform
/// weighting, so that outputs whose plain sum is constant (softmax rows)
/// still produce an informative gradient.
fn scalarize(tape: &mut Tape, out: Var) -> Result<Var> {
    let t = tape.value(out);
    if t.len() == 1 {
        return Ok(out);
    }
    let weights: Vec<f64> = (0..t.len())
        .map(|i| 1.0 + 0.1 * ((i * 7 % 11) as f64))
        .collect();
    let w = tape.constant(Tensor::new(t.shape().to_vec(), weights)?);
    let prod = tape.mul(out, w)?;
    Ok(tape.sum(prod))
}

fn eval_scalar<F>(f: &F, inputs: &[Tensor]) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let s = scalarize(&mut tape, out)?;
    Ok(tape.value(s).data()[0])
}

/// Analytic gradients of `f` with respect to every input.
pub fn analytic_gradients<F>(f: &F, inputs: &[Tensor]) -> Result<Vec<Vec<f64>>>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let s = scalarize(&mut tape, out)?;
    let mut grads = tape.backward(s)?;
    Ok(vars
        .iter()
        .map(|v| grads.take(*v).expect("inputs are grad-enabled"))
        .collect())
}

/// Central-difference gradients of `f` with respect to every input.
pub fn numeric_gradients<F>(f: &F, inputs: &[Tensor], step: f64) -> Result<Vec<Vec<f64>>>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    if !(step > 0.0) {
        return Err(Error::Contract(format!("finite-difference step must be positive, got {step}")));
    }
    let mut work = inputs.to_vec();
    let mut out = Vec::with_capacity(inputs.len());
    for k in 0..inputs.len() {
        let mut g = vec![0.0; inputs[k].len()];
        for (i, gi) in g.iter_mut().enumerate() {
            let orig = work[k].data()[i];
            work[k].data_mut()[i] = orig + step;
            let plus = eval_scalar(f, &work)?;
            work[k].data_mut()[i] = orig - step;
            let minus = eval_scalar(f, &work)?;
            work[k].data_mut()[i] = orig;
            *gi = (plus - minus) / (2.0 * step);
        }
        out.push(g);
    }
    Ok(out)
}

/// Largest `|analytic - numeric| / max(1, |analytic|)` over all coordinates
/// of all inputs.
pub fn grad_check_many<F>(f: F, inputs: &[Tensor], step: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let numeric = numeric_gradients(&f, inputs, step)?;
    let analytic = analytic_gradients(&f, inputs)?;
    Ok(analytic
        .iter()
        .flatten()
        .zip(numeric.iter().flatten())
        .map(|(a, n)| (a - n).abs() / a.abs().max(1.0))
        .fold(0.0, f64::max))
}

/// Single-input form of [`grad_check_many`].
pub fn grad_check<F>(f: F, x: &Tensor, step: f64) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    grad_check_many(|tape, vars| f(tape, vars[0]), std::slice::from_ref(x), step)
}
