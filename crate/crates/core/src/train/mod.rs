//! Mini-batch Adam on the MSE loss with validation-based early stopping.

mod adam;
mod report;

pub use adam::{adam_step, OptimizerState};
pub use report::{EpochRecord, StopReason, TrainReport};

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tape;
use crate::data::{Dataset, WindowSample};
use crate::error::{Error, Result};
use crate::model::{mse_loss, Forecaster};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    /// Global gradient-norm ceiling; `None` disables clipping.
    pub grad_clip: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 256,
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            max_epochs: 100,
            patience: 10,
            seed: 0,
            grad_clip: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return bad(format!("{name} must be in [0, 1), got {b}"));
            }
        }
        if !(self.eps > 0.0) {
            return bad(format!("eps must be positive, got {}", self.eps));
        }
        if self.patience == 0 {
            return bad("patience must be at least 1".into());
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be at least 1".into());
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                return bad(format!("grad_clip must be positive, got {c}"));
            }
        }
        Ok(())
    }
}

/// Mean of per-window MSE, without recording gradients.
pub fn dataset_mse<F: Forecaster + ?Sized>(model: &F, samples: &[WindowSample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Contract("cannot score an empty window set".into()));
    }
    let mut total = 0.0;
    for s in samples {
        let pred = model.predict(s)?;
        if pred.len() != s.target.len() {
            return Err(Error::dim("dataset_mse", &[pred.len()], &[s.target.len()]));
        }
        let n = pred.len() as f64;
        total += pred.iter().zip(&s.target).map(|(p, y)| (p - y) * (p - y)).sum::<f64>() / n;
    }
    Ok(total / samples.len() as f64)
}

/// Loss and flat per-parameter gradients for one batch. The loss is the
/// mean over windows of each window's MSE.
pub fn batch_gradients<F: Forecaster + ?Sized>(model: &F, batch: &[&WindowSample]) -> Result<(f64, Vec<Vec<f64>>)> {
    if batch.is_empty() {
        return Err(Error::Contract("empty batch".into()));
    }
    let mut tape = Tape::new();
    let leaves = model.params().bind(&mut tape);
    let mut total = None;
    for s in batch {
        let y = model.forward(&mut tape, &leaves, s)?;
        let l = mse_loss(&mut tape, y, &s.target)?;
        total = Some(match total {
            None => l,
            Some(acc) => tape.add(acc, l)?,
        });
    }
    let loss = tape.scale(total.expect("non-empty batch"), 1.0 / batch.len() as f64);
    let mut grads = tape.backward(loss)?;
    let flat = leaves
        .iter()
        .map(|&v| grads.take(v).expect("parameters are grad leaves"))
        .collect();
    Ok((tape.value(loss).data()[0], flat))
}

fn first_non_finite_grad<'a, F: Forecaster + ?Sized>(model: &'a F, grads: &[Vec<f64>]) -> Option<&'a str> {
    model
        .params()
        .iter()
        .zip(grads)
        .find(|(_, g)| g.iter().any(|v| !v.is_finite()))
        .map(|(p, _)| p.name.as_str())
}

fn clip_global_norm(grads: &mut [Vec<f64>], ceiling: f64) {
    let norm = grads.iter().flatten().map(|g| g * g).sum::<f64>().sqrt();
    if norm > ceiling {
        let s = ceiling / norm;
        grads.iter_mut().flatten().for_each(|g| *g *= s);
    }
}

/// One Adam update on `batch`; returns the batch loss before the update.
pub fn train_step<F: Forecaster + ?Sized>(
    model: &mut F,
    batch: &[&WindowSample],
    state: &mut OptimizerState,
    cfg: &TrainConfig,
) -> Result<f64> {
    let (loss, mut grads) = batch_gradients(&*model, batch)?;
    if !loss.is_finite() {
        let culprit = first_non_finite_grad(&*model, &grads)
            .or_else(|| model.params().first_non_finite())
            .unwrap_or("<forward pass>");
        return Err(Error::NonFinite(format!(
            "loss is {loss} at step {}; first non-finite parameter or gradient: {culprit}",
            state.t + 1
        )));
    }
    if let Some(name) = first_non_finite_grad(&*model, &grads) {
        return Err(Error::NonFinite(format!(
            "gradient of `{name}` is non-finite at step {}",
            state.t + 1
        )));
    }
    if let Some(c) = cfg.grad_clip {
        clip_global_norm(&mut grads, c);
    }
    adam_step(model.params_mut(), &grads, state, cfg)?;
    if let Some(name) = model.params().first_non_finite() {
        return Err(Error::NonFinite(format!(
            "parameter `{name}` became non-finite at step {}",
            state.t
        )));
    }
    Ok(loss)
}

/// Trains `model` in place and leaves it holding the parameters of the
/// best validation epoch. Returns the final optimizer state and the report.
pub fn train<F: Forecaster + ?Sized>(
    model: &mut F,
    dataset: &Dataset,
    cfg: &TrainConfig,
) -> Result<(OptimizerState, TrainReport)> {
    train_from(model, dataset, cfg, OptimizerState::new(model.params()))
}

/// As [`train`], continuing from an existing optimizer state.
pub fn train_from<F: Forecaster + ?Sized>(
    model: &mut F,
    dataset: &Dataset,
    cfg: &TrainConfig,
    mut state: OptimizerState,
) -> Result<(OptimizerState, TrainReport)> {
    cfg.validate()?;
    state.check_matches(model.params())?;
    if dataset.train.is_empty() || dataset.validation.is_empty() {
        return Err(Error::Contract(format!(
            "training needs non-empty train and validation sets (got {} and {} windows)",
            dataset.train.len(),
            dataset.validation.len()
        )));
    }

    let initial_train_mse = dataset_mse(&*model, &dataset.train)?;
    let initial_val_mse = dataset_mse(&*model, &dataset.validation)?;
    log::info!("initial train mse {initial_train_mse:.6}, validation mse {initial_val_mse:.6}");

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..dataset.train.len()).collect();
    let mut epochs = Vec::new();
    let mut best: Option<(usize, f64, crate::model::ParamSet)> = None;
    let mut stop_reason = StopReason::MaxEpochs;

    for epoch in 1..=cfg.max_epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);
        let mut weighted = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&WindowSample> = chunk.iter().map(|&i| &dataset.train[i]).collect();
            weighted += train_step(model, &batch, &mut state, cfg)? * batch.len() as f64;
        }
        let train_mse = weighted / dataset.train.len() as f64;
        let val_mse = dataset_mse(&*model, &dataset.validation)?;
        if !val_mse.is_finite() {
            return Err(Error::NonFinite(format!("validation mse is {val_mse} after epoch {epoch}")));
        }
        let seconds = started.elapsed().as_secs_f64();
        log::info!("epoch {epoch}: train mse {train_mse:.6}, validation mse {val_mse:.6} ({seconds:.2}s)");
        epochs.push(EpochRecord {
            epoch,
            train_mse,
            val_mse,
            seconds,
        });

        match &best {
            Some((_, b, _)) if val_mse >= *b => {}
            _ => best = Some((epoch, val_mse, model.params().clone())),
        }
        let best_epoch = best.as_ref().map(|b| b.0).unwrap_or(epoch);
        if epoch - best_epoch >= cfg.patience {
            stop_reason = StopReason::Patience;
            break;
        }
    }

    let (best_epoch, best_val_mse, best_params) = best.expect("at least one epoch ran");
    model.params_mut().assign(&best_params)?;
    Ok((
        state,
        TrainReport {
            initial_train_mse,
            initial_val_mse,
            epochs,
            best_epoch,
            best_val_mse,
            stop_reason,
        },
    ))
}

#[cfg(test)]
mod tests;
