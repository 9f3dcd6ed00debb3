use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: f64,
    /// Wall time of the epoch; the only non-deterministic field.
    pub seconds: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Patience,
    MaxEpochs,
}

impl StopReason {
    fn as_str(self) -> &'static str {
        match self {
            StopReason::Patience => "patience",
            StopReason::MaxEpochs => "max_epochs",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Full-train-set MSE before the first update.
    pub initial_train_mse: f64,
    pub initial_val_mse: f64,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_mse: f64,
    pub stop_reason: StopReason,
}

impl TrainReport {
    pub fn best_record(&self) -> Option<&EpochRecord> {
        self.epochs.iter().find(|e| e.epoch == self.best_epoch)
    }

    /// Equality ignoring wall-clock times.
    pub fn same_outcome(&self, other: &TrainReport) -> bool {
        let strip = |r: &TrainReport| {
            let mut r = r.clone();
            r.epochs.iter_mut().for_each(|e| e.seconds = 0.0);
            r
        };
        strip(self) == strip(other)
    }

    /// Checks that the recorded best matches the minimum validation loss.
    pub fn verify(&self) -> Result<()> {
        let min = self
            .epochs
            .iter()
            .map(|e| e.val_mse)
            .fold(f64::INFINITY, f64::min);
        match self.best_record() {
            Some(r) if r.val_mse == self.best_val_mse && self.best_val_mse == min => Ok(()),
            _ => Err(Error::Contract(format!(
                "best epoch {} with validation mse {} is not the recorded minimum {min}",
                self.best_epoch, self.best_val_mse
            ))),
        }
    }

    /// Structured text: `#` header lines with provenance, one CSV record per
    /// epoch, and a footer with the best epoch and stop reason.
    pub fn to_text(&self, provenance: &[(&str, &str)]) -> String {
        let mut out = String::from("# dewp train report\n");
        for (k, v) in provenance {
            let _ = writeln!(out, "# {k}={v}");
        }
        let _ = writeln!(out, "# initial_train_mse={:?}", self.initial_train_mse);
        let _ = writeln!(out, "# initial_val_mse={:?}", self.initial_val_mse);
        out.push_str("epoch,train_mse,val_mse,seconds\n");
        for e in &self.epochs {
            let _ = writeln!(out, "{},{:?},{:?},{:.3}", e.epoch, e.train_mse, e.val_mse, e.seconds);
        }
        let _ = writeln!(out, "# best_epoch={}", self.best_epoch);
        let _ = writeln!(out, "# best_val_mse={:?}", self.best_val_mse);
        let _ = writeln!(out, "# stop_reason={}", self.stop_reason.as_str());
        out
    }
}
