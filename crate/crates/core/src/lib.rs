//! Deep expansion learning for multi-variate wind power forecasting.

pub mod autodiff;
pub mod checkpoint;
pub mod data;
pub mod digest;
pub mod eval;
pub mod model;
pub mod synthetic;
pub mod train;
pub mod error;

pub use autodiff::{Gradients, Tape, Tensor, Var};
pub use checkpoint::{Checkpoint, Model, ModelSpec};
pub use data::{Dataset, DatasetBundle, HourlySeries, NormalizationStats, PreprocessOptions, WindowSample};
pub use error::{Error, Result};
pub use eval::{LinearBaseline, LinearConfig, MetricsReport, RollingPlan};
pub use model::{DewpModel, Forecaster, ModelConfig};
pub use train::{OptimizerState, TrainConfig, TrainReport};

/// Crate version embedded in every written artifact.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
