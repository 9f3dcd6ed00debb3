//! Rolling-origin evaluation, forecast metrics and the Linear baseline.

mod linear;
mod metrics;
mod rolling;

pub use linear::{LinearBaseline, LinearConfig};
pub use metrics::{mae, mape, mspe, DEFAULT_FLOOR};
pub use rolling::{rolling_evaluate, MetricsReport, OriginRow, RollingPlan};
