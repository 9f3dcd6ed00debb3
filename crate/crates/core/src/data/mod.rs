//! Raw CSV records to normalized, windowed samples.

mod bundle;
mod normalize;
mod raw;
mod series;
mod window;

pub use bundle::{preprocess_csv, preprocess_table, Dataset, DatasetBundle, PreprocessOptions, BUNDLE_FORMAT_VERSION};
pub use normalize::{
    apply_normalization, fit_normalization, impute_missing, invert_normalization, NormalizationStats,
    VariableStats,
};
pub use raw::{aggregate_hourly, load_csv, parse_timestamp, RawRecord, RawTable};
pub use series::{floor_hour, split_by_timestamp, time_features_of, HourlySeries, Split, TimeFeatures};
pub use window::{lookback_window, make_windows, window_at, window_count, WindowSample};
