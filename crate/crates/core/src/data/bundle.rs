use std::path::Path;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use super::normalize::{apply_normalization, fit_normalization, impute_missing, NormalizationStats};
use super::raw::{aggregate_hourly, load_csv, RawTable};
use super::series::{split_by_timestamp, HourlySeries};
use super::window::{make_windows, WindowSample};
use crate::digest::sha256_hex;
use crate::error::{Error, Result};

pub const BUNDLE_FORMAT_VERSION: u32 = 1;

/// Options for turning raw sub-hourly records into a dataset bundle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreprocessOptions {
    pub timestamp_column: String,
    /// All variables to read, including the target.
    pub variables: Vec<String>,
    pub target: String,
    /// First hour of the test split.
    pub boundary: NaiveDateTime,
}

/// Imputed, normalized hourly series plus the statistics and split used to
/// produce it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetBundle {
    pub format_version: u32,
    pub tool_version: String,
    /// Digest of the configuration that produced the bundle, empty if none.
    pub config_digest: String,
    pub boundary: NaiveDateTime,
    pub stats: NormalizationStats,
    pub series: HourlySeries,
    pub raw_records: usize,
    pub duplicate_timestamps: usize,
    pub imputed_cells: usize,
}

/// Training and validation windows; validation is the chronologically last
/// fraction of the windows cut from the training split.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub train: Vec<WindowSample>,
    pub validation: Vec<WindowSample>,
}

pub fn preprocess_csv(path: &Path, opts: &PreprocessOptions) -> Result<DatasetBundle> {
    let table = load_csv(path, &opts.timestamp_column, &opts.variables)?;
    preprocess_table(&table, opts)
}

/// aggregate → split → fit on train → impute → normalize.
pub fn preprocess_table(table: &RawTable, opts: &PreprocessOptions) -> Result<DatasetBundle> {
    let hourly = aggregate_hourly(table, &opts.target)?;
    let (train, _) = split_by_timestamp(&hourly, opts.boundary)?;
    let stats = fit_normalization(&train)?;
    let imputed_cells = hourly.missing_count();
    let imputed = impute_missing(&hourly, &stats)?;
    let series = apply_normalization(&imputed, &stats)?;
    Ok(DatasetBundle {
        format_version: BUNDLE_FORMAT_VERSION,
        tool_version: crate::VERSION.to_string(),
        config_digest: String::new(),
        boundary: opts.boundary,
        stats,
        series,
        raw_records: table.records.len(),
        duplicate_timestamps: table.duplicate_timestamps,
        imputed_cells,
    })
}

impl DatasetBundle {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut bytes = serde_json::to_vec_pretty(self).expect("bundle serializes");
        bytes.push(b'\n');
        bytes
    }

    /// Writes the bundle and returns the SHA-256 of the written bytes.
    pub fn write(&self, path: &Path) -> Result<String> {
        let bytes = self.to_bytes();
        std::fs::write(path, &bytes).map_err(|e| Error::io(path, e))?;
        Ok(sha256_hex(&bytes))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let probe: serde_json::Value =
            serde_json::from_slice(&bytes).map_err(|e| Error::format(path, e.to_string()))?;
        let found = probe
            .get("format_version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| Error::format(path, "missing format_version"))? as u32;
        if found != BUNDLE_FORMAT_VERSION {
            return Err(Error::Version {
                found,
                expected: BUNDLE_FORMAT_VERSION,
            });
        }
        let bundle: DatasetBundle =
            serde_json::from_value(probe).map_err(|e| Error::format(path, e.to_string()))?;
        if bundle.series.missing_count() > 0 {
            return Err(Error::format(path, "bundle series contains missing values"));
        }
        Ok(bundle)
    }

    pub fn digest(&self) -> String {
        sha256_hex(&self.to_bytes())
    }

    pub fn train_series(&self) -> Result<HourlySeries> {
        Ok(split_by_timestamp(&self.series, self.boundary)?.0)
    }

    pub fn test_series(&self) -> Result<HourlySeries> {
        Ok(split_by_timestamp(&self.series, self.boundary)?.1)
    }

    /// Training windows with the last `validation_fraction` held out.
    pub fn dataset(
        &self,
        lookback: usize,
        horizon: usize,
        stride: usize,
        validation_fraction: f64,
    ) -> Result<Dataset> {
        if !(0.0..1.0).contains(&validation_fraction) {
            return Err(Error::Config(format!(
                "validation fraction must be in [0, 1), got {validation_fraction}"
            )));
        }
        let train = self.train_series()?;
        let mut windows = make_windows(&train, lookback, horizon, stride)?;
        let n_val = ((windows.len() as f64) * validation_fraction).ceil() as usize;
        let n_val = n_val.min(windows.len().saturating_sub(1));
        let validation = windows.split_off(windows.len() - n_val);
        Ok(Dataset {
            train: windows,
            validation,
        })
    }

    /// Maps a normalized target value back to physical units.
    pub fn denormalize_target(&self, x: f64) -> f64 {
        self.stats
            .get(&self.series.target_name)
            .map(|s| s.denormalize(x))
            .unwrap_or(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::raw::load_csv_from_reader;
    use chrono::{Duration, NaiveDate};

    fn fixture() -> (RawTable, PreprocessOptions) {
        let start = NaiveDate::from_ymd_opt(2016, 6, 30).unwrap().and_hms_opt(0, 0, 0).unwrap();
        let mut text = String::from("timestamp,ws,power\n");
        for i in 0..48 * 6 {
            let ts = start + Duration::minutes(10 * i);
            let ws = if i % 17 == 0 { "NaN".to_string() } else { format!("{}", (i % 13) as f64 * 0.5) };
            text += &format!("{},{ws},{}\n", ts.format("%Y-%m-%dT%H:%M:%S"), (i % 29) as f64 * 10.0);
        }
        let vars = vec!["ws".to_string(), "power".to_string()];
        let table = load_csv_from_reader(text.as_bytes(), Path::new("x.csv"), "timestamp", &vars).unwrap();
        let opts = PreprocessOptions {
            timestamp_column: "timestamp".into(),
            variables: vars,
            target: "power".into(),
            boundary: start + Duration::hours(36),
        };
        (table, opts)
    }

    #[test]
    fn pipeline_uses_train_stats_only() {
        let (table, opts) = fixture();
        let b = preprocess_table(&table, &opts).unwrap();
        assert_eq!(b.series.len(), 48);
        assert_eq!(b.series.missing_count(), 0);
        let raw = aggregate_hourly(&table, "power").unwrap();
        let (train, test) = split_by_timestamp(&raw, opts.boundary).unwrap();
        assert_eq!(b.stats, fit_normalization(&train).unwrap());
        assert_ne!(b.stats.variables, fit_normalization(&test).unwrap().variables);
    }

    #[test]
    fn bundle_is_deterministic_and_round_trips() {
        let (table, opts) = fixture();
        let a = preprocess_table(&table, &opts).unwrap();
        let b = preprocess_table(&table, &opts).unwrap();
        assert_eq!(a.digest(), b.digest());
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("b.json");
        let d = a.write(&p).unwrap();
        assert_eq!(d, a.digest());
        assert_eq!(DatasetBundle::read(&p).unwrap(), a);
    }

    #[test]
    fn version_is_checked() {
        let (table, opts) = fixture();
        let mut a = preprocess_table(&table, &opts).unwrap();
        a.format_version = 99;
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("b.json");
        a.write(&p).unwrap();
        assert!(matches!(DatasetBundle::read(&p), Err(Error::Version { found: 99, .. })));
    }

    #[test]
    fn validation_is_chronological_tail() {
        let (table, opts) = fixture();
        let b = preprocess_table(&table, &opts).unwrap();
        let ds = b.dataset(6, 3, 1, 0.1).unwrap();
        // 36 train hours → 28 windows, 3 held out
        assert_eq!((ds.train.len(), ds.validation.len()), (25, 3));
        assert!(ds.train.last().unwrap().origin < ds.validation[0].origin);
        assert!(ds.validation.iter().all(|w| w.origin + Duration::hours(3) <= opts.boundary));
    }
}
