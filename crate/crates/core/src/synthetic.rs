//! Synthetic SCADA-like data for tests, benchmarks and smoke runs.

use std::f64::consts::PI;

use chrono::{Duration, NaiveDate, NaiveDateTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::{
    preprocess_table, time_features_of, DatasetBundle, HourlySeries, PreprocessOptions, RawRecord, RawTable,
    WindowSample,
};
use crate::error::Result;

pub const FEATURES: [&str; 3] = ["wind_speed", "temperature", "pitch_angle"];
pub const TARGET: &str = "power";

/// Parameters of the seasonal benchmark series.
#[derive(Clone, Debug)]
pub struct SeasonalSpec {
    pub hours: usize,
    pub start: NaiveDateTime,
    /// Standard deviation of the additive target noise.
    pub noise: f64,
    pub seed: u64,
}

impl SeasonalSpec {
    pub fn new(hours: usize, seed: u64) -> Self {
        SeasonalSpec {
            hours,
            start: NaiveDate::from_ymd_opt(2016, 1, 4)
                .and_then(|d| d.and_hms_opt(0, 0, 0))
                .expect("valid date"),
            noise: 0.05,
            seed,
        }
    }
}

/// Power is a daily plus a weekly sinusoid with Gaussian noise. Features are
/// an AR(1) wind speed, a temperature with a daily cycle, and a noisy pitch
/// angle, so the weekly component is only recoverable from the calendar.
pub fn seasonal_series(spec: &SeasonalSpec) -> Result<HourlySeries> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let std = Normal::new(0.0, 1.0).expect("unit normal");
    let mut wind = Vec::with_capacity(spec.hours);
    let mut temp = Vec::with_capacity(spec.hours);
    let mut pitch = Vec::with_capacity(spec.hours);
    let mut power = Vec::with_capacity(spec.hours);
    let mut w = 0.0;
    for t in 0..spec.hours {
        let tf = t as f64;
        w = 0.9 * w + 0.4 * std.sample(&mut rng);
        wind.push(7.0 + 2.0 * w);
        temp.push(12.0 + 5.0 * (2.0 * PI * (tf - 6.0) / 24.0).sin() + 0.5 * std.sample(&mut rng));
        pitch.push(rng.gen_range(-2.0..2.0));
        power.push(
            0.5 + 0.2 * (2.0 * PI * tf / 24.0).sin()
                + 0.2 * (2.0 * PI * tf / 168.0 + 0.5).sin()
                + spec.noise * std.sample(&mut rng),
        );
    }
    let mut variables: Vec<String> = FEATURES.iter().map(|s| s.to_string()).collect();
    variables.push(TARGET.to_string());
    HourlySeries::new(spec.start, variables, TARGET, vec![wind, temp, pitch, power])
}

/// Hourly records of `series` as a raw table (missing cells stay `None`).
pub fn raw_table(series: &HourlySeries) -> RawTable {
    RawTable {
        variables: series.variables.clone(),
        records: (0..series.len())
            .map(|t| RawRecord {
                timestamp: series.timestamp(t),
                values: series
                    .values
                    .iter()
                    .map(|row| Some(row[t]).filter(|v| !v.is_nan()))
                    .collect(),
            })
            .collect(),
        duplicate_timestamps: 0,
    }
}

/// Preprocessed seasonal benchmark whose last `test_hours` form the test split.
pub fn seasonal_bundle(spec: &SeasonalSpec, test_hours: usize) -> Result<DatasetBundle> {
    let series = seasonal_series(spec)?;
    let opts = PreprocessOptions {
        timestamp_column: "timestamp".into(),
        variables: series.variables.clone(),
        target: TARGET.into(),
        boundary: series.timestamp(spec.hours.saturating_sub(test_hours)),
    };
    preprocess_table(&raw_table(&series), &opts)
}

/// Renders a series as a 10-minute CSV (each hour repeated six times), the
/// raw format the preprocessing pipeline ingests.
pub fn to_ten_minute_csv(series: &HourlySeries) -> String {
    let mut out = String::from("timestamp");
    for v in &series.variables {
        out.push(',');
        out.push_str(v);
    }
    out.push('\n');
    for t in 0..series.len() {
        for m in 0..6 {
            let ts = series.timestamp(t) + Duration::minutes(10 * m);
            out.push_str(&ts.format("%Y-%m-%dT%H:%M:%S").to_string());
            for row in &series.values {
                out.push(',');
                let v = row[t];
                if v.is_nan() {
                    out.push_str("NaN");
                } else {
                    out.push_str(&format!("{v:?}"));
                }
            }
            out.push('\n');
        }
    }
    out
}

/// A window with uniformly random features and targets in `[0, 1)`.
pub fn random_window<R: Rng>(channels: usize, lookback: usize, horizon: usize, rng: &mut R) -> WindowSample {
    let start = NaiveDate::from_ymd_opt(2013, 1, 1)
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .expect("valid date")
        + Duration::hours(rng.gen_range(0..24 * 365 * 3));
    WindowSample {
        channels,
        lookback: (0..channels * lookback).map(|_| rng.gen::<f64>()).collect(),
        time_features: (0..lookback)
            .map(|i| time_features_of(start + Duration::hours(i as i64)))
            .collect(),
        target: (0..horizon).map(|_| rng.gen::<f64>()).collect(),
        origin: start + Duration::hours(lookback as i64),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seasonal_series_is_seeded() {
        let a = seasonal_series(&SeasonalSpec::new(200, 3)).unwrap();
        let b = seasonal_series(&SeasonalSpec::new(200, 3)).unwrap();
        let c = seasonal_series(&SeasonalSpec::new(200, 4)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.len(), 200);
        assert_eq!(a.feature_indices().len(), 3);
    }

    #[test]
    fn bundle_splits_off_the_test_tail() {
        let b = seasonal_bundle(&SeasonalSpec::new(300, 1), 100).unwrap();
        assert_eq!(b.test_series().unwrap().len(), 100);
        assert_eq!(b.train_series().unwrap().len(), 200);
        assert_eq!(b.imputed_cells, 0);
    }

    #[test]
    fn csv_rendering_has_six_rows_per_hour() {
        let s = seasonal_series(&SeasonalSpec::new(3, 1)).unwrap();
        let csv = to_ten_minute_csv(&s);
        assert_eq!(csv.lines().count(), 1 + 18);
    }
}
