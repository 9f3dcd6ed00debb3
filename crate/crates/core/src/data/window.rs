use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use super::series::{time_features_of, HourlySeries, TimeFeatures};
use crate::error::{Error, Result};

/// One training example: `L` hours of features followed by `H` hours of power.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowSample {
    /// Number of feature channels `d` (power excluded).
    pub channels: usize,
    /// Row-major `channels × L`.
    pub lookback: Vec<f64>,
    pub time_features: Vec<TimeFeatures>,
    pub target: Vec<f64>,
    /// Timestamp of the first target hour.
    pub origin: NaiveDateTime,
}

impl WindowSample {
    pub fn lookback_len(&self) -> usize {
        self.time_features.len()
    }

    pub fn horizon(&self) -> usize {
        self.target.len()
    }

    pub fn feature_row(&self, channel: usize) -> &[f64] {
        let l = self.lookback_len();
        &self.lookback[channel * l..(channel + 1) * l]
    }
}

/// Builds the window whose lookback covers columns `origin-L..origin` and
/// whose target covers `origin..origin+H`.
pub fn window_at(series: &HourlySeries, origin: usize, lookback: usize, horizon: usize) -> Result<WindowSample> {
    if origin >= lookback && origin + horizon > series.len() {
        return Err(Error::Planning {
            message: format!("origin {} lacks horizon coverage", series.timestamp(origin)),
            required: horizon,
            available: series.len().saturating_sub(origin),
        });
    }
    let mut sample = lookback_window(series, origin, lookback)?;
    let target = series.target()[origin..origin + horizon].to_vec();
    if target.iter().any(|x| x.is_nan()) {
        return Err(Error::Contract("window target contains missing values; impute first".into()));
    }
    sample.target = target;
    Ok(sample)
}

/// The `L` hours of features preceding `origin`, with an empty target.
/// `origin` may equal the series length (forecasting past the last hour).
pub fn lookback_window(series: &HourlySeries, origin: usize, lookback: usize) -> Result<WindowSample> {
    if origin < lookback || origin > series.len() {
        return Err(Error::Planning {
            message: format!("origin {} lacks lookback history", series.timestamp(origin)),
            required: lookback,
            available: origin.min(series.len()),
        });
    }
    let features = series.feature_indices();
    let from = origin - lookback;
    let mut lookback_data = Vec::with_capacity(features.len() * lookback);
    for &f in &features {
        lookback_data.extend_from_slice(&series.values[f][from..origin]);
    }
    if lookback_data.iter().any(|x| x.is_nan()) {
        return Err(Error::Contract("window contains missing values; impute first".into()));
    }
    Ok(WindowSample {
        channels: features.len(),
        lookback: lookback_data,
        time_features: (from..origin).map(|c| time_features_of(series.timestamp(c))).collect(),
        target: Vec::new(),
        origin: series.timestamp(origin),
    })
}

/// Number of windows `make_windows` produces.
pub fn window_count(len: usize, lookback: usize, horizon: usize, stride: usize) -> usize {
    if len < lookback + horizon {
        0
    } else {
        (len - lookback - horizon) / stride + 1
    }
}

/// Slides a window over the series starting at offset 0 and stepping by `stride`.
pub fn make_windows(
    series: &HourlySeries,
    lookback: usize,
    horizon: usize,
    stride: usize,
) -> Result<Vec<WindowSample>> {
    if lookback == 0 || horizon == 0 || stride == 0 {
        return Err(Error::Config(format!(
            "lookback, horizon and stride must be at least 1 (got {lookback}, {horizon}, {stride})"
        )));
    }
    let n = window_count(series.len(), lookback, horizon, stride);
    if n == 0 {
        log::warn!(
            "series of {} hours is shorter than lookback {lookback} + horizon {horizon}; no windows",
            series.len()
        );
    }
    (0..n)
        .map(|i| window_at(series, i * stride + lookback, lookback, horizon))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{Duration, NaiveDate};
    use proptest::prelude::*;

    fn series(t: usize) -> HourlySeries {
        let start = NaiveDate::from_ymd_opt(2016, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();
        HourlySeries::new(
            start,
            vec!["ws".into(), "power".into(), "temp".into()],
            "power",
            vec![
                (0..t).map(|i| i as f64).collect(),
                (0..t).map(|i| 1000.0 + i as f64).collect(),
                (0..t).map(|i| -(i as f64)).collect(),
            ],
        )
        .unwrap()
    }

    #[test]
    fn exact_fit_gives_one_window() {
        assert_eq!(make_windows(&series(6), 4, 2, 1).unwrap().len(), 1);
    }

    #[test]
    fn count_by_enumeration() {
        let w = make_windows(&series(10), 4, 2, 1).unwrap();
        assert_eq!(w.len(), 5);
    }

    #[test]
    fn power_only_in_target_and_contiguous() {
        let s = series(10);
        let w = &make_windows(&s, 4, 2, 3).unwrap()[1];
        assert_eq!(w.channels, 2);
        assert_eq!(w.feature_row(0), &[3., 4., 5., 6.]);
        assert_eq!(w.feature_row(1), &[-3., -4., -5., -6.]);
        assert_eq!(w.target, vec![1007., 1008.]);
        assert_eq!(w.origin, s.start + Duration::hours(7));
        assert!(!w.lookback.iter().any(|&x| x >= 1000.0));
    }

    #[test]
    fn short_series_yields_no_windows() {
        assert!(make_windows(&series(5), 4, 2, 1).unwrap().is_empty());
    }

    #[test]
    fn zero_sizes_rejected() {
        assert!(make_windows(&series(10), 0, 2, 1).is_err());
        assert!(make_windows(&series(10), 4, 2, 0).is_err());
    }

    #[test]
    fn stride_equal_to_horizon_tiles_tail() {
        for t in 8..40 {
            let (l, h) = (4, 3);
            let w = make_windows(&series(t), l, h, h).unwrap();
            let covered: Vec<usize> = w
                .iter()
                .flat_map(|s| {
                    let o = (s.origin - series(t).start).num_hours() as usize;
                    o..o + h
                })
                .collect();
            // targets never overlap
            let mut sorted = covered.clone();
            sorted.dedup();
            assert_eq!(sorted.len(), covered.len());
            let covers_tail = covered.last() == Some(&(t - 1)) && covered.len() == t - l;
            assert_eq!(covers_tail, (t - l) % h == 0, "t={t}");
        }
    }

    #[test]
    fn lookback_window_at_series_end() {
        let s = series(10);
        let w = lookback_window(&s, 10, 4).unwrap();
        assert!(w.target.is_empty());
        assert_eq!(w.feature_row(0), &[6., 7., 8., 9.]);
        assert_eq!(w.origin, s.start + Duration::hours(10));
        let inner = window_at(&s, 8, 4, 2).unwrap();
        assert_eq!(lookback_window(&s, 8, 4).unwrap().lookback, inner.lookback);
    }

    #[test]
    fn lookback_window_planning_errors() {
        let s = series(10);
        match lookback_window(&s, 3, 4) {
            Err(Error::Planning { required, available, .. }) => assert_eq!((required, available), (4, 3)),
            other => panic!("expected planning error, got {other:?}"),
        }
        assert!(matches!(lookback_window(&s, 11, 4), Err(Error::Planning { .. })));
    }

    proptest! {
        #[test]
        fn count_matches_closed_form(t in 1usize..80, l in 1usize..20, h in 1usize..20, stride in 1usize..10) {
            let w = make_windows(&series(t), l, h, stride).unwrap();
            let expected = if t < l + h { 0 } else { (t - l - h) / stride + 1 };
            prop_assert_eq!(w.len(), expected);
        }
    }
}
