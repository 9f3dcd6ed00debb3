use chrono::{Datelike, Duration, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which part of the timeline a series (or statistics fitted on it) belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Full,
    Train,
    Test,
}

/// Dense hourly grid of `d` variables. Missing cells hold `NaN` until imputed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HourlySeries {
    pub start: NaiveDateTime,
    pub variables: Vec<String>,
    pub target_name: String,
    /// One row per variable, one column per hour.
    pub values: Vec<Vec<f64>>,
    pub split: Split,
}

impl HourlySeries {
    pub fn new(
        start: NaiveDateTime,
        variables: Vec<String>,
        target_name: impl Into<String>,
        values: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let target_name = target_name.into();
        if start != floor_hour(start) {
            return Err(Error::Contract(format!("series start {start} is not on an hour boundary")));
        }
        if variables.len() != values.len() {
            return Err(Error::dim("hourly_series", &[variables.len()], &[values.len()]));
        }
        let len = values.first().map(Vec::len).unwrap_or(0);
        if values.iter().any(|row| row.len() != len) {
            return Err(Error::Contract("variables have different lengths".into()));
        }
        if !variables.contains(&target_name) {
            return Err(Error::Schema(target_name));
        }
        Ok(HourlySeries {
            start,
            variables,
            target_name,
            values,
            split: Split::Full,
        })
    }

    /// Number of hours `T`.
    pub fn len(&self) -> usize {
        self.values.first().map(Vec::len).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Exclusive end of the hour grid.
    pub fn end(&self) -> NaiveDateTime {
        self.start + Duration::hours(self.len() as i64)
    }

    pub fn timestamp(&self, col: usize) -> NaiveDateTime {
        self.start + Duration::hours(col as i64)
    }

    pub fn variable_index(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v == name)
    }

    pub fn target_index(&self) -> usize {
        self.variable_index(&self.target_name)
            .expect("target is validated at construction")
    }

    /// Indices of the non-target variables, in schema order.
    pub fn feature_indices(&self) -> Vec<usize> {
        let t = self.target_index();
        (0..self.variables.len()).filter(|&i| i != t).collect()
    }

    pub fn target(&self) -> &[f64] {
        &self.values[self.target_index()]
    }

    pub fn missing_count(&self) -> usize {
        self.values.iter().flatten().filter(|v| v.is_nan()).count()
    }

    /// Column index of `ts` when it lies on the grid.
    pub fn column_of(&self, ts: NaiveDateTime) -> Option<usize> {
        if ts != floor_hour(ts) || ts < self.start {
            return None;
        }
        let col = (ts - self.start).num_hours() as usize;
        (col < self.len()).then_some(col)
    }

    pub(crate) fn slice(&self, from: usize, to: usize, split: Split) -> HourlySeries {
        HourlySeries {
            start: self.timestamp(from),
            variables: self.variables.clone(),
            target_name: self.target_name.clone(),
            values: self.values.iter().map(|row| row[from..to].to_vec()).collect(),
            split,
        }
    }
}

pub fn floor_hour(ts: NaiveDateTime) -> NaiveDateTime {
    ts.date().and_hms_opt(ts.hour(), 0, 0).expect("valid hour")
}

/// Calendar indices used by the embedding tables.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TimeFeatures {
    /// 0..12, January = 0.
    pub month_index: usize,
    /// 0..7, Monday = 0.
    pub weekday_index: usize,
    /// 0..24.
    pub hour_index: usize,
}

pub fn time_features_of(ts: NaiveDateTime) -> TimeFeatures {
    TimeFeatures {
        month_index: ts.month0() as usize,
        weekday_index: ts.weekday().num_days_from_monday() as usize,
        hour_index: ts.hour() as usize,
    }
}

/// Splits at `boundary`: train holds hours strictly before it, test the rest.
pub fn split_by_timestamp(
    series: &HourlySeries,
    boundary: NaiveDateTime,
) -> Result<(HourlySeries, HourlySeries)> {
    if boundary < series.start || boundary > series.end() {
        return Err(Error::Config(format!(
            "split boundary {boundary} outside series range [{}, {}]",
            series.start,
            series.end()
        )));
    }
    // hours h with h < boundary
    let minutes = (boundary - series.start).num_minutes();
    let cut = ((minutes + 59) / 60) as usize;
    Ok((
        series.slice(0, cut, Split::Train),
        series.slice(cut, series.len(), Split::Test),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    pub(crate) fn ts(y: i32, m: u32, d: u32, h: u32) -> NaiveDateTime {
        NaiveDate::from_ymd_opt(y, m, d).unwrap().and_hms_opt(h, 0, 0).unwrap()
    }

    fn series(t: usize) -> HourlySeries {
        HourlySeries::new(
            ts(2016, 1, 1, 0),
            vec!["ws".into(), "power".into()],
            "power",
            vec![(0..t).map(|i| i as f64).collect(), vec![1.0; t]],
        )
        .unwrap()
    }

    #[test]
    fn calendar_features() {
        let f = time_features_of(ts(2013, 1, 1, 0));
        assert_eq!((f.month_index, f.weekday_index, f.hour_index), (0, 1, 0));
        let f = time_features_of(ts(2016, 12, 31, 23));
        assert_eq!((f.month_index, f.hour_index), (11, 23));
        assert_eq!(f.weekday_index, 5); // Saturday
    }

    #[test]
    fn day_apart_timestamps_share_hour() {
        let a = ts(2014, 3, 31, 7);
        let b = a + Duration::hours(24);
        let (fa, fb) = (time_features_of(a), time_features_of(b));
        assert_eq!(fa.hour_index, fb.hour_index);
        assert_eq!((fa.weekday_index + 1) % 7, fb.weekday_index);
        assert_eq!((fa.month_index, fb.month_index), (2, 3));
    }

    #[test]
    fn split_seventy_thirty() {
        let s = series(100);
        let (train, test) = split_by_timestamp(&s, ts(2016, 1, 3, 22)).unwrap();
        assert_eq!((train.len(), test.len()), (70, 30));
        assert_eq!(train.split, Split::Train);
        assert_eq!(test.start, ts(2016, 1, 3, 22));
        assert_eq!(test.values[0][0], 70.0);
    }

    #[test]
    fn split_at_edges() {
        let s = series(10);
        let (train, test) = split_by_timestamp(&s, s.start).unwrap();
        assert!(train.is_empty());
        assert_eq!(test.len(), 10);
        let (train, test) = split_by_timestamp(&s, s.end()).unwrap();
        assert_eq!(train.len(), 10);
        assert!(test.is_empty());
        assert!(matches!(
            split_by_timestamp(&s, s.end() + Duration::hours(1)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn target_must_be_a_variable() {
        let r = HourlySeries::new(ts(2016, 1, 1, 0), vec!["ws".into()], "power", vec![vec![1.0]]);
        assert!(matches!(r, Err(Error::Schema(_))));
    }
}
