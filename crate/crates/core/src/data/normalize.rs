use serde::{Deserialize, Serialize};

use super::series::{HourlySeries, Split};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariableStats {
    pub name: String,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

impl VariableStats {
    pub fn is_constant(&self) -> bool {
        self.max == self.min
    }

    pub fn normalize(&self, x: f64) -> f64 {
        if self.is_constant() {
            0.5
        } else {
            (x - self.min) / (self.max - self.min)
        }
    }

    pub fn denormalize(&self, x: f64) -> f64 {
        if self.is_constant() {
            self.min
        } else {
            x * (self.max - self.min) + self.min
        }
    }
}

/// Per-variable min/max/mean, fitted on a single split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub variables: Vec<VariableStats>,
    pub fitted_on: Split,
}

impl NormalizationStats {
    pub fn get(&self, name: &str) -> Option<&VariableStats> {
        self.variables.iter().find(|v| v.name == name)
    }

    fn require(&self, name: &str) -> Result<&VariableStats> {
        self.get(name)
            .ok_or_else(|| Error::Config(format!("variable `{name}` has no normalization stats")))
    }

    fn require_train(&self) -> Result<()> {
        if self.fitted_on != Split::Train {
            return Err(Error::Contract(format!(
                "normalization stats must be fitted on the training split, found {:?}",
                self.fitted_on
            )));
        }
        Ok(())
    }

    /// Short hex digest identifying these exact statistics.
    pub fn digest(&self) -> String {
        crate::digest::short_json_digest(self)
    }
}

/// Min, max and mean of every variable over the non-missing cells of `train`.
pub fn fit_normalization(train: &HourlySeries) -> Result<NormalizationStats> {
    if train.is_empty() {
        return Err(Error::Contract("cannot fit normalization on an empty slice".into()));
    }
    let mut variables = Vec::with_capacity(train.variables.len());
    for (name, row) in train.variables.iter().zip(&train.values) {
        let (mut min, mut max, mut sum, mut n) = (f64::INFINITY, f64::NEG_INFINITY, 0.0, 0usize);
        for &x in row.iter().filter(|x| !x.is_nan()) {
            min = min.min(x);
            max = max.max(x);
            sum += x;
            n += 1;
        }
        if n == 0 {
            return Err(Error::Config(format!(
                "variable `{name}` has no observed values in the training split"
            )));
        }
        if min == max {
            log::warn!("variable `{name}` is constant in the training split; it normalizes to 0.5");
        }
        variables.push(VariableStats {
            name: name.clone(),
            min,
            max,
            mean: sum / n as f64,
        });
    }
    Ok(NormalizationStats {
        variables,
        fitted_on: train.split,
    })
}

/// Replaces every missing cell with the variable's training mean.
pub fn impute_missing(series: &HourlySeries, stats: &NormalizationStats) -> Result<HourlySeries> {
    stats.require_train()?;
    let mut out = series.clone();
    for (name, row) in out.variables.iter().zip(out.values.iter_mut()) {
        let s = stats.require(name)?;
        for x in row.iter_mut().filter(|x| x.is_nan()) {
            *x = s.mean;
        }
    }
    Ok(out)
}

fn map_series(
    series: &HourlySeries,
    stats: &NormalizationStats,
    f: impl Fn(&VariableStats, f64) -> f64,
) -> Result<HourlySeries> {
    stats.require_train()?;
    let mut out = series.clone();
    for (name, row) in out.variables.iter().zip(out.values.iter_mut()) {
        let s = stats.require(name)?;
        for x in row.iter_mut() {
            *x = f(s, *x);
        }
    }
    Ok(out)
}

/// `x ↦ (x − min)/(max − min)`; constant variables map to 0.5.
pub fn apply_normalization(series: &HourlySeries, stats: &NormalizationStats) -> Result<HourlySeries> {
    map_series(series, stats, VariableStats::normalize)
}

pub fn invert_normalization(series: &HourlySeries, stats: &NormalizationStats) -> Result<HourlySeries> {
    map_series(series, stats, VariableStats::denormalize)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;
    use proptest::prelude::*;

    fn series(rows: Vec<Vec<f64>>, split: Split) -> HourlySeries {
        let names: Vec<String> = (0..rows.len()).map(|i| format!("v{i}")).collect();
        let start = NaiveDate::from_ymd_opt(2016, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();
        let mut s = HourlySeries::new(start, names, "v0", rows).unwrap();
        s.split = split;
        s
    }

    fn stats(min: f64, max: f64, mean: f64) -> NormalizationStats {
        NormalizationStats {
            variables: vec![VariableStats { name: "v0".into(), min, max, mean }],
            fitted_on: Split::Train,
        }
    }

    #[test]
    fn fit_min_max_mean() {
        let s = fit_normalization(&series(vec![vec![0.0, 10.0]], Split::Train)).unwrap();
        let v = &s.variables[0];
        assert_eq!((v.min, v.max, v.mean), (0.0, 10.0, 5.0));
        assert_eq!(s.fitted_on, Split::Train);
    }

    #[test]
    fn fit_ignores_missing_and_is_permutation_invariant() {
        let a = fit_normalization(&series(vec![vec![3.0, f64::NAN, -1.0, 4.0]], Split::Train)).unwrap();
        let b = fit_normalization(&series(vec![vec![4.0, -1.0, 3.0, f64::NAN]], Split::Train)).unwrap();
        assert_eq!(a.variables[0].min, b.variables[0].min);
        assert_eq!(a.variables[0].max, b.variables[0].max);
        assert!((a.variables[0].mean - 2.0).abs() < 1e-15);
        assert!((a.variables[0].mean - b.variables[0].mean).abs() < 1e-15);
    }

    #[test]
    fn normalize_endpoints() {
        let st = stats(0.0, 10.0, 5.0);
        let n = apply_normalization(&series(vec![vec![5.0, 0.0, 10.0]], Split::Full), &st).unwrap();
        assert_eq!(n.values[0], vec![0.5, 0.0, 1.0]);
    }

    #[test]
    fn constant_variable_maps_to_half() {
        let st = stats(3.0, 3.0, 3.0);
        let n = apply_normalization(&series(vec![vec![3.0, 3.0]], Split::Full), &st).unwrap();
        assert_eq!(n.values[0], vec![0.5, 0.5]);
        let back = invert_normalization(&n, &st).unwrap();
        assert_eq!(back.values[0], vec![3.0, 3.0]);
    }

    #[test]
    fn impute_cases() {
        let st = stats(0.0, 10.0, 5.2);
        let full = series(vec![vec![1.0, 2.0]], Split::Full);
        assert_eq!(impute_missing(&full, &st).unwrap(), full);
        let one = series(vec![vec![1.0, f64::NAN]], Split::Full);
        assert_eq!(impute_missing(&one, &st).unwrap().values[0], vec![1.0, 5.2]);
        let all = series(vec![vec![f64::NAN; 4]], Split::Test);
        assert_eq!(impute_missing(&all, &st).unwrap().values[0], vec![5.2; 4]);
    }

    #[test]
    fn impute_requires_known_variable() {
        let st = stats(0.0, 1.0, 0.5);
        let s = series(vec![vec![1.0], vec![f64::NAN]], Split::Full);
        assert!(matches!(impute_missing(&s, &st), Err(Error::Config(_))));
    }

    #[test]
    fn stats_from_test_split_are_rejected() {
        let test = series(vec![vec![1.0, 2.0]], Split::Test);
        let st = fit_normalization(&test).unwrap();
        assert!(matches!(apply_normalization(&test, &st), Err(Error::Contract(_))));
        assert!(matches!(impute_missing(&test, &st), Err(Error::Contract(_))));
    }

    proptest! {
        #[test]
        fn round_trip_identity(values in prop::collection::vec(-1e3f64..1e3, 2..64)) {
            let s = series(vec![values.clone()], Split::Train);
            let st = fit_normalization(&s).unwrap();
            prop_assume!(!st.variables[0].is_constant());
            let back = invert_normalization(&apply_normalization(&s, &st).unwrap(), &st).unwrap();
            for (a, b) in back.values[0].iter().zip(&values) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
