use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::autodiff::{Tape, Tensor, Var};
use crate::data::{Split, WindowSample};
use crate::model::ParamSet;

fn t0() -> NaiveDateTime {
    NaiveDate::from_ymd_opt(2016, 6, 1).unwrap().and_hms_opt(0, 0, 0).unwrap()
}

fn hours(n: i64) -> Duration {
    Duration::hours(n)
}

fn series(len: usize, seed: u64) -> HourlySeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ws: Vec<f64> = (0..len).map(|_| rng.gen()).collect();
    let power: Vec<f64> = (0..len).map(|i| if i % 7 == 0 { 0.0 } else { rng.gen() }).collect();
    HourlySeries::new(t0(), vec!["ws".into(), "power".into()], "power", vec![ws, power]).unwrap()
}

fn stats() -> NormalizationStats {
    let v = |name: &str, min: f64, max: f64| VariableStats {
        name: name.into(),
        min,
        max,
        mean: (min + max) / 2.0,
    };
    NormalizationStats {
        variables: vec![v("ws", 0.0, 25.0), v("power", -10.0, 2000.0)],
        fitted_on: Split::Train,
    }
}

/// Looks the true future up in the series.
struct Oracle<'a> {
    series: &'a HourlySeries,
    params: ParamSet,
    lookback: usize,
    horizon: usize,
}

impl Forecaster for Oracle<'_> {
    fn lookback(&self) -> usize {
        self.lookback
    }
    fn horizon(&self) -> usize {
        self.horizon
    }
    fn params(&self) -> &ParamSet {
        &self.params
    }
    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }
    fn forward(&self, tape: &mut Tape, _: &[Var], s: &WindowSample) -> crate::Result<Var> {
        let c = self.series.column_of(s.origin).unwrap();
        let y = self.series.target()[c..c + self.horizon].to_vec();
        Ok(tape.constant(Tensor::vector(y)?))
    }
}

struct Constant {
    value: f64,
    params: ParamSet,
    horizon: usize,
}

impl Forecaster for Constant {
    fn lookback(&self) -> usize {
        4
    }
    fn horizon(&self) -> usize {
        self.horizon
    }
    fn params(&self) -> &ParamSet {
        &self.params
    }
    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }
    fn forward(&self, tape: &mut Tape, _: &[Var], _: &WindowSample) -> crate::Result<Var> {
        Ok(tape.constant(Tensor::full(&[self.horizon], self.value)))
    }
}

#[test]
fn tiling_origins_cover_range_once() {
    let plan = RollingPlan::tiling(t0(), t0() + hours(100), 24);
    let origins = plan.origins();
    assert_eq!(origins, (0..4).map(|k| t0() + hours(24 * k)).collect::<Vec<_>>());
    let mut covered = std::collections::BTreeSet::new();
    for o in &origins {
        for h in 0..24 {
            assert!(covered.insert(*o + hours(h)));
        }
    }
    assert_eq!(covered.len(), 96);
    let exact = RollingPlan::tiling(t0(), t0() + hours(96), 24);
    assert_eq!(exact.origins().len(), 4);
    assert!(RollingPlan { interval: 0, ..exact }.validate().is_err());
}

#[test]
fn perfect_model_scores_zero_and_counts_points() {
    let s = series(200, 1);
    let oracle = Oracle {
        series: &s,
        params: ParamSet::new(),
        lookback: 24,
        horizon: 24,
    };
    let plan = RollingPlan::tiling(t0() + hours(48), t0() + hours(96), 24);
    let r = rolling_evaluate(&oracle, &s, &plan, &stats(), 1e-3).unwrap();
    assert_eq!(r.n_points, 48);
    assert_eq!(r.rows.len(), 2);
    assert_eq!((r.mae, r.mape, r.mspe, r.mae_raw), (0.0, 0.0, 0.0, 0.0));
}

#[test]
fn mean_model_scores_mean_absolute_deviation() {
    let s = series(300, 2);
    let plan = RollingPlan::tiling(t0() + hours(24), t0() + hours(24 + 12 * 20), 12);
    let span = &s.target()[24..24 + 240];
    let mean = span.iter().sum::<f64>() / span.len() as f64;
    let mad = span.iter().map(|y| (y - mean).abs()).sum::<f64>() / span.len() as f64;
    let model = Constant {
        value: mean,
        params: ParamSet::new(),
        horizon: 12,
    };
    let r = rolling_evaluate(&model, &s, &plan, &stats(), 1e-3).unwrap();
    assert!((r.mae - mad).abs() < 1e-10);
    assert!((r.mae_raw - mad * 2010.0).abs() < 1e-7);
    assert!(r.mape.is_finite());
}

#[test]
fn insufficient_history_is_a_planning_error() {
    let s = series(100, 3);
    let model = Constant {
        value: 0.5,
        params: ParamSet::new(),
        horizon: 6,
    };
    let plan = RollingPlan::tiling(t0() + hours(2), t0() + hours(50), 6);
    match rolling_evaluate(&model, &s, &plan, &stats(), 1e-3) {
        Err(Error::Planning {
            required, available, ..
        }) => assert_eq!((required, available), (4, 2)),
        other => panic!("expected planning error, got {other:?}"),
    }
    let late = RollingPlan::tiling(t0() + hours(90), t0() + hours(120), 6);
    assert!(matches!(
        rolling_evaluate(&model, &s, &late, &stats(), 1e-3),
        Err(Error::Planning { .. })
    ));
    let wrong_h = RollingPlan::tiling(t0() + hours(10), t0() + hours(50), 5);
    assert!(matches!(
        rolling_evaluate(&model, &s, &wrong_h, &stats(), 1e-3),
        Err(Error::ConfigMismatch(_))
    ));
}

#[test]
fn report_text_round_trips_and_is_self_consistent() {
    let s = series(200, 4);
    let model = Constant {
        value: 0.37,
        params: ParamSet::new(),
        horizon: 6,
    };
    let plan = RollingPlan::tiling(t0() + hours(10), t0() + hours(70), 6);
    let mut r = rolling_evaluate(&model, &s, &plan, &stats(), 1e-3).unwrap();
    r.config_digest = "0123abcd".into();
    let text = r.to_text().unwrap();
    assert_eq!(MetricsReport::parse(&text).unwrap(), r);
    assert_eq!(text.lines().filter(|l| l.contains(",pred,")).count(), 10);

    let tampered = text.replace(&format!("# mae={:?}", r.mae), "# mae=0.5");
    assert!(MetricsReport::parse(&tampered).is_err());
    let mut inconsistent = r.clone();
    inconsistent.rows[0].predictions[0] += 1.0;
    assert!(inconsistent.verify_consistency().is_err());
    assert!(inconsistent.to_text().is_err());
}

#[test]
fn report_mse_matches_loop() {
    let rows = vec![
        OriginRow { origin: t0(), predictions: vec![0.0, 1.0], targets: vec![1.0, 1.0] },
        OriginRow { origin: t0() + hours(2), predictions: vec![0.5, 0.5], targets: vec![0.0, 1.0] },
    ];
    let r = MetricsReport::from_rows(rows, 2, 1e-3, stats().variables[1].clone()).unwrap();
    assert!((r.mse() - (1.0 + 0.0 + 0.25 + 0.25) / 4.0).abs() < 1e-15);
}
