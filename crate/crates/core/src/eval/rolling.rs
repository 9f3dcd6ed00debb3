use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use chrono::{Duration, NaiveDateTime};
use serde::{Deserialize, Serialize};

use super::metrics::{mae, mape, mspe};
use crate::data::{window_at, HourlySeries, NormalizationStats, VariableStats};
use crate::error::{Error, Result};
use crate::model::Forecaster;

const TS_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

/// Forecast origins `start, start+interval, …` whose `H`-hour windows end
/// at or before `end` (exclusive).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RollingPlan {
    pub start: NaiveDateTime,
    pub end: NaiveDateTime,
    pub horizon: usize,
    pub interval: usize,
}

impl RollingPlan {
    /// Non-overlapping windows: interval equals the horizon.
    pub fn tiling(start: NaiveDateTime, end: NaiveDateTime, horizon: usize) -> Self {
        RollingPlan {
            start,
            end,
            horizon,
            interval: horizon,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 || self.interval == 0 {
            return Err(Error::Config(format!(
                "rolling plan needs horizon and interval of at least 1 (got {}, {})",
                self.horizon, self.interval
            )));
        }
        if self.end <= self.start {
            return Err(Error::Config(format!(
                "rolling plan end {} is not after start {}",
                self.end, self.start
            )));
        }
        Ok(())
    }

    pub fn origins(&self) -> Vec<NaiveDateTime> {
        let mut out = Vec::new();
        let mut t = self.start;
        while t + Duration::hours(self.horizon as i64) <= self.end {
            out.push(t);
            t += Duration::hours(self.interval as i64);
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OriginRow {
    pub origin: NaiveDateTime,
    pub predictions: Vec<f64>,
    pub targets: Vec<f64>,
}

/// Metrics over every forecast point of a rolling evaluation, computed on
/// normalized values, together with the raw rows they came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub tool_version: String,
    pub config_digest: String,
    pub horizon: usize,
    pub floor: f64,
    pub target_stats: VariableStats,
    pub rows: Vec<OriginRow>,
    pub n_points: usize,
    pub mae: f64,
    pub mape: f64,
    pub mspe: f64,
    /// MAE after mapping both series back to physical units.
    pub mae_raw: f64,
}

impl MetricsReport {
    pub fn from_rows(rows: Vec<OriginRow>, horizon: usize, floor: f64, target_stats: VariableStats) -> Result<Self> {
        let mut report = MetricsReport {
            tool_version: crate::VERSION.to_string(),
            config_digest: String::new(),
            horizon,
            floor,
            target_stats,
            rows,
            n_points: 0,
            mae: 0.0,
            mape: 0.0,
            mspe: 0.0,
            mae_raw: 0.0,
        };
        report.recompute()?;
        Ok(report)
    }

    fn aggregates(&self) -> Result<(usize, f64, f64, f64, f64)> {
        let mut y = Vec::new();
        let mut p = Vec::new();
        for r in &self.rows {
            if r.predictions.len() != self.horizon || r.targets.len() != self.horizon {
                return Err(Error::dim(
                    "metrics_row",
                    &[self.horizon],
                    &[r.predictions.len(), r.targets.len()],
                ));
            }
            y.extend_from_slice(&r.targets);
            p.extend_from_slice(&r.predictions);
        }
        let raw = |v: &[f64]| v.iter().map(|&x| self.target_stats.denormalize(x)).collect::<Vec<_>>();
        Ok((
            y.len(),
            mae(&y, &p)?,
            mape(&y, &p, self.floor)?,
            mspe(&y, &p, self.floor)?,
            mae(&raw(&y), &raw(&p))?,
        ))
    }

    fn recompute(&mut self) -> Result<()> {
        let (n, a, b, c, d) = self.aggregates()?;
        self.n_points = n;
        self.mae = a;
        self.mape = b;
        self.mspe = c;
        self.mae_raw = d;
        Ok(())
    }

    /// Mean squared error over all forecast points (normalized units).
    pub fn mse(&self) -> f64 {
        let (mut total, mut n) = (0.0, 0usize);
        for r in &self.rows {
            for (p, y) in r.predictions.iter().zip(&r.targets) {
                total += (p - y) * (p - y);
                n += 1;
            }
        }
        total / n.max(1) as f64
    }

    /// Errors unless the stored aggregates equal a recomputation from rows.
    pub fn verify_consistency(&self) -> Result<()> {
        let got = self.aggregates()?;
        let stored = (self.n_points, self.mae, self.mape, self.mspe, self.mae_raw);
        if got != stored {
            return Err(Error::Contract(format!(
                "report aggregates {stored:?} differ from recomputed {got:?}"
            )));
        }
        Ok(())
    }

    /// Header of `# key=value` lines, one `pred` and one `true` row per
    /// origin, and a footer with the aggregates. Floats are written in
    /// shortest round-trip form.
    pub fn to_text(&self) -> Result<String> {
        self.verify_consistency()?;
        let s = &self.target_stats;
        let mut out = String::from("# dewp metrics report\n");
        for (k, v) in [
            ("tool_version", self.tool_version.clone()),
            ("config_digest", self.config_digest.clone()),
            ("horizon", self.horizon.to_string()),
            ("floor", format!("{:?}", self.floor)),
            ("target", s.name.clone()),
            ("target_min", format!("{:?}", s.min)),
            ("target_max", format!("{:?}", s.max)),
            ("target_mean", format!("{:?}", s.mean)),
        ] {
            let _ = writeln!(out, "# {k}={v}");
        }
        out.push_str("origin,kind");
        for h in 1..=self.horizon {
            let _ = write!(out, ",h{h}");
        }
        out.push('\n');
        for r in &self.rows {
            for (kind, values) in [("pred", &r.predictions), ("true", &r.targets)] {
                out.push_str(&r.origin.format(TS_FORMAT).to_string());
                out.push(',');
                out.push_str(kind);
                for v in values {
                    let _ = write!(out, ",{v:?}");
                }
                out.push('\n');
            }
        }
        let _ = writeln!(out, "# n_points={}", self.n_points);
        for (k, v) in [("mae", self.mae), ("mape", self.mape), ("mspe", self.mspe), ("mae_raw", self.mae_raw)] {
            let _ = writeln!(out, "# {k}={v:?}");
        }
        Ok(out)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()?).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Format { message, .. } => Error::format(path, message),
            other => other,
        })
    }

    /// Parses [`to_text`](Self::to_text) output and checks its consistency.
    pub fn parse(text: &str) -> Result<Self> {
        let bad = |m: String| Error::format("<metrics report>", m);
        let mut meta = BTreeMap::new();
        let mut rows: Vec<OriginRow> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if let Some(rest) = line.strip_prefix("# ") {
                if let Some((k, v)) = rest.split_once('=') {
                    meta.insert(k.to_string(), v.to_string());
                }
                continue;
            }
            if line.starts_with("origin,") || line.is_empty() {
                continue;
            }
            let mut fields = line.split(',');
            let ts = fields.next().unwrap_or_default();
            let origin = NaiveDateTime::parse_from_str(ts, TS_FORMAT)
                .map_err(|e| bad(format!("line {}: bad origin `{ts}`: {e}", lineno + 1)))?;
            let kind = fields.next().unwrap_or_default();
            let values = fields
                .map(|f| f.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| bad(format!("line {}: {e}", lineno + 1)))?;
            match kind {
                "pred" => rows.push(OriginRow {
                    origin,
                    predictions: values,
                    targets: vec![],
                }),
                "true" => match rows.last_mut() {
                    Some(r) if r.origin == origin && r.targets.is_empty() => r.targets = values,
                    _ => return Err(bad(format!("line {}: `true` row without matching `pred`", lineno + 1))),
                },
                other => return Err(bad(format!("line {}: unknown row kind `{other}`", lineno + 1))),
            }
        }
        let get = |k: &str| meta.get(k).cloned().ok_or_else(|| bad(format!("missing `{k}`")));
        let num = |k: &str| -> Result<f64> { get(k)?.parse().map_err(|e| bad(format!("`{k}`: {e}"))) };
        let count = |k: &str| -> Result<usize> { get(k)?.parse().map_err(|e| bad(format!("`{k}`: {e}"))) };
        let report = MetricsReport {
            tool_version: get("tool_version")?,
            config_digest: get("config_digest")?,
            horizon: count("horizon")?,
            floor: num("floor")?,
            target_stats: VariableStats {
                name: get("target")?,
                min: num("target_min")?,
                max: num("target_max")?,
                mean: num("target_mean")?,
            },
            rows,
            n_points: count("n_points")?,
            mae: num("mae")?,
            mape: num("mape")?,
            mspe: num("mspe")?,
            mae_raw: num("mae_raw")?,
        };
        report.verify_consistency()?;
        Ok(report)
    }
}

/// Forecasts from every origin of `plan` using ground-truth lookback
/// features, then scores all forecast points. `series` must contain the `L`
/// hours preceding `plan.start`.
pub fn rolling_evaluate<F: Forecaster + ?Sized>(
    model: &F,
    series: &HourlySeries,
    plan: &RollingPlan,
    stats: &NormalizationStats,
    floor: f64,
) -> Result<MetricsReport> {
    plan.validate()?;
    if plan.horizon != model.horizon() {
        return Err(Error::ConfigMismatch(format!(
            "plan horizon {} but model forecasts {} hours",
            plan.horizon,
            model.horizon()
        )));
    }
    let target_stats = stats
        .get(&series.target_name)
        .ok_or_else(|| Error::Config(format!("no stats for target `{}`", series.target_name)))?
        .clone();
    let origins = plan.origins();
    if origins.is_empty() {
        return Err(Error::Planning {
            message: format!("no {}-hour window fits between {} and {}", plan.horizon, plan.start, plan.end),
            required: plan.horizon,
            available: (plan.end - plan.start).num_hours().max(0) as usize,
        });
    }
    let lookback = model.lookback();
    let first = series.column_of(plan.start).ok_or_else(|| Error::Planning {
        message: format!("plan start {} is outside the series", plan.start),
        required: lookback,
        available: 0,
    })?;
    if first < lookback {
        return Err(Error::Planning {
            message: format!("insufficient history before first origin {}", plan.start),
            required: lookback,
            available: first,
        });
    }
    if plan.end > series.end() {
        return Err(Error::Planning {
            message: format!("plan end {} is past the series end {}", plan.end, series.end()),
            required: (plan.end - series.start).num_hours() as usize,
            available: series.len(),
        });
    }

    let mut rows = Vec::with_capacity(origins.len());
    for origin in origins {
        let col = first + (origin - plan.start).num_hours() as usize;
        let sample = window_at(series, col, lookback, plan.horizon)?;
        rows.push(OriginRow {
            origin,
            predictions: model.predict(&sample)?,
            targets: sample.target,
        });
    }
    MetricsReport::from_rows(rows, plan.horizon, floor, target_stats)
}

#[cfg(test)]
mod tests;
