//! Run configuration: a TOML file with `[data]`, `[model]`, `[train]`,
//! `[eval]` and `[sweep]` sections plus `section.key=value` overrides.

use std::path::{Path, PathBuf};

use chrono::{NaiveDate, NaiveDateTime};
use dewp_core::digest::short_json_digest;
use dewp_core::train::TrainConfig;
use dewp_core::{LinearConfig, ModelConfig, ModelSpec, PreprocessOptions};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub raw_csv: Option<PathBuf>,
    pub timestamp_column: String,
    /// Every column to read; the target is excluded from the model inputs.
    pub variables: Vec<String>,
    pub target: String,
    /// First hour of the test split.
    pub boundary: NaiveDateTime,
    pub stride: usize,
    pub validation_fraction: f64,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            raw_csv: None,
            timestamp_column: "timestamp".into(),
            variables: ["wind_speed", "temperature", "pitch_angle", "power"]
                .map(String::from)
                .to_vec(),
            target: "power".into(),
            boundary: NaiveDate::from_ymd_opt(2016, 7, 1)
                .and_then(|d| d.and_hms_opt(0, 0, 0))
                .expect("valid date"),
            stride: 1,
            validation_fraction: 0.1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Dewp,
    Linear,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub kind: ModelKind,
    pub lookback: usize,
    pub horizon: usize,
    /// `d_v` for DEWP.
    pub hidden: usize,
    pub stacks: usize,
    pub conv_channels: usize,
    pub kernel_size: usize,
    pub heads: usize,
    pub embed_month: usize,
    pub embed_weekday: usize,
    pub embed_hour: usize,
    /// Hidden width of the Linear baseline.
    pub linear_hidden: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        let c = ModelConfig::new(1, 24, 24);
        ModelSection {
            kind: ModelKind::Dewp,
            lookback: c.lookback,
            horizon: c.horizon,
            hidden: c.hidden,
            stacks: c.stacks,
            conv_channels: c.conv_channels,
            kernel_size: c.kernel_size,
            heads: c.heads,
            embed_month: c.embed_month,
            embed_weekday: c.embed_weekday,
            embed_hour: c.embed_hour,
            linear_hidden: 512,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// First forecast origin; defaults to the split boundary.
    pub start: Option<NaiveDateTime>,
    /// Exclusive end of the evaluated range; defaults to the series end.
    pub end: Option<NaiveDateTime>,
    /// Hours between origins; defaults to the horizon.
    pub interval: Option<usize>,
    pub floor: f64,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            start: None,
            end: None,
            interval: None,
            floor: dewp_core::eval::DEFAULT_FLOOR,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub seeds: Vec<u64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection { seeds: vec![0, 1, 2] }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataSection,
    pub model: ModelSection,
    pub train: TrainConfig,
    pub eval: EvalSection,
    pub sweep: SweepSection,
}

/// TOML datetimes become strings so chrono can parse them.
fn stringify_datetimes(value: &mut toml::Value) {
    match value {
        toml::Value::Datetime(dt) => *value = toml::Value::String(dt.to_string()),
        toml::Value::Table(t) => t.iter_mut().for_each(|(_, v)| stringify_datetimes(v)),
        toml::Value::Array(a) => a.iter_mut().for_each(stringify_datetimes),
        _ => {}
    }
}

/// Parses an override value as a TOML literal, falling back to a bare string.
pub fn parse_value(raw: &str) -> toml::Value {
    let mut v = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    stringify_datetimes(&mut v);
    v
}

/// Splits `section.key=value`.
pub fn parse_assignment(raw: &str) -> Result<(String, String, String), CliError> {
    let (path, value) = raw
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{raw}` is not of the form section.key=value")))?;
    let (section, key) = path
        .trim()
        .split_once('.')
        .ok_or_else(|| CliError::Config(format!("override key `{path}` must be section.key")))?;
    Ok((section.to_string(), key.to_string(), value.trim().to_string()))
}

impl RunConfig {
    /// Loads `path` (or defaults), applies overrides in order and validates.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", p.display())))?;
                toml::from_str::<toml::Table>(&text)
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for raw in overrides {
            let (section, key, value) = parse_assignment(raw)?;
            let entry = table
                .entry(section.clone())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
            let toml::Value::Table(t) = entry else {
                return Err(CliError::Config(format!("`{section}` is not a section")));
            };
            t.insert(key, parse_value(&value));
        }
        Self::from_table(table)
    }

    pub fn from_table(table: toml::Table) -> Result<Self, CliError> {
        let mut value = toml::Value::Table(table);
        stringify_datetimes(&mut value);
        let cfg: RunConfig = value
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.message().trim().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Digest of the full effective configuration.
    pub fn digest(&self) -> String {
        short_json_digest(self)
    }

    /// Digest of the `[data]` section, which alone determines a bundle.
    pub fn data_digest(&self) -> String {
        short_json_digest(&self.data)
    }

    pub fn input_dim(&self) -> usize {
        self.data.variables.len().saturating_sub(1)
    }

    pub fn model_spec(&self) -> ModelSpec {
        let m = &self.model;
        match m.kind {
            ModelKind::Dewp => ModelSpec::Dewp(ModelConfig {
                input_dim: self.input_dim(),
                lookback: m.lookback,
                horizon: m.horizon,
                hidden: m.hidden,
                stacks: m.stacks,
                conv_channels: m.conv_channels,
                kernel_size: m.kernel_size,
                heads: m.heads,
                embed_month: m.embed_month,
                embed_weekday: m.embed_weekday,
                embed_hour: m.embed_hour,
            }),
            ModelKind::Linear => ModelSpec::Linear(LinearConfig {
                input_dim: self.input_dim(),
                lookback: m.lookback,
                horizon: m.horizon,
                hidden: m.linear_hidden,
            }),
        }
    }

    pub fn preprocess_options(&self) -> PreprocessOptions {
        PreprocessOptions {
            timestamp_column: self.data.timestamp_column.clone(),
            variables: self.data.variables.clone(),
            target: self.data.target.clone(),
            boundary: self.data.boundary,
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        let d = &self.data;
        if !d.variables.contains(&d.target) {
            return bad(format!("data.target `{}` is not listed in data.variables", d.target));
        }
        if d.variables.len() < 2 {
            return bad("data.variables needs the target plus at least one feature".into());
        }
        let mut seen = d.variables.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != d.variables.len() {
            return bad("data.variables contains duplicates".into());
        }
        if d.stride == 0 {
            return bad("data.stride must be at least 1".into());
        }
        if !(d.validation_fraction > 0.0 && d.validation_fraction < 1.0) {
            return bad(format!(
                "data.validation_fraction must be in (0, 1), got {}",
                d.validation_fraction
            ));
        }
        let spec_check = match self.model_spec() {
            ModelSpec::Dewp(c) => c.validate(),
            ModelSpec::Linear(c) => c.validate(),
        };
        spec_check.map_err(|e| CliError::Config(format!("[model] {e}")))?;
        self.train
            .validate()
            .map_err(|e| CliError::Config(format!("[train] {e}")))?;
        let e = &self.eval;
        if !(e.floor > 0.0 && e.floor.is_finite()) {
            return bad(format!("eval.floor must be positive, got {}", e.floor));
        }
        if e.interval == Some(0) {
            return bad("eval.interval must be at least 1".into());
        }
        if let (Some(s), Some(t)) = (e.start, e.end) {
            if t <= s {
                return bad(format!("eval.end {t} is not after eval.start {s}"));
            }
        }
        if self.sweep.seeds.is_empty() {
            return bad("sweep.seeds must not be empty".into());
        }
        Ok(())
    }
}
