use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use dewp_core::data::{
    aggregate_hourly, apply_normalization, impute_missing, load_csv, lookback_window, parse_timestamp,
    preprocess_csv, window_count,
};
use dewp_core::eval::rolling_evaluate;
use dewp_core::train::train as fit;
use dewp_core::{
    Checkpoint, DatasetBundle, Forecaster, MetricsReport, Model, OptimizerState, RollingPlan, TrainReport,
};

use crate::config::{parse_assignment, RunConfig};
use crate::CliError;

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

/// Writes the effective configuration next to an artifact.
fn write_config_sidecar(cfg: &RunConfig, artifact: &Path) -> Result<(), CliError> {
    let header = format!(
        "# effective configuration\n# tool_version={}\n# config_digest={}\n",
        dewp_core::VERSION,
        cfg.digest()
    );
    write_file(&artifact.with_extension("config.toml"), header + &cfg.to_toml())
}

fn mismatch(message: String) -> CliError {
    CliError::Core(dewp_core::Error::ConfigMismatch(message))
}

/// Errors unless the bundle was produced under the configured data section.
fn check_bundle(cfg: &RunConfig, bundle: &DatasetBundle) -> Result<(), CliError> {
    let s = &bundle.series;
    if s.variables != cfg.data.variables || s.target_name != cfg.data.target {
        return Err(mismatch(format!(
            "bundle has variables {:?} (target `{}`), config expects {:?} (target `{}`)",
            s.variables, s.target_name, cfg.data.variables, cfg.data.target
        )));
    }
    if bundle.boundary != cfg.data.boundary {
        return Err(mismatch(format!(
            "bundle split boundary {} differs from data.boundary {}",
            bundle.boundary, cfg.data.boundary
        )));
    }
    Ok(())
}

pub fn preprocess(cfg: &RunConfig, raw: Option<&Path>, out: Option<&Path>) -> Result<(), CliError> {
    let raw = raw
        .map(Path::to_path_buf)
        .or_else(|| cfg.data.raw_csv.clone())
        .ok_or_else(|| CliError::Config("no raw CSV: pass --raw or set data.raw_csv".into()))?;
    let out = out.unwrap_or(Path::new("bundle.json"));
    let mut bundle = preprocess_csv(&raw, &cfg.preprocess_options())?;
    bundle.config_digest = cfg.data_digest();
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let digest = bundle.write(out)?;
    write_config_sidecar(cfg, out)?;

    let (l, h, stride) = (cfg.model.lookback, cfg.model.horizon, cfg.data.stride);
    let train = bundle.train_series()?;
    let test = bundle.test_series()?;
    println!("raw records:      {}", bundle.raw_records);
    println!("duplicate rows:   {}", bundle.duplicate_timestamps);
    println!("hourly rows:      {} ({} train, {} test)", bundle.series.len(), train.len(), test.len());
    println!("imputed cells:    {}", bundle.imputed_cells);
    println!("train windows:    {} (L={l}, H={h}, stride={stride})", window_count(train.len(), l, h, stride));
    println!("bundle:           {} sha256 {digest}", out.display());
    Ok(())
}

/// Trains the configured model on `bundle` with `cfg.train.seed`.
pub fn train_model(cfg: &RunConfig, bundle: &DatasetBundle) -> Result<(Model, OptimizerState, TrainReport), CliError> {
    check_bundle(cfg, bundle)?;
    let dataset = bundle.dataset(
        cfg.model.lookback,
        cfg.model.horizon,
        cfg.data.stride,
        cfg.data.validation_fraction,
    )?;
    if dataset.train.is_empty() || dataset.validation.is_empty() {
        return Err(CliError::Core(dewp_core::Error::Planning {
            message: "training split too short for one train and one validation window".into(),
            required: cfg.model.lookback + cfg.model.horizon + 1,
            available: bundle.train_series()?.len(),
        }));
    }
    let mut model = cfg.model_spec().build(cfg.train.seed)?;
    let (state, report) = fit(&mut model, &dataset, &cfg.train)?;
    Ok((model, state, report))
}

pub fn train(cfg: &RunConfig, bundle_path: &Path, out: Option<&Path>) -> Result<(), CliError> {
    let out = out.unwrap_or(Path::new("model.ckpt"));
    let bundle = DatasetBundle::read(bundle_path)?;
    let (model, state, report) = train_model(cfg, &bundle)?;

    let mut ckpt = Checkpoint::new(&model, Some(state), Some(bundle.stats.clone()));
    ckpt.config_digest = cfg.digest();
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let digest = ckpt.save(out)?;
    let report_path = out.with_extension("report.txt");
    let text = report.to_text(&[
        ("tool_version", dewp_core::VERSION),
        ("config_digest", &cfg.digest()),
        ("bundle_digest", &bundle.digest()),
    ]);
    write_file(&report_path, text)?;
    write_config_sidecar(cfg, out)?;
    println!(
        "trained {} epochs, best epoch {} (validation mse {:.6}, initial {:.6}), stopped by {:?}",
        report.epochs.len(),
        report.best_epoch,
        report.best_val_mse,
        report.initial_val_mse,
        report.stop_reason
    );
    println!("checkpoint: {} sha256 {digest}", out.display());
    println!("report:     {}", report_path.display());
    Ok(())
}

pub fn rolling_plan(cfg: &RunConfig, bundle: &DatasetBundle) -> RollingPlan {
    let h = cfg.model.horizon;
    RollingPlan {
        start: cfg.eval.start.unwrap_or(bundle.boundary),
        end: cfg.eval.end.unwrap_or_else(|| bundle.series.end()),
        horizon: h,
        interval: cfg.eval.interval.unwrap_or(h),
    }
}

pub fn evaluate_model(cfg: &RunConfig, model: &Model, bundle: &DatasetBundle) -> Result<MetricsReport, CliError> {
    let plan = rolling_plan(cfg, bundle);
    let mut report = rolling_evaluate(model, &bundle.series, &plan, &bundle.stats, cfg.eval.floor)?;
    report.config_digest = cfg.digest();
    Ok(report)
}

pub fn evaluate(cfg: &RunConfig, bundle_path: &Path, checkpoint: &Path, out: Option<&Path>) -> Result<(), CliError> {
    let out = out.unwrap_or(Path::new("metrics.txt"));
    let bundle = DatasetBundle::read(bundle_path)?;
    check_bundle(cfg, &bundle)?;
    let ckpt = Checkpoint::load_expecting(checkpoint, &cfg.model_spec())?;
    match ckpt.stats_digest() {
        Some(d) if d == bundle.stats.digest() => {}
        Some(d) => {
            return Err(mismatch(format!(
                "checkpoint was trained under normalization stats {d}, bundle has {}",
                bundle.stats.digest()
            )))
        }
        None => return Err(mismatch("checkpoint carries no normalization stats".into())),
    }
    let report = evaluate_model(cfg, &ckpt.model()?, &bundle)?;
    write_file(out, report.to_text()?)?;
    write_config_sidecar(cfg, out)?;
    println!(
        "{} origins, {} points: MAE {:.6}  MAPE {:.6}  MSPE {:.6}  (raw MAE {:.4}, floor {})",
        report.rows.len(),
        report.n_points,
        report.mae,
        report.mape,
        report.mspe,
        report.mae_raw,
        report.floor
    );
    println!("report: {}", out.display());
    Ok(())
}

pub fn predict(
    cfg: &RunConfig,
    checkpoint: &Path,
    csv: &Path,
    origin: &str,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let out = out.unwrap_or(Path::new("forecast.csv"));
    let origin = parse_timestamp(origin).ok_or_else(|| CliError::Config(format!("cannot parse origin `{origin}`")))?;
    let ckpt = Checkpoint::load(checkpoint)?;
    let stats = ckpt
        .stats
        .as_ref()
        .ok_or_else(|| mismatch("checkpoint carries no normalization stats".into()))?;
    let names: Vec<&str> = stats.variables.iter().map(|v| v.name.as_str()).collect();
    if names != cfg.data.variables.iter().map(String::as_str).collect::<Vec<_>>() {
        return Err(mismatch(format!(
            "checkpoint variables {names:?} differ from data.variables {:?}",
            cfg.data.variables
        )));
    }
    let model = ckpt.model()?;

    let table = load_csv(csv, &cfg.data.timestamp_column, &cfg.data.variables)?;
    let hourly = aggregate_hourly(&table, &cfg.data.target)?;
    let series = apply_normalization(&impute_missing(&hourly, stats)?, stats)?;
    let hours = (origin - series.start).num_hours();
    if origin < series.start || series.start + chrono::Duration::hours(hours) != origin {
        return Err(CliError::Core(dewp_core::Error::Planning {
            message: format!("origin {origin} is not an hour at or after the data start {}", series.start),
            required: model.lookback(),
            available: 0,
        }));
    }
    let sample = lookback_window(&series, hours as usize, model.lookback())?;
    let pred = model.predict(&sample)?;
    let target = stats
        .get(&cfg.data.target)
        .ok_or_else(|| mismatch(format!("no stats for target `{}`", cfg.data.target)))?;

    let mut text = format!(
        "# tool_version={}\n# config_digest={}\n# training_config_digest={}\ntimestamp,predicted_power_normalized,predicted_power_raw\n",
        dewp_core::VERSION,
        cfg.digest(),
        ckpt.config_digest
    );
    for (h, p) in pred.iter().enumerate() {
        let ts = origin + chrono::Duration::hours(h as i64);
        let _ = writeln!(text, "{},{p:?},{:?}", ts.format("%Y-%m-%dT%H:%M:%S"), target.denormalize(*p));
    }
    write_file(out, text)?;
    println!("wrote {} forecast hours from {origin} to {}", pred.len(), out.display());
    Ok(())
}

/// One sweep axis, `section.key` with its candidate values.
#[derive(Clone, Debug)]
struct Axis {
    key: String,
    values: Vec<String>,
}

fn parse_axis(raw: &str) -> Result<Axis, CliError> {
    let (section, key, values) = parse_assignment(raw)?;
    let values: Vec<String> = values.split(',').map(|v| v.trim().to_string()).collect();
    if values.iter().any(String::is_empty) {
        return Err(CliError::Config(format!("grid `{raw}` has an empty value")));
    }
    Ok(Axis {
        key: format!("{section}.{key}"),
        values,
    })
}

/// Grid points in row-major order (first axis outermost).
fn grid_points(axes: &[Axis]) -> Vec<Vec<(String, String)>> {
    let mut points = vec![vec![]];
    for axis in axes {
        points = points
            .into_iter()
            .flat_map(|p| {
                axis.values.iter().map(move |v| {
                    let mut q = p.clone();
                    q.push((axis.key.clone(), v.clone()));
                    q
                })
            })
            .collect();
    }
    points
}

fn point_label(point: &[(String, String)]) -> String {
    point.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(" ")
}

fn cell_file_name(point: &[(String, String)], seed: u64) -> String {
    let mut name: String = point
        .iter()
        .map(|(k, v)| format!("{k}-{v}"))
        .collect::<Vec<_>>()
        .join("_")
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' })
        .collect();
    let _ = write!(name, "_seed-{seed}.metrics.txt");
    name
}

struct Cell {
    label: String,
    seed: u64,
    cfg: RunConfig,
    path: PathBuf,
}

pub fn sweep(
    base: &RunConfig,
    config_path: Option<&Path>,
    overrides: &[String],
    bundle_path: &Path,
    grid: &[String],
    out: Option<&Path>,
) -> Result<(), CliError> {
    let out = out.unwrap_or(Path::new("sweep"));
    let axes = grid.iter().map(|g| parse_axis(g)).collect::<Result<Vec<_>, _>>()?;

    // Every cell's configuration is validated before any training starts.
    let mut cells = Vec::new();
    for point in grid_points(&axes) {
        for &seed in &base.sweep.seeds {
            let mut o = overrides.to_vec();
            o.extend(point.iter().map(|(k, v)| format!("{k}={v}")));
            o.push(format!("train.seed={seed}"));
            let cfg = RunConfig::load(config_path, &o)
                .map_err(|e| CliError::Config(format!("grid point `{}`: {e}", point_label(&point))))?;
            cells.push(Cell {
                label: point_label(&point),
                seed,
                path: out.join(cell_file_name(&point, seed)),
                cfg,
            });
        }
    }

    let bundle = DatasetBundle::read(bundle_path)?;
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let mut reports = Vec::with_capacity(cells.len());
    for (i, cell) in cells.iter().enumerate() {
        if let Ok(done) = MetricsReport::read(&cell.path) {
            if done.config_digest == cell.cfg.digest() {
                log::info!("cell {}/{} [{} seed {}] already complete", i + 1, cells.len(), cell.label, cell.seed);
                reports.push(done);
                continue;
            }
        }
        log::info!("cell {}/{} [{} seed {}]", i + 1, cells.len(), cell.label, cell.seed);
        let (model, _, train_report) = train_model(&cell.cfg, &bundle)?;
        let report = evaluate_model(&cell.cfg, &model, &bundle)?;
        write_file(
            &cell.path.with_extension("").with_extension("train.txt"),
            train_report.to_text(&[
                ("tool_version", dewp_core::VERSION),
                ("config_digest", &cell.cfg.digest()),
            ]),
        )?;
        // Metrics last: their presence marks the cell complete.
        write_file(&cell.path, report.to_text()?)?;
        reports.push(report);
    }

    let mut table = format!(
        "# tool_version={}\n# config_digest={}\npoint,seed,mae,mape,mspe,mse,mae_raw\n",
        dewp_core::VERSION,
        base.digest()
    );
    for (cell, r) in cells.iter().zip(&reports) {
        let _ = writeln!(
            table,
            "{},{},{:?},{:?},{:?},{:?},{:?}",
            cell.label,
            cell.seed,
            r.mae,
            r.mape,
            r.mspe,
            r.mse(),
            r.mae_raw
        );
    }
    table.push_str("# point,seeds,mae_mean,mae_min,mae_max,mse_mean,mse_min,mse_max\n");
    let per_point = base.sweep.seeds.len();
    for (chunk_cells, chunk) in cells.chunks(per_point).zip(reports.chunks(per_point)) {
        let stat = |f: &dyn Fn(&MetricsReport) -> f64| {
            let v: Vec<f64> = chunk.iter().map(f).collect();
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            let min = v.iter().copied().fold(f64::INFINITY, f64::min);
            let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (mean, min, max)
        };
        let (a, b, c) = stat(&|r| r.mae);
        let (d, e, f) = stat(&|r| r.mse());
        let line = format!(
            "{},{},{a:?},{b:?},{c:?},{d:?},{e:?},{f:?}",
            chunk_cells[0].label,
            chunk.len()
        );
        println!("{line}");
        let _ = writeln!(table, "# {line}");
    }
    let summary = out.join("summary.csv");
    write_file(&summary, table)?;
    write_config_sidecar(base, &summary)?;
    println!("summary: {}", summary.display());
    Ok(())
}
