//! Trains DEWP and the Linear baseline on the synthetic seasonal benchmark
//! and prints rolling test metrics.
//!
//! Usage: `cargo run --release --example synthetic_benchmark -- [stacks] [seeds] [epochs]`

use std::time::Instant;

use dewp_core::checkpoint::ModelSpec;
use dewp_core::eval::{rolling_evaluate, LinearConfig, RollingPlan, DEFAULT_FLOOR};
use dewp_core::model::ModelConfig;
use dewp_core::synthetic::{seasonal_bundle, SeasonalSpec};
use dewp_core::train::{train, TrainConfig};

fn main() -> dewp_core::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let stacks = args.first().copied().unwrap_or(5);
    let seeds = args.get(1).copied().unwrap_or(1) as u64;
    let epochs = args.get(2).copied().unwrap_or(20);
    let (lookback, horizon) = (24, 12);

    for seed in 0..seeds {
        let bundle = seasonal_bundle(&SeasonalSpec::new(2400, 100 + seed), 400)?;
        let dataset = bundle.dataset(lookback, horizon, 1, 0.1)?;
        let test = bundle.test_series()?;
        let plan = RollingPlan::tiling(test.start, test.end(), horizon);
        let cfg = TrainConfig {
            batch_size: 32,
            learning_rate: 1e-3,
            max_epochs: epochs,
            patience: 5,
            seed,
            ..TrainConfig::default()
        };
        let specs = [
            ModelSpec::Dewp(ModelConfig {
                hidden: 16,
                stacks,
                conv_channels: 16,
                heads: 2,
                ..ModelConfig::new(3, lookback, horizon)
            }),
            ModelSpec::Linear(LinearConfig {
                input_dim: 3,
                lookback,
                horizon,
                hidden: 64,
            }),
        ];
        for spec in specs {
            let started = Instant::now();
            let mut model = spec.build(seed)?;
            let (_, report) = train(&mut model, &dataset, &cfg)?;
            let metrics = rolling_evaluate(&model, &bundle.series, &plan, &bundle.stats, DEFAULT_FLOOR)?;
            let kind = match spec {
                ModelSpec::Dewp(_) => "dewp",
                ModelSpec::Linear(_) => "linear",
            };
            println!(
                "seed {seed} {kind:6} epochs {:3} best {:3} val {:.5} (init {:.5}) test mae {:.5} mse {:.5} [{:.1}s]",
                report.epochs.len(),
                report.best_epoch,
                report.best_val_mse,
                report.initial_val_mse,
                metrics.mae,
                metrics.mse(),
                started.elapsed().as_secs_f64()
            );
        }
    }
    Ok(())
}
