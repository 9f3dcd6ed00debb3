use std::f64::consts::PI;

use crate::autodiff::{Tape, Tensor, Var};

/// Fixed Fourier bases for the backcast and forecast ranges.
///
/// Both grids are scaled by `1/(L+H)`: the backcast grid is
/// `[-L, ..., -1]/(L+H)` and the forecast grid `[0, ..., H-1]/(L+H)`.
/// For a grid of `n` points, column `i < n/2` holds `cos(2πi·t)`, column
/// `n/2 + i` holds `sin(2πi·t)`, and odd `n` appends `cos(2π(n/2)·t)`.
#[derive(Clone, Debug, PartialEq)]
pub struct BasisMatrices {
    /// `L×L`, row = time step, column = basis function.
    pub backcast: Tensor,
    /// `H×H`, row = time step, column = basis function.
    pub forecast: Tensor,
}

fn grid_basis(times: &[f64]) -> Tensor {
    let n = times.len();
    let half = n / 2;
    let mut data = vec![0.0; n * n];
    for (row, &t) in times.iter().enumerate() {
        for j in 0..n {
            let v = if j < half {
                (2.0 * PI * j as f64 * t).cos()
            } else if j < 2 * half {
                (2.0 * PI * (j - half) as f64 * t).sin()
            } else {
                (2.0 * PI * half as f64 * t).cos()
            };
            data[row * n + j] = v;
        }
    }
    Tensor::from_parts(vec![n, n], data)
}

pub fn backcast_grid(lookback: usize, horizon: usize) -> Vec<f64> {
    let scale = (lookback + horizon) as f64;
    (0..lookback).map(|k| (k as f64 - lookback as f64) / scale).collect()
}

pub fn forecast_grid(lookback: usize, horizon: usize) -> Vec<f64> {
    let scale = (lookback + horizon) as f64;
    (0..horizon).map(|k| k as f64 / scale).collect()
}

pub fn build_basis(lookback: usize, horizon: usize) -> BasisMatrices {
    BasisMatrices {
        backcast: grid_basis(&backcast_grid(lookback, horizon)),
        forecast: grid_basis(&forecast_grid(lookback, horizon)),
    }
}

/// Transposed bases registered as tape constants.
#[derive(Clone, Copy, Debug)]
pub struct BasisVars {
    pub backcast_t: Var,
    pub forecast_t: Var,
}

impl BasisMatrices {
    pub fn bind(&self, tape: &mut Tape) -> BasisVars {
        BasisVars {
            backcast_t: tape.constant(self.backcast.transposed().expect("square")),
            forecast_t: tape.constant(self.forecast.transposed().expect("square")),
        }
    }
}
