use crate::error::{Error, Result};

/// Denominator floor for percentage metrics, in normalized units.
pub const DEFAULT_FLOOR: f64 = 1e-3;

fn check(op: &'static str, y: &[f64], y_hat: &[f64]) -> Result<()> {
    if y.len() != y_hat.len() || y.is_empty() {
        return Err(Error::dim(op, &[y.len()], &[y_hat.len()]));
    }
    Ok(())
}

pub fn mae(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check("mae", y, y_hat)?;
    let s: f64 = y.iter().zip(y_hat).map(|(a, b)| (a - b).abs()).sum();
    Ok(s / y.len() as f64)
}

/// Mean of `|y − ŷ| / max(|y|, floor)`.
pub fn mape(y: &[f64], y_hat: &[f64], floor: f64) -> Result<f64> {
    check("mape", y, y_hat)?;
    let s: f64 = y
        .iter()
        .zip(y_hat)
        .map(|(a, b)| (a - b).abs() / a.abs().max(floor))
        .sum();
    Ok(s / y.len() as f64)
}

/// Mean of `(y − ŷ)² / max(|y|, floor)`.
pub fn mspe(y: &[f64], y_hat: &[f64], floor: f64) -> Result<f64> {
    check("mspe", y, y_hat)?;
    let s: f64 = y
        .iter()
        .zip(y_hat)
        .map(|(a, b)| (a - b) * (a - b) / a.abs().max(floor))
        .sum();
    Ok(s / y.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn hand_cases() {
        assert_eq!(mae(&[1.0, 2.0], &[1.0, 3.0]).unwrap(), 0.5);
        assert_eq!(mape(&[2.0], &[1.0], DEFAULT_FLOOR).unwrap(), 0.5);
        assert_eq!(mspe(&[2.0], &[0.0], DEFAULT_FLOOR).unwrap(), 2.0);
        let y = [0.3, 0.0, 1.0];
        assert_eq!(mae(&y, &y).unwrap(), 0.0);
        assert_eq!(mape(&y, &y, DEFAULT_FLOOR).unwrap(), 0.0);
        assert_eq!(mspe(&y, &y, DEFAULT_FLOOR).unwrap(), 0.0);
    }

    #[test]
    fn zero_target_uses_floor() {
        let m = mape(&[0.0], &[0.01], 1e-3).unwrap();
        assert!((m - 10.0).abs() < 1e-12);
        let s = mspe(&[0.0], &[0.01], 1e-3).unwrap();
        assert!((s - 0.1).abs() < 1e-12);
    }

    #[test]
    fn length_mismatch_is_a_dimension_error() {
        assert!(matches!(mae(&[1.0], &[1.0, 2.0]), Err(Error::Dimension { .. })));
        assert!(matches!(mape(&[], &[], 1e-3), Err(Error::Dimension { .. })));
        assert!(mspe(&[1.0, 2.0], &[1.0], 1e-3).is_err());
    }

    #[test]
    fn agree_with_loop_oracles() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..100 {
            let n = 100;
            let y: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
            let p: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.2..1.2)).collect();
            let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
            for i in 0..n {
                let d = y[i] - p[i];
                let den = if y[i].abs() > 1e-3 { y[i].abs() } else { 1e-3 };
                a += d.abs();
                b += d.abs() / den;
                c += d * d / den;
            }
            let nf = n as f64;
            assert!((mae(&y, &p).unwrap() - a / nf).abs() < 1e-12);
            assert!((mape(&y, &p, 1e-3).unwrap() - b / nf).abs() < 1e-12 * (b / nf).max(1.0));
            assert!((mspe(&y, &p, 1e-3).unwrap() - c / nf).abs() < 1e-12 * (c / nf).max(1.0));
        }
    }
}
