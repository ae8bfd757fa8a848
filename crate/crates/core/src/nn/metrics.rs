//! Loss and evaluation metrics.

use super::graph::Activation;
use super::Scalar;
use crate::error::{Error, Result};

/// Mean absolute error over every element, with its gradient
/// `sign(pred - target) / N` (zero where they agree).
pub fn mae_loss<T: Scalar>(pred: &Activation<T>, target: &Activation<T>) -> Result<(f64, Activation<T>)> {
    let pairs: Vec<(&ndarray::Array2<T>, &ndarray::Array2<T>)> = match (pred, target) {
        (Activation::Flat(p), Activation::Flat(y)) => vec![(p, y)],
        (Activation::Seq(ps), Activation::Seq(ys)) if ps.len() == ys.len() => ps.iter().zip(ys).collect(),
        _ => return Err(Error::shape("target matching prediction layout", "mismatch")),
    };
    let mut n = 0usize;
    let mut sum = 0.0f64;
    for (p, y) in &pairs {
        if p.dim() != y.dim() {
            return Err(Error::shape(format!("{:?}", p.dim()), format!("{:?}", y.dim())));
        }
        n += p.len();
        sum += p.iter().zip(y.iter()).map(|(a, b)| (a.f64() - b.f64()).abs()).sum::<f64>();
    }
    if n == 0 {
        return Err(Error::Empty("loss input"));
    }
    let inv = T::of(1.0 / n as f64);
    let grad = |p: &ndarray::Array2<T>, y: &ndarray::Array2<T>| {
        let mut d = p - y;
        d.mapv_inplace(|v| {
            if v > T::zero() {
                inv
            } else if v < T::zero() {
                -inv
            } else if v.is_nan() {
                v
            } else {
                T::zero()
            }
        });
        d
    };
    let g = match pred {
        Activation::Flat(_) => Activation::Flat(grad(pairs[0].0, pairs[0].1)),
        Activation::Seq(_) => Activation::Seq(pairs.iter().map(|(p, y)| grad(p, y)).collect()),
    };
    Ok((sum / n as f64, g))
}

fn check(y: &[f64], y_hat: &[f64]) -> Result<()> {
    if y.is_empty() {
        return Err(Error::Empty("metric input"));
    }
    if y.len() != y_hat.len() {
        return Err(Error::shape(y.len().to_string(), y_hat.len().to_string()));
    }
    Ok(())
}

pub fn mae_metric(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check(y, y_hat)?;
    Ok(y.iter().zip(y_hat).map(|(a, b)| (a - b).abs()).sum::<f64>() / y.len() as f64)
}

pub fn rmse_metric(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check(y, y_hat)?;
    let mse = y.iter().zip(y_hat).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len() as f64;
    Ok(mse.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn metric_examples() {
        assert_eq!(mae_metric(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(rmse_metric(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mae_metric(&[0.0, 1.0], &[1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(rmse_metric(&[0.0, 1.0], &[1.0, 0.0]).unwrap(), 1.0);
        assert!((mae_metric(&[0.0, 0.0], &[0.1, 0.3]).unwrap() - 0.2).abs() < 1e-15);
        assert!((rmse_metric(&[0.0, 0.0], &[0.1, 0.3]).unwrap() - 0.223_606_797_749_979).abs() < 1e-12);
        assert!(mae_metric(&[], &[]).is_err());
    }

    #[test]
    fn loss_gradient_is_sign_over_n() {
        let p = Activation::Flat(array![[1.0f64], [0.0], [0.5]]);
        let y = Activation::Flat(array![[0.0f64], [1.0], [0.5]]);
        let (l, g) = mae_loss(&p, &y).unwrap();
        assert!((l - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(g, Activation::Flat(array![[1.0 / 3.0], [-1.0 / 3.0], [0.0]]));
    }
}
