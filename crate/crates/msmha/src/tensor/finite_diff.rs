//! Central-difference gradients, the oracle the analytic rules are checked
//! against. Deliberately independent of the graph machinery: it only evaluates
//! the forward function.

use super::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Step size that balances truncation against cancellation at 64 bits.
pub const DEFAULT_FD_EPS: f64 = 1e-5;

/// Central-difference gradient of a scalar-valued `f` at `x`:
/// `(f(x + eps e_i) - f(x - eps e_i)) / (2 eps)` per element.
///
/// `f` must be deterministic. `eps` around `1e-5` is appropriate at 64 bits.
pub fn finite_diff_grad<T, F>(f: F, x: &Tensor<T>, eps: T) -> Result<Tensor<T>>
where
    T: Scalar,
    F: Fn(&Tensor<T>) -> Result<Tensor<T>>,
{
    if eps <= T::zero() {
        return Err(Error::Argument(format!("eps must be positive, got {eps}")));
    }
    let base = x.data().to_vec();
    let mut grad = vec![T::zero(); base.len()];
    let two_eps = T::from_f64(2.0) * eps;
    for i in 0..base.len() {
        let mut plus = base.clone();
        plus[i] += eps;
        let mut minus = base.clone();
        minus[i] -= eps;
        let fp = eval_scalar(&f, x.shape(), plus)?;
        let fm = eval_scalar(&f, x.shape(), minus)?;
        grad[i] = (fp - fm) / two_eps;
    }
    Tensor::new(x.shape(), grad)
}

fn eval_scalar<T, F>(f: &F, shape: &[usize], data: Vec<T>) -> Result<T>
where
    T: Scalar,
    F: Fn(&Tensor<T>) -> Result<Tensor<T>>,
{
    let out = f(&Tensor::new(shape, data)?)?;
    if out.numel() != 1 {
        return Err(Error::Argument(format!(
            "finite_diff_grad requires a scalar-valued function, got shape {:?}",
            out.shape()
        )));
    }
    Ok(out.data()[0])
}

/// Largest elementwise relative error `|a-b| / max(1, |a|, |b|)`.
pub fn max_relative_error<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!(
            "relative error over mismatched shapes {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let mut worst = 0.0f64;
    for (&x, &y) in a.data().iter().zip(b.data()) {
        let x = x.to_f64();
        let y = y.to_f64();
        let denom = 1.0f64.max(x.abs()).max(y.abs());
        let err = (x - y).abs() / denom;
        if err > worst {
            worst = err;
        }
    }
    Ok(worst)
}
