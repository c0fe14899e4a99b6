//! Forward operations. Each op validates shapes, computes its value eagerly
//! and records itself on the output tensor when gradients are being tracked.

use super::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Operation kinds recorded in the graph; the reverse rules live in `autograd`.
pub(crate) enum Op<T: Scalar> {
    Leaf,
    MatMul,
    Transpose,
    Add,
    Sub,
    Mul,
    /// Row-broadcast bias add: parents are `[x: LxE, bias: E]`.
    AddRow,
    Scale {
        factor: T,
    },
    /// Negative-control hook for the gradient checker: the forward pass scales
    /// by `forward` while the backward rule pretends the factor was `backward`.
    ScaleMismatched {
        backward: T,
    },
    MeanRows,
    SumAll,
    SoftmaxRows,
    LayerNorm {
        eps: T,
    },
    Gelu,
    ClampMin {
        floor: T,
    },
    Ln,
    Pick {
        index: usize,
    },
    Reshape,
    ConcatCols {
        widths: Vec<usize>,
    },
    SliceCols {
        start: usize,
        end: usize,
    },
}

pub(crate) fn matmul_raw<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * n];
    for i in 0..m {
        for p in 0..k {
            let av = a[i * k + p];
            let row = p * n;
            let out_row = i * n;
            for j in 0..n {
                out[out_row + j] += av * b[row + j];
            }
        }
    }
    out
}

pub(crate) fn transpose_raw<T: Scalar>(a: &[T], rows: usize, cols: usize) -> Vec<T> {
    let mut out = vec![T::zero(); rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = a[i * cols + j];
        }
    }
    out
}

pub(crate) fn gelu_value<T: Scalar>(x: T) -> T {
    // tanh approximation; the backward rule differentiates this same form.
    let c = T::from_f64((2.0 / std::f64::consts::PI).sqrt());
    let k = T::from_f64(0.044715);
    let half = T::from_f64(0.5);
    let inner = c * (x + k * x * x * x);
    half * x * (T::one() + inner.tanh())
}

pub(crate) fn gelu_derivative<T: Scalar>(x: T) -> T {
    let c = T::from_f64((2.0 / std::f64::consts::PI).sqrt());
    let k = T::from_f64(0.044715);
    let half = T::from_f64(0.5);
    let three = T::from_f64(3.0);
    let inner = c * (x + k * x * x * x);
    let t = inner.tanh();
    let sech2 = T::one() - t * t;
    let d_inner = c * (T::one() + three * k * x * x);
    half * (T::one() + t) + half * x * sech2 * d_inner
}

fn same_shape<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!(
            "{what} requires matching shapes, got {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

impl<T: Scalar> Tensor<T> {
    /// Matrix product of two rank-2 tensors.
    pub fn matmul(&self, rhs: &Tensor<T>) -> Result<Tensor<T>> {
        let (m, k) = self.dims2()?;
        let (k2, n) = rhs.dims2()?;
        if k != k2 {
            return Err(Error::Shape(format!(
                "matmul inner extents differ: {:?} vs {:?}",
                self.shape(),
                rhs.shape()
            )));
        }
        let data = matmul_raw(self.data(), rhs.data(), m, k, n);
        Ok(Tensor::from_op(
            vec![m, n],
            data,
            Op::MatMul,
            vec![self.clone(), rhs.clone()],
        ))
    }

    pub fn transpose(&self) -> Result<Tensor<T>> {
        let (r, c) = self.dims2()?;
        let data = transpose_raw(self.data(), r, c);
        Ok(Tensor::from_op(
            vec![c, r],
            data,
            Op::Transpose,
            vec![self.clone()],
        ))
    }

    pub fn add(&self, rhs: &Tensor<T>) -> Result<Tensor<T>> {
        same_shape(self, rhs, "add")?;
        let data = self
            .data()
            .iter()
            .zip(rhs.data())
            .map(|(&a, &b)| a + b)
            .collect();
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            data,
            Op::Add,
            vec![self.clone(), rhs.clone()],
        ))
    }

    pub fn sub(&self, rhs: &Tensor<T>) -> Result<Tensor<T>> {
        same_shape(self, rhs, "sub")?;
        let data = self
            .data()
            .iter()
            .zip(rhs.data())
            .map(|(&a, &b)| a - b)
            .collect();
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            data,
            Op::Sub,
            vec![self.clone(), rhs.clone()],
        ))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&self, rhs: &Tensor<T>) -> Result<Tensor<T>> {
        same_shape(self, rhs, "mul")?;
        let data = self
            .data()
            .iter()
            .zip(rhs.data())
            .map(|(&a, &b)| a * b)
            .collect();
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            data,
            Op::Mul,
            vec![self.clone(), rhs.clone()],
        ))
    }

    pub fn scale(&self, factor: T) -> Tensor<T> {
        let data = self.data().iter().map(|&a| a * factor).collect();
        Tensor::from_op(
            self.shape().to_vec(),
            data,
            Op::Scale { factor },
            vec![self.clone()],
        )
    }

    /// Forward scales by `forward` but the recorded gradient rule uses
    /// `backward`. Exists solely so the gradient-check command can prove it
    /// detects a wrong attention scale; never used on a sane code path.
    pub(crate) fn scale_mismatched(&self, forward: T, backward: T) -> Tensor<T> {
        let data = self.data().iter().map(|&a| a * forward).collect();
        Tensor::from_op(
            self.shape().to_vec(),
            data,
            Op::ScaleMismatched { backward },
            vec![self.clone()],
        )
    }

    pub fn neg(&self) -> Tensor<T> {
        self.scale(-T::one())
    }

    /// Bias add broadcast over rows: `[L,E] + [E] -> [L,E]`.
    pub fn add_row(&self, bias: &Tensor<T>) -> Result<Tensor<T>> {
        let (rows, cols) = self.dims2()?;
        if bias.shape() != [cols] {
            return Err(Error::Shape(format!(
                "bias shape {:?} does not match row width {cols}",
                bias.shape()
            )));
        }
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(self.data()[r * cols + c] + bias.data()[c]);
            }
        }
        Ok(Tensor::from_op(
            vec![rows, cols],
            data,
            Op::AddRow,
            vec![self.clone(), bias.clone()],
        ))
    }

    /// Column means of a rank-2 tensor: `[m,n] -> [n]`.
    pub fn mean_rows(&self) -> Result<Tensor<T>> {
        let (rows, cols) = self.dims2()?;
        let inv = T::one() / T::from_usize(rows);
        let mut data = vec![T::zero(); cols];
        for r in 0..rows {
            let row = &self.data()[r * cols..(r + 1) * cols];
            for (acc, &v) in data.iter_mut().zip(row) {
                *acc += v * inv;
            }
        }
        Ok(Tensor::from_op(
            vec![cols],
            data,
            Op::MeanRows,
            vec![self.clone()],
        ))
    }

    /// Sum of every element, as a rank-1 scalar tensor.
    pub fn sum(&self) -> Tensor<T> {
        let mut acc = T::zero();
        for &v in self.data() {
            acc += v;
        }
        Tensor::from_op(vec![1], vec![acc], Op::SumAll, vec![self.clone()])
    }

    /// Row-wise softmax with per-row max subtraction for stability.
    pub fn softmax_rows(&self) -> Result<Tensor<T>> {
        let (rows, cols) = self.dims2()?;
        let mut data = vec![T::zero(); rows * cols];
        for r in 0..rows {
            let row = &self.data()[r * cols..(r + 1) * cols];
            let mut max = row[0];
            for &v in &row[1..] {
                if v > max {
                    max = v;
                }
            }
            let mut sum = T::zero();
            for c in 0..cols {
                let e = (row[c] - max).exp();
                data[r * cols + c] = e;
                sum += e;
            }
            let inv = T::one() / sum;
            for c in 0..cols {
                data[r * cols + c] *= inv;
            }
        }
        Ok(Tensor::from_op(
            vec![rows, cols],
            data,
            Op::SoftmaxRows,
            vec![self.clone()],
        ))
    }

    /// Per-row normalization to zero mean and unit variance, then the affine
    /// map `gain * xhat + bias`. Requires at least two columns.
    pub fn layer_norm(&self, gain: &Tensor<T>, bias: &Tensor<T>, eps: T) -> Result<Tensor<T>> {
        let (rows, cols) = self.dims2()?;
        if cols < 2 {
            return Err(Error::Shape(format!(
                "layer_norm needs width >= 2, got {cols}"
            )));
        }
        if gain.shape() != [cols] || bias.shape() != [cols] {
            return Err(Error::Shape(format!(
                "layer_norm gain/bias must have shape [{cols}], got {:?} and {:?}",
                gain.shape(),
                bias.shape()
            )));
        }
        let inv_n = T::one() / T::from_usize(cols);
        let mut data = vec![T::zero(); rows * cols];
        for r in 0..rows {
            let row = &self.data()[r * cols..(r + 1) * cols];
            let mut mean = T::zero();
            for &v in row {
                mean += v;
            }
            mean *= inv_n;
            let mut var = T::zero();
            for &v in row {
                let d = v - mean;
                var += d * d;
            }
            var *= inv_n;
            let inv_std = T::one() / (var + eps).sqrt();
            for c in 0..cols {
                let xhat = (row[c] - mean) * inv_std;
                data[r * cols + c] = xhat * gain.data()[c] + bias.data()[c];
            }
        }
        Ok(Tensor::from_op(
            vec![rows, cols],
            data,
            Op::LayerNorm { eps },
            vec![self.clone(), gain.clone(), bias.clone()],
        ))
    }

    pub fn gelu(&self) -> Tensor<T> {
        let data = self.data().iter().map(|&x| gelu_value(x)).collect();
        Tensor::from_op(self.shape().to_vec(), data, Op::Gelu, vec![self.clone()])
    }

    /// Elementwise `max(x, floor)`.
    pub fn clamp_min(&self, floor: T) -> Tensor<T> {
        let data = self
            .data()
            .iter()
            .map(|&x| if x > floor { x } else { floor })
            .collect();
        Tensor::from_op(
            self.shape().to_vec(),
            data,
            Op::ClampMin { floor },
            vec![self.clone()],
        )
    }

    /// Elementwise natural log. Callers must keep inputs positive, e.g. via
    /// [`Tensor::clamp_min`].
    pub fn ln(&self) -> Tensor<T> {
        let data = self.data().iter().map(|&x| x.ln()).collect();
        Tensor::from_op(self.shape().to_vec(), data, Op::Ln, vec![self.clone()])
    }

    /// Select one element of a rank-1 tensor as a scalar tensor.
    pub fn pick(&self, index: usize) -> Result<Tensor<T>> {
        match self.shape() {
            [n] => {
                if index >= *n {
                    return Err(Error::Argument(format!(
                        "pick index {index} out of range for length {n}"
                    )));
                }
                Ok(Tensor::from_op(
                    vec![1],
                    vec![self.data()[index]],
                    Op::Pick { index },
                    vec![self.clone()],
                ))
            }
            other => Err(Error::Shape(format!(
                "pick expects a rank-1 tensor, got shape {other:?}"
            ))),
        }
    }

    /// Same data under a new shape with equal element count.
    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor<T>> {
        super::check_shape(shape, self.numel())?;
        Ok(Tensor::from_op(
            shape.to_vec(),
            self.data().to_vec(),
            Op::Reshape,
            vec![self.clone()],
        ))
    }

    /// `X.linear(W, b)` = `X W (+ b)` for `X: [L,D]`, `W: [D,E]`, `b: [E]`.
    pub fn linear(&self, weight: &Tensor<T>, bias: Option<&Tensor<T>>) -> Result<Tensor<T>> {
        let product = self.matmul(weight)?;
        match bias {
            Some(b) => product.add_row(b),
            None => Ok(product),
        }
    }

    /// Column-wise concatenation of rank-2 tensors sharing a row count.
    pub fn concat_features(parts: &[Tensor<T>]) -> Result<Tensor<T>> {
        if parts.is_empty() {
            return Err(Error::Argument("concat_features of an empty list".into()));
        }
        let (rows, _) = parts[0].dims2()?;
        let mut widths = Vec::with_capacity(parts.len());
        for p in parts {
            let (r, c) = p.dims2()?;
            if r != rows {
                return Err(Error::Shape(format!(
                    "concat_features row mismatch: {rows} vs {r}"
                )));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut data = vec![T::zero(); rows * total];
        let mut offset = 0;
        for (p, &w) in parts.iter().zip(&widths) {
            for r in 0..rows {
                let src = &p.data()[r * w..(r + 1) * w];
                data[r * total + offset..r * total + offset + w].copy_from_slice(src);
            }
            offset += w;
        }
        Ok(Tensor::from_op(
            vec![rows, total],
            data,
            Op::ConcatCols { widths },
            parts.to_vec(),
        ))
    }

    /// Contiguous column block `[start, end)` of a rank-2 tensor.
    pub fn slice_cols(&self, start: usize, end: usize) -> Result<Tensor<T>> {
        let (rows, cols) = self.dims2()?;
        if start >= end || end > cols {
            return Err(Error::Argument(format!(
                "column slice {start}..{end} invalid for width {cols}"
            )));
        }
        let w = end - start;
        let mut data = Vec::with_capacity(rows * w);
        for r in 0..rows {
            data.extend_from_slice(&self.data()[r * cols + start..r * cols + end]);
        }
        Ok(Tensor::from_op(
            vec![rows, w],
            data,
            Op::SliceCols { start, end },
            vec![self.clone()],
        ))
    }
}
