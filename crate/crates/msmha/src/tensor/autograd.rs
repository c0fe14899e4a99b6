//! Reverse-mode gradient propagation over the recorded graph.

use std::collections::{HashMap, HashSet};

use super::ops::{gelu_derivative, matmul_raw, transpose_raw};
use super::{GradientMap, Op, Scalar, Tensor};
use crate::error::{Error, Result};

impl<T: Scalar> Tensor<T> {
    /// Reverse-mode gradients of a scalar loss with respect to `leaves`.
    ///
    /// Leaves that do not lie on any path to the loss receive zero gradients.
    pub fn backward(&self, leaves: &[&Tensor<T>]) -> Result<GradientMap<T>> {
        if self.numel() != 1 {
            return Err(Error::Argument(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.shape()
            )));
        }

        let mut grads: HashMap<u64, Vec<T>> = HashMap::new();
        grads.insert(self.id(), vec![T::one()]);

        for t in topo_order(self).iter().rev() {
            let node = t.node().expect("topo order contains only tracked tensors");
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            // All consumers of `t` were already processed, so its gradient is
            // final; take it out of the table.
            let Some(grad) = grads.remove(&t.id()) else {
                continue;
            };
            propagate(t, &node.op, &node.parents, &grad, &mut grads);
        }

        let mut out = HashMap::with_capacity(leaves.len());
        for leaf in leaves {
            let data = grads
                .get(&leaf.id())
                .cloned()
                .unwrap_or_else(|| vec![T::zero(); leaf.numel()]);
            out.insert(leaf.id(), Tensor::new(leaf.shape(), data)?);
        }
        Ok(GradientMap::from_raw(out))
    }
}

/// Iterative post-order over tracked tensors reachable from `root`.
fn topo_order<T: Scalar>(root: &Tensor<T>) -> Vec<Tensor<T>> {
    let mut order = Vec::new();
    if !root.is_tracked() {
        return order;
    }
    let mut visited: HashSet<u64> = HashSet::new();
    // (tensor, expanded) pairs; a tensor is emitted after its parents.
    let mut stack: Vec<(Tensor<T>, bool)> = vec![(root.clone(), false)];
    while let Some((t, expanded)) = stack.pop() {
        if expanded {
            order.push(t);
            continue;
        }
        if !visited.insert(t.id()) {
            continue;
        }
        let parents: Vec<Tensor<T>> = t
            .node()
            .map(|n| n.parents.iter().filter(|p| p.is_tracked()).cloned().collect())
            .unwrap_or_default();
        stack.push((t, true));
        for p in parents {
            if !visited.contains(&p.id()) {
                stack.push((p, false));
            }
        }
    }
    order
}

fn accumulate<T: Scalar>(grads: &mut HashMap<u64, Vec<T>>, target: &Tensor<T>, delta: Vec<T>) {
    match grads.get_mut(&target.id()) {
        Some(existing) => {
            for (e, d) in existing.iter_mut().zip(delta) {
                *e += d;
            }
        }
        None => {
            grads.insert(target.id(), delta);
        }
    }
}

fn propagate<T: Scalar>(
    out: &Tensor<T>,
    op: &Op<T>,
    parents: &[Tensor<T>],
    grad: &[T],
    grads: &mut HashMap<u64, Vec<T>>,
) {
    match op {
        Op::Leaf => {}

        Op::MatMul => {
            let (m, k) = (parents[0].shape()[0], parents[0].shape()[1]);
            let n = parents[1].shape()[1];
            // dA = G B^T, dB = A^T G
            let bt = transpose_raw(parents[1].data(), k, n);
            let da = matmul_raw(grad, &bt, m, n, k);
            let at = transpose_raw(parents[0].data(), m, k);
            let db = matmul_raw(&at, grad, k, m, n);
            accumulate(grads, &parents[0], da);
            accumulate(grads, &parents[1], db);
        }

        Op::Transpose => {
            let (out_r, out_c) = (out.shape()[0], out.shape()[1]);
            accumulate(grads, &parents[0], transpose_raw(grad, out_r, out_c));
        }

        Op::Add => {
            accumulate(grads, &parents[0], grad.to_vec());
            accumulate(grads, &parents[1], grad.to_vec());
        }

        Op::Sub => {
            accumulate(grads, &parents[0], grad.to_vec());
            accumulate(grads, &parents[1], grad.iter().map(|&g| -g).collect());
        }

        Op::Mul => {
            let da = grad
                .iter()
                .zip(parents[1].data())
                .map(|(&g, &b)| g * b)
                .collect();
            let db = grad
                .iter()
                .zip(parents[0].data())
                .map(|(&g, &a)| g * a)
                .collect();
            accumulate(grads, &parents[0], da);
            accumulate(grads, &parents[1], db);
        }

        Op::AddRow => {
            let (rows, cols) = (out.shape()[0], out.shape()[1]);
            accumulate(grads, &parents[0], grad.to_vec());
            let mut db = vec![T::zero(); cols];
            for r in 0..rows {
                for c in 0..cols {
                    db[c] += grad[r * cols + c];
                }
            }
            accumulate(grads, &parents[1], db);
        }

        Op::Scale { factor } => {
            accumulate(grads, &parents[0], grad.iter().map(|&g| g * *factor).collect());
        }

        Op::ScaleMismatched { backward } => {
            accumulate(
                grads,
                &parents[0],
                grad.iter().map(|&g| g * *backward).collect(),
            );
        }

        Op::MeanRows => {
            let (rows, cols) = (parents[0].shape()[0], parents[0].shape()[1]);
            let inv = T::one() / T::from_usize(rows);
            let mut dx = vec![T::zero(); rows * cols];
            for r in 0..rows {
                for c in 0..cols {
                    dx[r * cols + c] = grad[c] * inv;
                }
            }
            accumulate(grads, &parents[0], dx);
        }

        Op::SumAll => {
            let g = grad[0];
            accumulate(grads, &parents[0], vec![g; parents[0].numel()]);
        }

        Op::SoftmaxRows => {
            // dx_j = s_j (g_j - sum_k g_k s_k) per row
            let (rows, cols) = (out.shape()[0], out.shape()[1]);
            let s = out.data();
            let mut dx = vec![T::zero(); rows * cols];
            for r in 0..rows {
                let base = r * cols;
                let mut dot = T::zero();
                for c in 0..cols {
                    dot += grad[base + c] * s[base + c];
                }
                for c in 0..cols {
                    dx[base + c] = s[base + c] * (grad[base + c] - dot);
                }
            }
            accumulate(grads, &parents[0], dx);
        }

        Op::LayerNorm { eps } => {
            let x = &parents[0];
            let gain = &parents[1];
            let (rows, cols) = (x.shape()[0], x.shape()[1]);
            let inv_n = T::one() / T::from_usize(cols);
            let n = T::from_usize(cols);
            let mut dx = vec![T::zero(); rows * cols];
            let mut dgain = vec![T::zero(); cols];
            let mut dbias = vec![T::zero(); cols];
            for r in 0..rows {
                let row = &x.data()[r * cols..(r + 1) * cols];
                let g = &grad[r * cols..(r + 1) * cols];
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
                let inv_std = T::one() / (var + *eps).sqrt();

                let xhat: Vec<T> = row.iter().map(|&v| (v - mean) * inv_std).collect();
                let dxhat: Vec<T> = g
                    .iter()
                    .zip(gain.data())
                    .map(|(&gv, &ga)| gv * ga)
                    .collect();
                let mut dxhat_sum = T::zero();
                let mut dxhat_xhat_sum = T::zero();
                for c in 0..cols {
                    dgain[c] += g[c] * xhat[c];
                    dbias[c] += g[c];
                    dxhat_sum += dxhat[c];
                    dxhat_xhat_sum += dxhat[c] * xhat[c];
                }
                for c in 0..cols {
                    dx[r * cols + c] =
                        inv_std * inv_n * (n * dxhat[c] - dxhat_sum - xhat[c] * dxhat_xhat_sum);
                }
            }
            accumulate(grads, &parents[0], dx);
            accumulate(grads, &parents[1], dgain);
            accumulate(grads, &parents[2], dbias);
        }

        Op::Gelu => {
            let dx = grad
                .iter()
                .zip(parents[0].data())
                .map(|(&g, &x)| g * gelu_derivative(x))
                .collect();
            accumulate(grads, &parents[0], dx);
        }

        Op::ClampMin { floor } => {
            let dx = grad
                .iter()
                .zip(parents[0].data())
                .map(|(&g, &x)| if x > *floor { g } else { T::zero() })
                .collect();
            accumulate(grads, &parents[0], dx);
        }

        Op::Ln => {
            let dx = grad
                .iter()
                .zip(parents[0].data())
                .map(|(&g, &x)| g / x)
                .collect();
            accumulate(grads, &parents[0], dx);
        }

        Op::Pick { index } => {
            let mut dx = vec![T::zero(); parents[0].numel()];
            dx[*index] = grad[0];
            accumulate(grads, &parents[0], dx);
        }

        Op::Reshape => {
            accumulate(grads, &parents[0], grad.to_vec());
        }

        Op::ConcatCols { widths } => {
            let rows = out.shape()[0];
            let total = out.shape()[1];
            let mut offset = 0;
            for (p, &w) in parents.iter().zip(widths) {
                let mut dp = Vec::with_capacity(rows * w);
                for r in 0..rows {
                    dp.extend_from_slice(&grad[r * total + offset..r * total + offset + w]);
                }
                accumulate(grads, p, dp);
                offset += w;
            }
        }

        Op::SliceCols { start, end } => {
            let (rows, cols) = (parents[0].shape()[0], parents[0].shape()[1]);
            let w = end - start;
            let mut dp = vec![T::zero(); rows * cols];
            for r in 0..rows {
                dp[r * cols + start..r * cols + end].copy_from_slice(&grad[r * w..(r + 1) * w]);
            }
            accumulate(grads, &parents[0], dp);
        }
    }
}
