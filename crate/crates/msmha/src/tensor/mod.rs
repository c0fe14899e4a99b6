//! Dense tensors with reverse-mode automatic differentiation.
//!
//! A [`Tensor`] is an immutable rank-1..3 array of `f32` or `f64` scalars in
//! row-major order. Operations on tracked tensors record a computation graph;
//! [`Tensor::backward`] walks it in reverse to produce a [`GradientMap`] for a
//! set of leaves. The graph lives only as long as the tensors of one forward
//! pass and is dropped with them; there are no higher-order derivatives.
//!
//! `f32` is the training element type; `f64` exists so finite-difference
//! gradient checks can run below a 1e-4 relative tolerance.

mod autograd;
mod finite_diff;
mod ops;


pub use finite_diff::{finite_diff_grad, max_relative_error, DEFAULT_FD_EPS};
pub(crate) use ops::Op;

use std::collections::HashMap;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use num_traits::Float;

use crate::error::{Error, Result};

/// Scalar element types usable in tensors: `f32` and `f64`.
pub trait Scalar:
    Float + num_traits::NumAssign + fmt::Debug + fmt::Display + Send + Sync + 'static
{
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn from_usize(v: usize) -> Self {
        Self::from_f64(v as f64)
    }
}

impl Scalar for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64(self) -> f64 {
        self
    }
}

static NEXT_TENSOR_ID: AtomicU64 = AtomicU64::new(1);

fn fresh_id() -> u64 {
    NEXT_TENSOR_ID.fetch_add(1, Ordering::Relaxed)
}

pub(crate) struct Node<T: Scalar> {
    pub(crate) op: Op<T>,
    pub(crate) parents: Vec<Tensor<T>>,
}

struct Inner<T: Scalar> {
    id: u64,
    shape: Vec<usize>,
    data: Vec<T>,
    node: Option<Node<T>>,
}

/// Immutable dense tensor, cheap to clone (shared storage).
#[derive(Clone)]
pub struct Tensor<T: Scalar> {
    inner: Arc<Inner<T>>,
}

fn check_shape(shape: &[usize], len: usize) -> Result<()> {
    if shape.is_empty() || shape.len() > 3 {
        return Err(Error::Shape(format!(
            "tensor rank must be 1..=3, got {}",
            shape.len()
        )));
    }
    if shape.contains(&0) {
        return Err(Error::Shape(format!("zero extent in shape {shape:?}")));
    }
    let numel: usize = shape.iter().product();
    if numel != len {
        return Err(Error::Shape(format!(
            "shape {shape:?} expects {numel} values, got {len}"
        )));
    }
    Ok(())
}

impl<T: Scalar> Tensor<T> {
    /// Leaf tensor that does not participate in autodiff.
    pub fn new(shape: &[usize], data: Vec<T>) -> Result<Self> {
        check_shape(shape, data.len())?;
        Ok(Self::raw(shape.to_vec(), data, None))
    }

    /// Leaf tensor tracked for gradients (a trainable parameter).
    pub fn param(shape: &[usize], data: Vec<T>) -> Result<Self> {
        check_shape(shape, data.len())?;
        Ok(Self::raw(
            shape.to_vec(),
            data,
            Some(Node {
                op: Op::Leaf,
                parents: Vec::new(),
            }),
        ))
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        let numel = shape.iter().product();
        Self::new(shape, vec![T::zero(); numel])
    }

    pub fn full(shape: &[usize], value: T) -> Result<Self> {
        let numel = shape.iter().product();
        Self::new(shape, vec![value; numel])
    }

    /// n-by-n identity matrix.
    pub fn eye(n: usize) -> Result<Self> {
        let mut data = vec![T::zero(); n * n];
        for i in 0..n {
            data[i * n + i] = T::one();
        }
        Self::new(&[n, n], data)
    }

    fn raw(shape: Vec<usize>, data: Vec<T>, node: Option<Node<T>>) -> Self {
        Self {
            inner: Arc::new(Inner {
                id: fresh_id(),
                shape,
                data,
                node,
            }),
        }
    }

    /// Result of an operation; tracked iff any parent is tracked.
    pub(crate) fn from_op(shape: Vec<usize>, data: Vec<T>, op: Op<T>, parents: Vec<Tensor<T>>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        let node = if parents.iter().any(|p| p.is_tracked()) {
            Some(Node { op, parents })
        } else {
            None
        };
        Self::raw(shape, data, node)
    }

    pub(crate) fn id(&self) -> u64 {
        self.inner.id
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn rank(&self) -> usize {
        self.inner.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.inner.data.len()
    }

    pub fn data(&self) -> &[T] {
        &self.inner.data
    }

    /// Whether this tensor participates in the autodiff graph.
    pub fn is_tracked(&self) -> bool {
        self.inner.node.is_some()
    }

    pub(crate) fn node(&self) -> Option<&Node<T>> {
        self.inner.node.as_ref()
    }

    /// The contained value of a single-element tensor.
    pub fn scalar(&self) -> Result<T> {
        if self.numel() != 1 {
            return Err(Error::Argument(format!(
                "expected a scalar tensor, got shape {:?}",
                self.shape()
            )));
        }
        Ok(self.inner.data[0])
    }

    /// Rows and columns of a rank-2 tensor.
    pub(crate) fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape() {
            [r, c] => Ok((*r, *c)),
            other => Err(Error::Shape(format!(
                "expected a rank-2 tensor, got shape {other:?}"
            ))),
        }
    }
}

impl<T: Scalar> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape())
            .field("tracked", &self.is_tracked())
            .field("data", &self.data())
            .finish()
    }
}

/// Gradients keyed by leaf-tensor identity, as returned by [`Tensor::backward`].
pub struct GradientMap<T: Scalar> {
    grads: HashMap<u64, Tensor<T>>,
}

impl<T: Scalar> GradientMap<T> {
    pub(crate) fn from_raw(grads: HashMap<u64, Tensor<T>>) -> Self {
        Self { grads }
    }

    /// Gradient of the loss with respect to `leaf`, if it was requested.
    pub fn get(&self, leaf: &Tensor<T>) -> Option<&Tensor<T>> {
        self.grads.get(&leaf.id())
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }
}
