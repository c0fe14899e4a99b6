//! Scaled dot-product attention, the uniform multi-head baseline and the
//! multiscaled variant.
//!
//! In the multiscaled form, head `j` projects queries, keys and values to
//! width `D / 2^(j-1)`: a pyramid of per-head resolutions instead of the
//! usual equal split. Each head's scores are scaled by the square root of
//! that head's own key width. Head outputs are concatenated and mapped back
//! to width `D` by an output weight, so stages can stack regardless of the
//! head count.

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Ordered per-head attention widths.
///
/// Two modes exist: the pyramid, where `dims = [D, D/2, ..., D/2^(h-1)]`,
/// and the uniform baseline, where every head gets `D/h`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeadSchedule {
    feature_width: usize,
    dims: Vec<usize>,
}

impl HeadSchedule {
    /// Pyramid schedule: consecutive halvings starting at the feature width.
    ///
    /// `feature_width` must be divisible by `2^(head_count-1)`; anything else
    /// is rejected rather than rounded, since silent rounding would break the
    /// exact equivalence with the uniform baseline.
    pub fn pyramid(feature_width: usize, head_count: usize) -> Result<Self> {
        if head_count == 0 {
            return Err(Error::Config("head count must be at least 1".into()));
        }
        if head_count > 32 {
            return Err(Error::Config(format!(
                "head count {head_count} is out of range (max 32)"
            )));
        }
        let divisor = 1usize << (head_count - 1);
        if feature_width == 0 || !feature_width.is_multiple_of(divisor) {
            return Err(Error::Config(format!(
                "feature width {feature_width} is not divisible by {divisor}, \
                 as required by a {head_count}-head pyramid schedule"
            )));
        }
        let dims = (0..head_count).map(|j| feature_width >> j).collect();
        Ok(Self {
            feature_width,
            dims,
        })
    }

    /// Uniform schedule: every head gets `feature_width / head_count`.
    pub fn uniform(feature_width: usize, head_count: usize) -> Result<Self> {
        if head_count == 0 {
            return Err(Error::Config("head count must be at least 1".into()));
        }
        if feature_width == 0 || !feature_width.is_multiple_of(head_count) {
            return Err(Error::Config(format!(
                "feature width {feature_width} is not divisible by head count {head_count}"
            )));
        }
        Ok(Self {
            feature_width,
            dims: vec![feature_width / head_count; head_count],
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn head_count(&self) -> usize {
        self.dims.len()
    }

    pub fn feature_width(&self) -> usize {
        self.feature_width
    }

    /// Sum of all per-head widths, the concatenated width before the output
    /// projection.
    pub fn total_dim(&self) -> usize {
        self.dims.iter().sum()
    }

    pub fn is_uniform(&self) -> bool {
        self.dims.iter().all(|&d| d * self.head_count() == self.feature_width)
    }
}

/// Pyramid schedule constructor under its operation name.
pub fn head_schedule(feature_width: usize, head_count: usize) -> Result<HeadSchedule> {
    HeadSchedule::pyramid(feature_width, head_count)
}

/// Projection weights of one attention head.
#[derive(Debug, Clone)]
pub struct HeadParams<T: Scalar> {
    pub w_q: Tensor<T>,
    pub w_k: Tensor<T>,
    pub w_v: Tensor<T>,
}

/// Per-head projections plus the output weight mapping the concatenated
/// heads back to the feature width.
#[derive(Debug, Clone)]
pub struct MsMhaParams<T: Scalar> {
    pub heads: Vec<HeadParams<T>>,
    pub w_o: Tensor<T>,
}

impl<T: Scalar> MsMhaParams<T> {
    /// Fresh tracked parameters for `schedule`, uniformly initialized in
    /// `+-sqrt(6 / (fan_in + fan_out))` per projection.
    pub fn init<R: Rng>(schedule: &HeadSchedule, rng: &mut R) -> Result<Self> {
        let d = schedule.feature_width();
        let heads = schedule
            .dims()
            .iter()
            .map(|&dj| {
                Ok(HeadParams {
                    w_q: xavier_uniform(d, dj, rng)?,
                    w_k: xavier_uniform(d, dj, rng)?,
                    w_v: xavier_uniform(d, dj, rng)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let w_o = xavier_uniform(schedule.total_dim(), d, rng)?;
        Ok(Self { heads, w_o })
    }

    /// Check these parameters against a schedule and input width.
    pub fn validate(&self, schedule: &HeadSchedule) -> Result<()> {
        let d = schedule.feature_width();
        if self.heads.len() != schedule.head_count() {
            return Err(Error::Config(format!(
                "schedule has {} heads but parameters have {}",
                schedule.head_count(),
                self.heads.len()
            )));
        }
        for (j, (head, &dj)) in self.heads.iter().zip(schedule.dims()).enumerate() {
            for (name, w) in [("W_q", &head.w_q), ("W_k", &head.w_k), ("W_v", &head.w_v)] {
                if w.shape() != [d, dj] {
                    return Err(Error::Config(format!(
                        "head {j} {name} has shape {:?}, expected [{d}, {dj}]",
                        w.shape()
                    )));
                }
            }
        }
        if self.w_o.shape() != [schedule.total_dim(), d] {
            return Err(Error::Config(format!(
                "W_o has shape {:?}, expected [{}, {d}]",
                self.w_o.shape(),
                schedule.total_dim()
            )));
        }
        Ok(())
    }

    /// All parameter tensors in a fixed order.
    pub fn tensors(&self) -> Vec<&Tensor<T>> {
        let mut out = Vec::with_capacity(self.heads.len() * 3 + 1);
        for head in &self.heads {
            out.push(&head.w_q);
            out.push(&head.w_k);
            out.push(&head.w_v);
        }
        out.push(&self.w_o);
        out
    }

    /// Total parameter scalar count.
    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.numel()).sum()
    }
}

pub(crate) fn xavier_uniform<T: Scalar, R: Rng>(
    fan_in: usize,
    fan_out: usize,
    rng: &mut R,
) -> Result<Tensor<T>> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out)
        .map(|_| T::from_f64(rng.random_range(-limit..limit)))
        .collect();
    Tensor::param(&[fan_in, fan_out], data)
}

/// `softmax(Q K^T / sqrt(d)) V` with `d` the key/query width.
pub fn scaled_dot_attention<T: Scalar>(
    q: &Tensor<T>,
    k: &Tensor<T>,
    v: &Tensor<T>,
) -> Result<Tensor<T>> {
    scaled_dot_attention_inner(q, k, v, false)
}

pub(crate) fn scaled_dot_attention_inner<T: Scalar>(
    q: &Tensor<T>,
    k: &Tensor<T>,
    v: &Tensor<T>,
    sabotage_backward: bool,
) -> Result<Tensor<T>> {
    let (_, d) = q.dims2()?;
    let (k_rows, k_cols) = k.dims2()?;
    let (v_rows, _) = v.dims2()?;
    if k_cols != d {
        return Err(Error::Shape(format!(
            "query width {d} does not match key width {k_cols}"
        )));
    }
    if v_rows != k_rows {
        return Err(Error::Shape(format!(
            "key rows {k_rows} do not match value rows {v_rows}"
        )));
    }
    let inv_sqrt_d = T::one() / T::from_usize(d).sqrt();
    let scores_raw = q.matmul(&k.transpose()?)?;
    let scores = if sabotage_backward {
        // Forward stays correct; only the recorded gradient factor is wrong,
        // which is exactly what the gradient checker must be able to detect.
        scores_raw.scale_mismatched(inv_sqrt_d, inv_sqrt_d * T::from_f64(2.0))
    } else {
        scores_raw.scale(inv_sqrt_d)
    };
    scores.softmax_rows()?.matmul(v)
}

/// Baseline multi-head attention: every head has width `D / h`.
pub fn multi_head_attention<T: Scalar>(
    x: &Tensor<T>,
    params: &MsMhaParams<T>,
) -> Result<Tensor<T>> {
    let (_, d) = x.dims2()?;
    let h = params.heads.len();
    let schedule = HeadSchedule::uniform(d, h).map_err(|_| {
        Error::Config(format!(
            "multi_head_attention requires a uniform schedule; width {d} with {h} heads"
        ))
    })?;
    params.validate(&schedule).map_err(|e| {
        Error::Config(format!("multi_head_attention requires uniform head widths: {e}"))
    })?;
    attend(x, params, false)
}

/// Multiscaled multi-head attention over `schedule`; output shape `[L, D]`.
pub fn msmha<T: Scalar>(
    x: &Tensor<T>,
    params: &MsMhaParams<T>,
    schedule: &HeadSchedule,
) -> Result<Tensor<T>> {
    msmha_inner(x, params, schedule, false)
}

pub(crate) fn msmha_inner<T: Scalar>(
    x: &Tensor<T>,
    params: &MsMhaParams<T>,
    schedule: &HeadSchedule,
    sabotage_backward: bool,
) -> Result<Tensor<T>> {
    let (_, d) = x.dims2()?;
    if d != schedule.feature_width() {
        return Err(Error::Config(format!(
            "input width {d} does not match schedule feature width {}",
            schedule.feature_width()
        )));
    }
    params.validate(schedule)?;
    attend(x, params, sabotage_backward)
}

/// Shared per-head loop: project, attend at that head's width, concatenate,
/// map back to `D`. Head widths come from the parameter shapes.
fn attend<T: Scalar>(
    x: &Tensor<T>,
    params: &MsMhaParams<T>,
    sabotage_backward: bool,
) -> Result<Tensor<T>> {
    let mut heads = Vec::with_capacity(params.heads.len());
    for head in &params.heads {
        let q = x.matmul(&head.w_q)?;
        let k = x.matmul(&head.w_k)?;
        let v = x.matmul(&head.w_v)?;
        heads.push(scaled_dot_attention_inner(&q, &k, &v, sabotage_backward)?);
    }
    Tensor::concat_features(&heads)?.matmul(&params.w_o)
}

/// Analytic parameter count of the pyramid schedule at `(D, h)`.
///
/// Without biases this is `4 D sum(d_j)`: three input projections per head
/// plus the output weight.
pub fn msmha_param_count(
    feature_width: usize,
    head_count: usize,
    include_bias: bool,
) -> Result<u64> {
    let schedule = HeadSchedule::pyramid(feature_width, head_count)?;
    Ok(param_count_for(&schedule, include_bias))
}

/// Analytic parameter count for an arbitrary schedule.
pub fn param_count_for(schedule: &HeadSchedule, include_bias: bool) -> u64 {
    let d = schedule.feature_width() as u64;
    let total = schedule.total_dim() as u64;
    let weights = 4 * d * total;
    if include_bias {
        // one bias per projection output plus the output bias
        weights + 3 * total + d
    } else {
        weights
    }
}

/// Analytic multiply-accumulate count of one forward pass over `[L, D]`.
///
/// Counts the matmuls only: Q/K/V projections (`3 L D d_j` per head), the
/// score and value products (`2 L^2 d_j` per head) and the output projection
/// (`L sum(d_j) D`).
pub fn mac_count_for(schedule: &HeadSchedule, seq_len: usize) -> u64 {
    let d = schedule.feature_width() as u64;
    let l = seq_len as u64;
    let total = schedule.total_dim() as u64;
    total * (4 * l * d + 2 * l * l)
}
