//! Decision-level late fusion: per-stream class posteriors are summed and
//! the fused label is the argmax of the sum, ties going to the lowest class
//! index. Inputs are probabilities, not logits, and all streams carry equal
//! weight.

use crate::error::{Error, Result};

/// How far a posterior's sum may drift from one before it is rejected.
pub const NORMALIZATION_TOLERANCE: f32 = 1e-4;

/// One stream's class distribution for a single sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassPosterior {
    /// Modality tag, e.g. `color`, `depth` or `synthetic-0`.
    pub stream_id: String,
    pub probs: Vec<f32>,
}

impl ClassPosterior {
    pub fn new(stream_id: impl Into<String>, probs: Vec<f32>) -> Self {
        Self {
            stream_id: stream_id.into(),
            probs,
        }
    }
}

/// Outcome of fusing one sample's posteriors.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionResult {
    /// Fused class decision.
    pub label: usize,
    /// Elementwise sum of the input posteriors.
    pub score_sum: Vec<f32>,
    /// The posteriors that were fused, in input order.
    pub per_stream: Vec<ClassPosterior>,
}

/// First index holding the maximum value; ties resolve to the lowest index.
pub fn argmax(scores: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in scores.iter().enumerate().skip(1) {
        if v > scores[best] {
            best = i;
        }
    }
    best
}

/// Fuse per-stream posteriors by summing and taking the argmax.
pub fn late_fuse(posteriors: &[ClassPosterior]) -> Result<FusionResult> {
    if posteriors.is_empty() {
        return Err(Error::Argument(
            "late_fuse requires at least one posterior".into(),
        ));
    }
    let classes = posteriors[0].probs.len();
    for p in posteriors {
        if p.probs.len() != classes {
            return Err(Error::Shape(format!(
                "stream '{}' has {} classes, expected {classes}",
                p.stream_id,
                p.probs.len()
            )));
        }
        if p.probs.iter().any(|&v| v < 0.0) {
            return Err(Error::Validation(format!(
                "stream '{}' has a negative probability",
                p.stream_id
            )));
        }
        let sum: f32 = p.probs.iter().sum();
        if (sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(Error::Validation(format!(
                "stream '{}' posterior sums to {sum}, expected 1",
                p.stream_id
            )));
        }
    }
    Ok(fuse_unvalidated(posteriors))
}

/// The fusion arithmetic without normalization checks. Kept separate so the
/// scale-invariance property can be exercised on unnormalized scores.
///
/// Per-class addends are summed in ascending value order, which makes the
/// result exactly independent of the order the streams are supplied in.
fn fuse_unvalidated(posteriors: &[ClassPosterior]) -> FusionResult {
    let classes = posteriors[0].probs.len();
    let mut score_sum = vec![0.0f32; classes];
    let mut addends = Vec::with_capacity(posteriors.len());
    for (c, slot) in score_sum.iter_mut().enumerate() {
        addends.clear();
        addends.extend(posteriors.iter().map(|p| p.probs[c]));
        addends.sort_by(f32::total_cmp);
        *slot = addends.iter().sum();
    }
    FusionResult {
        label: argmax(&score_sum),
        score_sum,
        per_stream: posteriors.to_vec(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(id: &str, probs: &[f32]) -> ClassPosterior {
        ClassPosterior::new(id, probs.to_vec())
    }

    #[test]
    fn single_stream_fusion_is_its_argmax() {
        let r = late_fuse(&[p("a", &[0.1, 0.7, 0.2])]).unwrap();
        assert_eq!(r.label, 1);
        assert_eq!(r.score_sum, vec![0.1, 0.7, 0.2]);
    }

    #[test]
    fn two_streams_sum_before_argmax() {
        let r = late_fuse(&[p("a", &[0.6, 0.4]), p("b", &[0.1, 0.9])]).unwrap();
        assert_eq!(r.label, 1);
        assert!((r.score_sum[0] - 0.7).abs() < 1e-6);
        assert!((r.score_sum[1] - 1.3).abs() < 1e-6);
    }

    #[test]
    fn ties_resolve_to_lowest_class_index() {
        let r = late_fuse(&[p("a", &[0.5, 0.5]), p("b", &[0.5, 0.5])]).unwrap();
        assert_eq!(r.label, 0);
    }

    #[test]
    fn fusion_is_order_invariant() {
        let a = p("a", &[0.2, 0.5, 0.3]);
        let b = p("b", &[0.4, 0.1, 0.5]);
        let c = p("c", &[0.3, 0.3, 0.4]);
        let fwd = late_fuse(&[a.clone(), b.clone(), c.clone()]).unwrap();
        let rev = late_fuse(&[c, b, a]).unwrap();
        assert_eq!(fwd.label, rev.label);
        assert_eq!(fwd.score_sum, rev.score_sum);
    }

    #[test]
    fn duplicating_a_stream_keeps_its_label() {
        let single = late_fuse(&[p("a", &[0.3, 0.6, 0.1])]).unwrap();
        let doubled = late_fuse(&[p("a", &[0.3, 0.6, 0.1]), p("a", &[0.3, 0.6, 0.1])]).unwrap();
        assert_eq!(single.label, doubled.label);
    }

    #[test]
    fn one_hot_streams_agree_on_their_class() {
        for c in 0..4 {
            let mut probs = vec![0.0; 4];
            probs[c] = 1.0;
            let streams: Vec<_> = (0..3).map(|i| p(&format!("s{i}"), &probs)).collect();
            assert_eq!(late_fuse(&streams).unwrap().label, c);
        }
    }

    #[test]
    fn common_positive_scaling_leaves_label_unchanged() {
        let raw = [
            p("a", &[0.2, 0.5, 0.3]),
            p("b", &[0.45, 0.15, 0.4]),
        ];
        let base = fuse_unvalidated(&raw);
        for scale in [0.25f32, 3.0, 17.5] {
            let scaled: Vec<_> = raw
                .iter()
                .map(|s| {
                    ClassPosterior::new(
                        s.stream_id.clone(),
                        s.probs.iter().map(|&v| v * scale).collect(),
                    )
                })
                .collect();
            assert_eq!(fuse_unvalidated(&scaled).label, base.label);
        }
    }

    #[test]
    fn empty_input_is_an_argument_error() {
        assert!(matches!(late_fuse(&[]), Err(Error::Argument(_))));
    }

    #[test]
    fn class_count_mismatch_is_a_shape_error() {
        let r = late_fuse(&[p("a", &[1.0, 0.0]), p("b", &[1.0, 0.0, 0.0])]);
        assert!(matches!(r, Err(Error::Shape(_))));
    }

    #[test]
    fn unnormalized_posterior_is_a_validation_error() {
        let r = late_fuse(&[p("a", &[0.5, 0.6])]);
        assert!(matches!(r, Err(Error::Validation(_))));
    }
}
