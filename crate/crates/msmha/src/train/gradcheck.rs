//! End-to-end gradient checking: analytic gradients of
//! `cross_entropy(classify(frames))` against central differences, at 64 bits,
//! for every parameter group of a tiny model.
//!
//! The sabotage switch wires an intentionally wrong backward factor into the
//! attention score scaling while leaving the forward untouched. A checker
//! that cannot flag that defect would be worthless, so it runs as a negative
//! control.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::cross_entropy;
use crate::error::Result;
use crate::model::{classify_inner, ModelConfig, ModelParams};
use crate::tensor::{finite_diff_grad, max_relative_error, Tensor};

/// Settings for one gradient-check run.
#[derive(Debug, Clone)]
pub struct GradCheckConfig {
    pub model: ModelConfig,
    pub seeds: u64,
    /// Maximum allowed relative error `|a-b| / max(1, |a|, |b|)`.
    pub tolerance: f64,
    /// Corrupt the attention-scale gradient on purpose (negative control).
    pub sabotage: bool,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig {
                feature_width: 8,
                head_count: 2,
                stage_count: 2,
                sequence_length: 4,
                class_count: 3,
                ffn_width: None,
                input_frame_dim: 6,
                positional_encoding: true,
            },
            seeds: 20,
            tolerance: 1e-4,
            sabotage: false,
        }
    }
}

/// Worst relative error seen for one named parameter tensor.
#[derive(Debug, Clone)]
pub struct GroupReport {
    pub name: String,
    pub max_rel_err: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub groups: Vec<GroupReport>,
    pub max_rel_err: f64,
    pub tolerance: f64,
    pub seeds: u64,
    pub passed: bool,
}

use crate::tensor::DEFAULT_FD_EPS as FD_EPS;

/// Run the finite-difference suite over `cfg.seeds` random instances.
pub fn gradcheck(cfg: &GradCheckConfig) -> Result<GradCheckReport> {
    cfg.model.validate()?;
    let mut worst_per_group: Vec<(String, f64)> = Vec::new();

    for seed in 0..cfg.seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = ModelParams::<f64>::init(&cfg.model, &mut rng)?;
        let names = params.names();
        if worst_per_group.is_empty() {
            worst_per_group = names.iter().map(|n| (n.clone(), 0.0)).collect();
        }

        let t = cfg.model.sequence_length;
        let f = cfg.model.input_frame_dim;
        let frames_data: Vec<f64> = (0..t * f).map(|_| rng.random_range(-1.0..1.0)).collect();
        let frames = Tensor::new(&[t, f], frames_data)?;
        let label = (seed as usize) % cfg.model.class_count;

        // analytic gradients in one backward pass
        let tensors = params.tensors();
        let posterior = classify_inner(&frames, &params, &cfg.model, cfg.sabotage)?;
        let loss = cross_entropy(&posterior, label)?;
        let leaves: Vec<&Tensor<f64>> = tensors.iter().collect();
        let gmap = loss.backward(&leaves)?;

        // finite differences, one parameter tensor at a time
        for (i, tensor) in tensors.iter().enumerate() {
            let fd = finite_diff_grad(
                |candidate| {
                    let mut perturbed = params.clone();
                    perturbed.set_tensor(i, candidate.clone())?;
                    let posterior = classify_inner(&frames, &perturbed, &cfg.model, false)?;
                    cross_entropy(&posterior, label)
                },
                tensor,
                FD_EPS,
            )?;
            let analytic = gmap.get(tensor).expect("every leaf was requested");
            let err = max_relative_error(analytic, &fd)?;
            if err > worst_per_group[i].1 {
                worst_per_group[i].1 = err;
            }
        }
    }

    let groups: Vec<GroupReport> = worst_per_group
        .into_iter()
        .map(|(name, max_rel_err)| GroupReport { name, max_rel_err })
        .collect();
    let max_rel_err = groups.iter().map(|g| g.max_rel_err).fold(0.0, f64::max);
    Ok(GradCheckReport {
        max_rel_err,
        passed: max_rel_err <= cfg.tolerance,
        tolerance: cfg.tolerance,
        seeds: cfg.seeds,
        groups,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiny_model_passes_with_a_few_seeds() {
        let cfg = GradCheckConfig {
            seeds: 2,
            ..GradCheckConfig::default()
        };
        let report = gradcheck(&cfg).unwrap();
        assert!(
            report.passed,
            "max relative error {} over tolerance {}",
            report.max_rel_err, report.tolerance
        );
    }

    #[test]
    fn sabotage_fails_the_check() {
        let cfg = GradCheckConfig {
            seeds: 1,
            sabotage: true,
            ..GradCheckConfig::default()
        };
        let report = gradcheck(&cfg).unwrap();
        assert!(!report.passed, "sabotaged gradients slipped through");
    }

    #[test]
    fn report_lists_every_parameter_group_once() {
        let cfg = GradCheckConfig {
            seeds: 1,
            ..GradCheckConfig::default()
        };
        let report = gradcheck(&cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let params = ModelParams::<f64>::init(&cfg.model, &mut rng).unwrap();
        let expected = params.names();
        let got: Vec<String> = report.groups.iter().map(|g| g.name.clone()).collect();
        assert_eq!(got, expected);
    }
}
