//! Training, evaluation and fusion drivers: cross-entropy over the
//! classifier, Adam with step decay, deterministic shuffling, and the
//! reporting the CLI prints.

mod adam;
mod bench;
mod gradcheck;

pub use adam::{adam_step, lr_schedule, AdamConfig, AdamState};
pub use bench::{run_bench, write_bench_csv, BenchConfig, BenchRow};
pub use gradcheck::{gradcheck, GradCheckConfig, GradCheckReport, GroupReport};

use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{generate_dataset, read_dataset, Dataset, GestureSample, StreamSpec, SynthConfig};
use crate::error::{Error, Result};
use crate::fusion::{argmax, late_fuse, ClassPosterior};
use crate::model::{classify, ModelConfig, ModelParams};
use crate::tensor::{Scalar, Tensor};

/// Floor inside the cross-entropy log.
pub const CROSS_ENTROPY_CLAMP: f64 = 1e-12;

/// `-ln(posterior[label])`, clamped at 1e-12 inside the log. Differentiable
/// through the posterior.
pub fn cross_entropy<T: Scalar>(posterior: &Tensor<T>, label: usize) -> Result<Tensor<T>> {
    if posterior.rank() != 1 {
        return Err(Error::Shape(format!(
            "cross_entropy expects a rank-1 posterior, got {:?}",
            posterior.shape()
        )));
    }
    if label >= posterior.numel() {
        return Err(Error::Argument(format!(
            "label {label} out of range for {} classes",
            posterior.numel()
        )));
    }
    Ok(posterior
        .pick(label)?
        .clamp_min(T::from_f64(CROSS_ENTROPY_CLAMP))
        .ln()
        .neg())
}

/// On-disk train/test pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataPaths {
    pub train: PathBuf,
    pub test: PathBuf,
}

/// Everything one training run needs. Exactly one of `synth` and `dataset`
/// must be present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model: ModelConfig,
    #[serde(default)]
    pub synth: Option<SynthConfig>,
    #[serde(default)]
    pub dataset: Option<DataPaths>,
    /// Modality to train on; defaults to the only stream of a single-stream
    /// dataset.
    #[serde(default)]
    pub stream: Option<String>,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_decay_epochs")]
    pub decay_epochs: Vec<usize>,
    #[serde(default = "default_decay_factor")]
    pub decay_factor: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_adam_eps")]
    pub adam_eps: f64,
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_learning_rate() -> f64 {
    1e-4
}

fn default_decay_epochs() -> Vec<usize> {
    vec![50, 75]
}

fn default_decay_factor() -> f64 {
    0.1
}

fn default_beta1() -> f64 {
    0.9
}

fn default_beta2() -> f64 {
    0.999
}

fn default_adam_eps() -> f64 {
    1e-8
}

fn default_batch_size() -> usize {
    16
}

fn default_seed() -> u64 {
    42
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.adam_eps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        match (&self.synth, &self.dataset) {
            (Some(synth), None) => {
                synth.validate()?;
                if synth.sequence_length != self.model.sequence_length
                    || synth.frame_dim != self.model.input_frame_dim
                    || synth.class_count != self.model.class_count
                {
                    return Err(Error::Config(format!(
                        "synth dims (T={}, F={}, C={}) do not match the model \
                         (T={}, F={}, C={})",
                        synth.sequence_length,
                        synth.frame_dim,
                        synth.class_count,
                        self.model.sequence_length,
                        self.model.input_frame_dim,
                        self.model.class_count
                    )));
                }
            }
            (None, Some(_)) => {}
            (Some(_), Some(_)) => {
                return Err(Error::Config(
                    "config must name either synth or dataset, not both".into(),
                ))
            }
            (None, None) => {
                return Err(Error::Config(
                    "config must name a synth generator or a dataset".into(),
                ))
            }
        }
        if self.learning_rate <= 0.0 {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if !self.decay_epochs.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Config(
                "decay epochs must be strictly increasing".into(),
            ));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return Err(Error::Config(format!(
                "decay factor must be in (0, 1], got {}",
                self.decay_factor
            )));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        Ok(())
    }
}

/// One epoch's logged numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub learning_rate: f64,
    pub train_loss: f32,
    pub train_accuracy: f32,
    pub test_accuracy: f32,
}

/// Result of a training run.
pub struct TrainOutcome {
    pub params: ModelParams<f32>,
    pub config: ModelConfig,
    pub metrics: Vec<EpochMetrics>,
    /// The stream the model was trained on.
    pub stream: String,
}

/// Resolve the modality a run should use: an explicit tag, or the only
/// stream of a single-stream dataset.
pub fn resolve_stream(dataset: &Dataset, requested: Option<&str>) -> Result<usize> {
    match requested {
        Some(tag) => dataset.stream_index(tag).ok_or_else(|| {
            Error::Config(format!(
                "stream '{tag}' not present; available: {}",
                dataset
                    .streams
                    .iter()
                    .map(|s| s.tag.as_str())
                    .collect::<Vec<_>>()
                    .join(", ")
            ))
        }),
        None if dataset.streams.len() == 1 => Ok(0),
        None => Err(Error::Config(format!(
            "dataset has {} streams; pass a stream tag to pick one",
            dataset.streams.len()
        ))),
    }
}

fn check_compat(model: &ModelConfig, dataset: &Dataset, stream: usize) -> Result<()> {
    let spec = &dataset.streams[stream];
    if dataset.sequence_length != model.sequence_length
        || spec.frame_dim != model.input_frame_dim
        || dataset.class_count != model.class_count
    {
        return Err(Error::Config(format!(
            "dataset stream '{}' (T={}, F={}, C={}) does not match the model \
             (T={}, F={}, C={})",
            spec.tag,
            dataset.sequence_length,
            spec.frame_dim,
            dataset.class_count,
            model.sequence_length,
            model.input_frame_dim,
            model.class_count
        )));
    }
    Ok(())
}

/// Mini-batch cross-entropy training. Deterministic for a fixed config: the
/// shuffle order, the initialization and every accumulation are derived from
/// the seed and iterated in sample order.
pub fn train(cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let (train_set, test_set) = match (&cfg.synth, &cfg.dataset) {
        (Some(synth), None) => generate_dataset(synth)?,
        (None, Some(paths)) => (read_dataset(&paths.train)?, read_dataset(&paths.test)?),
        _ => unreachable!("validated above"),
    };
    let stream = resolve_stream(&train_set, cfg.stream.as_deref())?;
    check_compat(&cfg.model, &train_set, stream)?;
    let test_stream = resolve_stream(&test_set, cfg.stream.as_deref())?;
    check_compat(&cfg.model, &test_set, test_stream)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = ModelParams::<f32>::init(&cfg.model, &mut rng)?;
    let mut state = AdamState::new(&params.tensors());
    let adam_cfg = cfg.adam();

    let n = train_set.samples.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut metrics = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        let lr = lr_schedule(epoch, cfg.learning_rate, &cfg.decay_epochs, cfg.decay_factor);
        order.shuffle(&mut rng);

        let mut loss_sum = 0.0f64;
        for batch in order.chunks(cfg.batch_size) {
            let mut tensors = params.tensors();

            // batch-mean loss, summed in fixed sample order
            let mut total: Option<Tensor<f32>> = None;
            for &idx in batch {
                let sample = &train_set.samples[idx];
                let posterior = classify(&sample.streams[stream], &params, &cfg.model)?;
                let loss = cross_entropy(&posterior, sample.label)?;
                total = Some(match total {
                    Some(acc) => acc.add(&loss)?,
                    None => loss,
                });
            }
            let total = total.expect("chunks are non-empty");
            let batch_loss = total.scale(1.0 / batch.len() as f32);
            loss_sum += batch_loss.scalar()?.to_f64() * batch.len() as f64;

            let leaves: Vec<&Tensor<f32>> = tensors.iter().collect();
            let gmap = batch_loss.backward(&leaves)?;
            let grads: Vec<Tensor<f32>> = tensors
                .iter()
                .map(|t| gmap.get(t).cloned().expect("every leaf was requested"))
                .collect();
            adam_step(&mut tensors, &grads, &mut state, lr, &adam_cfg)?;
            params.set_tensors(tensors)?;
        }

        let train_accuracy = accuracy(&params, &cfg.model, &train_set, stream)?;
        let test_accuracy = accuracy(&params, &cfg.model, &test_set, test_stream)?;
        metrics.push(EpochMetrics {
            epoch,
            learning_rate: lr,
            train_loss: (loss_sum / n as f64) as f32,
            train_accuracy,
            test_accuracy,
        });
    }

    Ok(TrainOutcome {
        params,
        config: cfg.model.clone(),
        metrics,
        stream: train_set.streams[stream].tag.clone(),
    })
}

/// Fraction of samples whose posterior argmax equals the label.
fn accuracy(
    params: &ModelParams<f32>,
    config: &ModelConfig,
    dataset: &Dataset,
    stream: usize,
) -> Result<f32> {
    let mut correct = 0usize;
    for sample in &dataset.samples {
        let posterior = classify(&sample.streams[stream], params, config)?;
        if argmax(posterior.data()) == sample.label {
            correct += 1;
        }
    }
    Ok(correct as f32 / dataset.samples.len() as f32)
}

/// Evaluation output: the accuracy plus per-sample posteriors packaged as a
/// single-stream dataset (tag `post`, one row of `class_count` values per
/// sample) so they can be written with the ordinary dataset format.
pub struct EvalOutcome {
    pub accuracy: f32,
    pub posteriors: Dataset,
}

/// Run the classifier over one stream of `dataset`.
pub fn evaluate(
    params: &ModelParams<f32>,
    config: &ModelConfig,
    dataset: &Dataset,
    requested_stream: Option<&str>,
) -> Result<EvalOutcome> {
    dataset.validate()?;
    let stream = resolve_stream(dataset, requested_stream)?;
    check_compat(config, dataset, stream)?;

    let mut correct = 0usize;
    let mut samples = Vec::with_capacity(dataset.samples.len());
    for sample in &dataset.samples {
        let posterior = classify(&sample.streams[stream], params, config)?;
        if argmax(posterior.data()) == sample.label {
            correct += 1;
        }
        samples.push(GestureSample {
            label: sample.label,
            streams: vec![Tensor::new(&[1, config.class_count], posterior.data().to_vec())?],
        });
    }
    Ok(EvalOutcome {
        accuracy: correct as f32 / dataset.samples.len() as f32,
        posteriors: Dataset {
            sequence_length: 1,
            class_count: config.class_count,
            streams: vec![StreamSpec {
                tag: "post".into(),
                frame_dim: config.class_count,
            }],
            samples,
        },
    })
}

/// Accuracy table produced by fusing posterior files.
#[derive(Debug, Clone)]
pub struct FuseReport {
    /// (stream name, unimodal accuracy) per input, in input order.
    pub per_stream: Vec<(String, f32)>,
    pub fused_accuracy: f32,
    pub sample_count: usize,
}

/// Fuse aligned posterior sets (as produced by [`evaluate`]) sample by
/// sample. Labels and sample counts must agree across all sets.
pub fn fuse_posterior_sets(sets: &[(String, Dataset)]) -> Result<FuseReport> {
    if sets.is_empty() {
        return Err(Error::Argument("no posterior sets to fuse".into()));
    }
    for (name, ds) in sets {
        ds.validate()?;
        if ds.streams.len() != 1 || ds.sequence_length != 1 {
            return Err(Error::Validation(format!(
                "'{name}' is not a posterior set (needs one stream and T=1)"
            )));
        }
        if ds.samples.len() != sets[0].1.samples.len() {
            return Err(Error::Validation(format!(
                "'{name}' has {} samples, expected {}",
                ds.samples.len(),
                sets[0].1.samples.len()
            )));
        }
        if ds.class_count != sets[0].1.class_count {
            return Err(Error::Validation(format!(
                "'{name}' has {} classes, expected {}",
                ds.class_count,
                sets[0].1.class_count
            )));
        }
    }
    let n = sets[0].1.samples.len();
    for i in 0..n {
        let label = sets[0].1.samples[i].label;
        for (name, ds) in sets {
            if ds.samples[i].label != label {
                return Err(Error::Validation(format!(
                    "'{name}' disagrees on the label of sample {i}"
                )));
            }
        }
    }

    let mut per_stream_correct = vec![0usize; sets.len()];
    let mut fused_correct = 0usize;
    for i in 0..n {
        let label = sets[0].1.samples[i].label;
        let posteriors: Vec<ClassPosterior> = sets
            .iter()
            .map(|(name, ds)| {
                ClassPosterior::new(name.clone(), ds.samples[i].streams[0].data().to_vec())
            })
            .collect();
        for (j, p) in posteriors.iter().enumerate() {
            if argmax(&p.probs) == label {
                per_stream_correct[j] += 1;
            }
        }
        if late_fuse(&posteriors)?.label == label {
            fused_correct += 1;
        }
    }

    Ok(FuseReport {
        per_stream: sets
            .iter()
            .zip(&per_stream_correct)
            .map(|((name, _), &c)| (name.clone(), c as f32 / n as f32))
            .collect(),
        fused_accuracy: fused_correct as f32 / n as f32,
        sample_count: n,
    })
}
