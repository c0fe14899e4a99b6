//! The video-transformer classifier: frame embedding, sinusoidal positional
//! encoding, a stack of pre-norm encoder stages built on multiscaled
//! attention, and a mean-pool readout into class probabilities.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::attention::{msmha_inner, xavier_uniform, HeadSchedule, MsMhaParams};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Structural hyperparameters of the classifier.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Token width D.
    pub feature_width: usize,
    /// Attention heads per stage.
    pub head_count: usize,
    /// Encoder stages S.
    #[serde(default = "default_stage_count")]
    pub stage_count: usize,
    /// Frames per sequence T.
    #[serde(default = "default_sequence_length")]
    pub sequence_length: usize,
    /// Gesture classes C.
    pub class_count: usize,
    /// Feed-forward hidden width; `None` means `4 * feature_width`.
    #[serde(default)]
    pub ffn_width: Option<usize>,
    /// Raw frame-feature width F before embedding.
    pub input_frame_dim: usize,
    /// Add fixed sinusoidal positions to the embedded tokens.
    #[serde(default = "default_true")]
    pub positional_encoding: bool,
}

fn default_stage_count() -> usize {
    6
}

fn default_sequence_length() -> usize {
    40
}

fn default_true() -> bool {
    true
}

impl ModelConfig {
    pub fn ffn_width(&self) -> usize {
        self.ffn_width.unwrap_or(4 * self.feature_width)
    }

    pub fn head_schedule(&self) -> Result<HeadSchedule> {
        HeadSchedule::pyramid(self.feature_width, self.head_count)
    }

    pub fn validate(&self) -> Result<()> {
        self.head_schedule()?;
        if self.stage_count == 0 {
            return Err(Error::Config("stage count must be at least 1".into()));
        }
        if self.sequence_length == 0 {
            return Err(Error::Config("sequence length must be at least 1".into()));
        }
        if self.class_count < 2 {
            return Err(Error::Config("class count must be at least 2".into()));
        }
        if self.input_frame_dim == 0 {
            return Err(Error::Config("input frame dim must be at least 1".into()));
        }
        if self.positional_encoding && !self.feature_width.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "positional encoding requires an even feature width, got {}",
                self.feature_width
            )));
        }
        if self.ffn_width() == 0 {
            return Err(Error::Config("ffn width must be at least 1".into()));
        }
        Ok(())
    }
}

/// One encoder stage: attention parameters, two layer norms and the
/// feed-forward pair.
#[derive(Debug, Clone)]
pub struct EncoderStageParams<T: Scalar> {
    pub attn: MsMhaParams<T>,
    pub ln1_gain: Tensor<T>,
    pub ln1_bias: Tensor<T>,
    pub ln2_gain: Tensor<T>,
    pub ln2_bias: Tensor<T>,
    pub ffn_w1: Tensor<T>,
    pub ffn_b1: Tensor<T>,
    pub ffn_w2: Tensor<T>,
    pub ffn_b2: Tensor<T>,
}

/// Every trainable tensor of the classifier.
#[derive(Debug, Clone)]
pub struct ModelParams<T: Scalar> {
    pub embed_w: Tensor<T>,
    pub embed_b: Tensor<T>,
    pub stages: Vec<EncoderStageParams<T>>,
    pub readout_w: Tensor<T>,
    pub readout_b: Tensor<T>,
}

impl<T: Scalar> ModelParams<T> {
    /// Fresh tracked parameters. Weights are Xavier-uniform; biases start at
    /// zero and layer-norm gains at one. Stages do not share weights.
    pub fn init<R: Rng>(config: &ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let d = config.feature_width;
        let f = config.input_frame_dim;
        let ffn = config.ffn_width();
        let schedule = config.head_schedule()?;

        let embed_w = xavier_uniform(f, d, rng)?;
        let embed_b = Tensor::param(&[d], vec![T::zero(); d])?;
        let stages = (0..config.stage_count)
            .map(|_| {
                Ok(EncoderStageParams {
                    attn: MsMhaParams::init(&schedule, rng)?,
                    ln1_gain: Tensor::param(&[d], vec![T::one(); d])?,
                    ln1_bias: Tensor::param(&[d], vec![T::zero(); d])?,
                    ln2_gain: Tensor::param(&[d], vec![T::one(); d])?,
                    ln2_bias: Tensor::param(&[d], vec![T::zero(); d])?,
                    ffn_w1: xavier_uniform(d, ffn, rng)?,
                    ffn_b1: Tensor::param(&[ffn], vec![T::zero(); ffn])?,
                    ffn_w2: xavier_uniform(ffn, d, rng)?,
                    ffn_b2: Tensor::param(&[d], vec![T::zero(); d])?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let readout_w = xavier_uniform(d, config.class_count, rng)?;
        let readout_b = Tensor::param(&[config.class_count], vec![T::zero(); config.class_count])?;

        Ok(Self {
            embed_w,
            embed_b,
            stages,
            readout_w,
            readout_b,
        })
    }

    /// Parameter names in the fixed traversal order used everywhere
    /// (checkpoints, the optimizer, the gradient checker).
    pub fn names(&self) -> Vec<String> {
        let mut names = vec!["embed.w".to_string(), "embed.b".to_string()];
        for (i, stage) in self.stages.iter().enumerate() {
            for j in 0..stage.attn.heads.len() {
                names.push(format!("stage{i}.attn.head{j}.wq"));
                names.push(format!("stage{i}.attn.head{j}.wk"));
                names.push(format!("stage{i}.attn.head{j}.wv"));
            }
            names.push(format!("stage{i}.attn.wo"));
            names.push(format!("stage{i}.ln1.gain"));
            names.push(format!("stage{i}.ln1.bias"));
            names.push(format!("stage{i}.ln2.gain"));
            names.push(format!("stage{i}.ln2.bias"));
            names.push(format!("stage{i}.ffn.w1"));
            names.push(format!("stage{i}.ffn.b1"));
            names.push(format!("stage{i}.ffn.w2"));
            names.push(format!("stage{i}.ffn.b2"));
        }
        names.push("readout.w".to_string());
        names.push("readout.b".to_string());
        names
    }

    /// All parameter tensors, order matching [`ModelParams::names`].
    pub fn tensors(&self) -> Vec<Tensor<T>> {
        let mut out = vec![self.embed_w.clone(), self.embed_b.clone()];
        for stage in &self.stages {
            for head in &stage.attn.heads {
                out.push(head.w_q.clone());
                out.push(head.w_k.clone());
                out.push(head.w_v.clone());
            }
            out.push(stage.attn.w_o.clone());
            out.push(stage.ln1_gain.clone());
            out.push(stage.ln1_bias.clone());
            out.push(stage.ln2_gain.clone());
            out.push(stage.ln2_bias.clone());
            out.push(stage.ffn_w1.clone());
            out.push(stage.ffn_b1.clone());
            out.push(stage.ffn_w2.clone());
            out.push(stage.ffn_b2.clone());
        }
        out.push(self.readout_w.clone());
        out.push(self.readout_b.clone());
        out
    }

    /// Replace every parameter tensor, order matching [`ModelParams::names`].
    pub fn set_tensors(&mut self, tensors: Vec<Tensor<T>>) -> Result<()> {
        let expected = self.tensors().len();
        if tensors.len() != expected {
            return Err(Error::Argument(format!(
                "expected {expected} tensors, got {}",
                tensors.len()
            )));
        }
        let mut it = tensors.into_iter();
        let mut next = |slot: &mut Tensor<T>| {
            let t = it.next().expect("length checked above");
            if t.shape() != slot.shape() {
                return Err(Error::Shape(format!(
                    "replacement shape {:?} does not match {:?}",
                    t.shape(),
                    slot.shape()
                )));
            }
            *slot = t;
            Ok(())
        };
        next(&mut self.embed_w)?;
        next(&mut self.embed_b)?;
        for stage in &mut self.stages {
            for head in &mut stage.attn.heads {
                next(&mut head.w_q)?;
                next(&mut head.w_k)?;
                next(&mut head.w_v)?;
            }
            next(&mut stage.attn.w_o)?;
            next(&mut stage.ln1_gain)?;
            next(&mut stage.ln1_bias)?;
            next(&mut stage.ln2_gain)?;
            next(&mut stage.ln2_bias)?;
            next(&mut stage.ffn_w1)?;
            next(&mut stage.ffn_b1)?;
            next(&mut stage.ffn_w2)?;
            next(&mut stage.ffn_b2)?;
        }
        next(&mut self.readout_w)?;
        next(&mut self.readout_b)?;
        Ok(())
    }

    /// Replace the parameter at `index` (in [`ModelParams::names`] order).
    pub fn set_tensor(&mut self, index: usize, tensor: Tensor<T>) -> Result<()> {
        let mut all = self.tensors();
        if index >= all.len() {
            return Err(Error::Argument(format!(
                "parameter index {index} out of range ({} tensors)",
                all.len()
            )));
        }
        all[index] = tensor;
        self.set_tensors(all)
    }
}

/// Linear embedding of raw frame features to token width.
pub fn embed_frames<T: Scalar>(
    frames: &Tensor<T>,
    w_e: &Tensor<T>,
    b_e: &Tensor<T>,
) -> Result<Tensor<T>> {
    frames.linear(w_e, Some(b_e))
}

/// Fixed sinusoidal positional encoding: `PE[t, 2i] = sin(t / 10000^(2i/D))`
/// and `PE[t, 2i+1] = cos` of the same angle. Requires an even width.
pub fn positional_encoding<T: Scalar>(seq_len: usize, width: usize) -> Result<Tensor<T>> {
    if width == 0 || !width.is_multiple_of(2) {
        return Err(Error::Config(format!(
            "positional encoding requires an even width, got {width}"
        )));
    }
    let mut data = vec![T::zero(); seq_len * width];
    for t in 0..seq_len {
        for i in 0..width / 2 {
            let angle = t as f64 / 10_000f64.powf(2.0 * i as f64 / width as f64);
            data[t * width + 2 * i] = T::from_f64(angle.sin());
            data[t * width + 2 * i + 1] = T::from_f64(angle.cos());
        }
    }
    Tensor::new(&[seq_len, width], data)
}

/// One pre-norm residual stage:
/// `X' = X + msmha(LN1(X))`, `out = X' + FFN(LN2(X'))` with a GELU between
/// the feed-forward weights.
pub fn encoder_stage<T: Scalar>(
    x: &Tensor<T>,
    params: &EncoderStageParams<T>,
    schedule: &HeadSchedule,
) -> Result<Tensor<T>> {
    encoder_stage_inner(x, params, schedule, false)
}

fn encoder_stage_inner<T: Scalar>(
    x: &Tensor<T>,
    params: &EncoderStageParams<T>,
    schedule: &HeadSchedule,
    sabotage_backward: bool,
) -> Result<Tensor<T>> {
    let eps = T::from_f64(LAYER_NORM_EPS);
    let normed = x.layer_norm(&params.ln1_gain, &params.ln1_bias, eps)?;
    let attended = msmha_inner(&normed, &params.attn, schedule, sabotage_backward)?;
    let mid = x.add(&attended)?;

    let normed2 = mid.layer_norm(&params.ln2_gain, &params.ln2_bias, eps)?;
    let hidden = normed2.linear(&params.ffn_w1, Some(&params.ffn_b1))?.gelu();
    let ff = hidden.linear(&params.ffn_w2, Some(&params.ffn_b2))?;
    mid.add(&ff)
}

/// Full classifier: embed, add positions, run the encoder stack, mean-pool
/// over tokens and map to a class distribution. Returns a rank-1 posterior
/// of length `class_count` summing to one.
pub fn classify<T: Scalar>(
    frames: &Tensor<T>,
    params: &ModelParams<T>,
    config: &ModelConfig,
) -> Result<Tensor<T>> {
    classify_inner(frames, params, config, false)
}

pub(crate) fn classify_inner<T: Scalar>(
    frames: &Tensor<T>,
    params: &ModelParams<T>,
    config: &ModelConfig,
    sabotage_backward: bool,
) -> Result<Tensor<T>> {
    let (t_len, f) = frames.dims2()?;
    if t_len != config.sequence_length || f != config.input_frame_dim {
        return Err(Error::Shape(format!(
            "frames shape {:?} does not match configured [{}, {}]",
            frames.shape(),
            config.sequence_length,
            config.input_frame_dim
        )));
    }
    let schedule = config.head_schedule()?;

    let mut x = embed_frames(frames, &params.embed_w, &params.embed_b)?;
    if config.positional_encoding {
        x = x.add(&positional_encoding(t_len, config.feature_width)?)?;
    }
    for stage in &params.stages {
        x = encoder_stage_inner(&x, stage, &schedule, sabotage_backward)?;
    }
    let pooled = x.mean_rows()?;
    let logits = pooled
        .reshape(&[1, config.feature_width])?
        .linear(&params.readout_w, Some(&params.readout_b))?;
    logits.softmax_rows()?.reshape(&[config.class_count])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_config() -> ModelConfig {
        ModelConfig {
            feature_width: 8,
            head_count: 2,
            stage_count: 2,
            sequence_length: 4,
            class_count: 3,
            ffn_width: None,
            input_frame_dim: 6,
            positional_encoding: true,
        }
    }

    fn random_frames(rng: &mut ChaCha8Rng, t: usize, f: usize) -> Tensor<f64> {
        let data = (0..t * f).map(|_| rng.random_range(-1.0..1.0)).collect();
        Tensor::new(&[t, f], data).unwrap()
    }

    #[test]
    fn embed_identity_passthrough() {
        let frames = Tensor::<f64>::new(&[2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let w = Tensor::eye(3).unwrap();
        let b = Tensor::zeros(&[3]).unwrap();
        let out = embed_frames(&frames, &w, &b).unwrap();
        assert_eq!(out.data(), frames.data());
    }

    #[test]
    fn embed_zero_frames_yields_bias_rows() {
        let frames = Tensor::<f64>::zeros(&[3, 2]).unwrap();
        let w = Tensor::full(&[2, 4], 0.5).unwrap();
        let b = Tensor::new(&[4], vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let out = embed_frames(&frames, &w, &b).unwrap();
        for r in 0..3 {
            assert_eq!(&out.data()[r * 4..(r + 1) * 4], b.data());
        }
    }

    #[test]
    fn positional_encoding_row_zero_alternates() {
        let pe = positional_encoding::<f64>(3, 6).unwrap();
        assert_eq!(&pe.data()[..6], &[0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
        assert!((pe.data()[6] - 1f64.sin()).abs() < 1e-12);
    }

    #[test]
    fn positional_encoding_rows_are_distinct() {
        for (t, d) in [(64usize, 8usize), (10_000, 8), (10_000, 32)] {
            let pe = positional_encoding::<f64>(t, d).unwrap();
            let rows: std::collections::HashSet<Vec<u64>> = (0..t)
                .map(|r| pe.data()[r * d..(r + 1) * d].iter().map(|v| v.to_bits()).collect())
                .collect();
            assert_eq!(rows.len(), t, "coinciding rows at T={t}, D={d}");
        }
    }

    #[test]
    fn positional_encoding_rejects_odd_width() {
        assert!(matches!(
            positional_encoding::<f64>(4, 7),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn zero_weight_stage_is_identity() {
        let config = tiny_config();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let params = ModelParams::<f64>::init(&config, &mut rng).unwrap();
        let schedule = config.head_schedule().unwrap();

        // Zero the attention output weight and the second FFN weight: both
        // residual branches then contribute nothing.
        let mut stage = params.stages[0].clone();
        stage.attn.w_o = Tensor::zeros(stage.attn.w_o.shape()).unwrap();
        stage.ffn_w2 = Tensor::zeros(stage.ffn_w2.shape()).unwrap();
        stage.ffn_b2 = Tensor::zeros(stage.ffn_b2.shape()).unwrap();

        let x = random_frames(&mut rng, 4, 8);
        let out = encoder_stage(&x, &stage, &schedule).unwrap();
        for (a, b) in out.data().iter().zip(x.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn stage_matches_explicit_composition_of_its_pieces() {
        let config = tiny_config();
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let params = ModelParams::<f64>::init(&config, &mut rng).unwrap();
        let stage = &params.stages[0];
        let schedule = config.head_schedule().unwrap();
        let x = random_frames(&mut rng, 4, 8);

        let got = encoder_stage(&x, stage, &schedule).unwrap();

        let eps = LAYER_NORM_EPS;
        let mid = x
            .add(
                &crate::attention::msmha(
                    &x.layer_norm(&stage.ln1_gain, &stage.ln1_bias, eps).unwrap(),
                    &stage.attn,
                    &schedule,
                )
                .unwrap(),
            )
            .unwrap();
        let ff = mid
            .layer_norm(&stage.ln2_gain, &stage.ln2_bias, eps)
            .unwrap()
            .linear(&stage.ffn_w1, Some(&stage.ffn_b1))
            .unwrap()
            .gelu()
            .linear(&stage.ffn_w2, Some(&stage.ffn_b2))
            .unwrap();
        let want = mid.add(&ff).unwrap();

        assert_eq!(got.data(), want.data());
    }

    #[test]
    fn stage_preserves_token_shape_for_any_stage_count() {
        let mut config = tiny_config();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for s in 1..=6 {
            config.stage_count = s;
            let params = ModelParams::<f64>::init(&config, &mut rng).unwrap();
            let frames = random_frames(&mut rng, config.sequence_length, config.input_frame_dim);
            let posterior = classify(&frames, &params, &config).unwrap();
            assert_eq!(posterior.shape(), &[config.class_count]);
        }
    }

    #[test]
    fn posterior_is_a_distribution() {
        let config = tiny_config();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let params = ModelParams::<f64>::init(&config, &mut rng).unwrap();
        let frames = random_frames(&mut rng, 4, 6);
        let posterior = classify(&frames, &params, &config).unwrap();
        let sum: f64 = posterior.data().iter().sum();
        assert!((sum - 1.0).abs() < 1e-6);
        assert!(posterior.data().iter().all(|&p| p >= 0.0));
    }

    #[test]
    fn zero_readout_gives_uniform_posterior() {
        let mut config = tiny_config();
        config.class_count = 2;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut params = ModelParams::<f64>::init(&config, &mut rng).unwrap();
        params.readout_w = Tensor::zeros(&[8, 2]).unwrap();
        params.readout_b = Tensor::zeros(&[2]).unwrap();
        let frames = random_frames(&mut rng, 4, 6);
        let posterior = classify(&frames, &params, &config).unwrap();
        assert!((posterior.data()[0] - 0.5).abs() < 1e-12);
        assert!((posterior.data()[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn permutation_sensitivity_follows_positional_flag() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let mut changed_with_pe = 0;
        for _ in 0..10 {
            let mut config = tiny_config();
            let params = ModelParams::<f64>::init(&config, &mut rng).unwrap();
            let frames = random_frames(&mut rng, 4, 6);
            // reverse the frame order
            let mut rev = vec![0.0; 4 * 6];
            for t in 0..4 {
                rev[t * 6..(t + 1) * 6].copy_from_slice(&frames.data()[(3 - t) * 6..(4 - t) * 6]);
            }
            let rev = Tensor::new(&[4, 6], rev).unwrap();

            let with_pe = classify(&frames, &params, &config).unwrap();
            let with_pe_rev = classify(&rev, &params, &config).unwrap();
            let delta: f64 = with_pe
                .data()
                .iter()
                .zip(with_pe_rev.data())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            if delta > 1e-3 {
                changed_with_pe += 1;
            }

            config.positional_encoding = false;
            let no_pe = classify(&frames, &params, &config).unwrap();
            let no_pe_rev = classify(&rev, &params, &config).unwrap();
            for (a, b) in no_pe.data().iter().zip(no_pe_rev.data()) {
                assert!((a - b).abs() < 1e-6, "permutation changed output without positions");
            }
        }
        assert!(changed_with_pe >= 9, "only {changed_with_pe}/10 runs were position-sensitive");
    }

    #[test]
    fn names_and_tensors_stay_aligned() {
        let config = tiny_config();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let params = ModelParams::<f32>::init(&config, &mut rng).unwrap();
        let names = params.names();
        let tensors = params.tensors();
        assert_eq!(names.len(), tensors.len());
        let unique: std::collections::HashSet<_> = names.iter().collect();
        assert_eq!(unique.len(), names.len(), "duplicate parameter name");
    }
}
