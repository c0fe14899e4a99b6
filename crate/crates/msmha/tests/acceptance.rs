//! Acceptance suite. One test per criterion; each prints a PASS line with
//! the measured numbers when it holds.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use msmha::attention::{
    head_schedule, msmha, multi_head_attention, param_count_for, scaled_dot_attention,
    HeadParams, HeadSchedule, MsMhaParams,
};
use msmha::data::{
    generate_dataset, load_checkpoint, read_dataset, save_checkpoint, write_dataset, SynthConfig,
};
use msmha::model::{classify, ModelConfig, ModelParams};
use msmha::train::{
    evaluate, fuse_posterior_sets, gradcheck, run_bench, train, BenchConfig, GradCheckConfig,
    TrainConfig,
};
use msmha::Tensor;

// ── 1. schedule fidelity ────────────────────────────────────────────

#[test]
fn acceptance_schedule_fidelity() {
    let s = head_schedule(512, 8).expect("the reference configuration is valid");
    assert_eq!(s.dims(), &[512, 256, 128, 64, 32, 16, 8, 4]);

    for (d, h) in [(64, 8), (100, 4), (7, 2), (512, 33)] {
        assert!(
            head_schedule(d, h).is_err(),
            "({d}, {h}) must be rejected"
        );
    }
    println!("PASS schedule fidelity: head_schedule(512,8) = {:?}", s.dims());
}

// ── 2. reduction equivalence ────────────────────────────────────────

#[test]
fn acceptance_reduction_equivalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    let mut done = 0;
    while done < 100 {
        let h = rng.random_range(1..=4usize);
        let d = h * rng.random_range(1..=(16 / h).max(1));
        if d > 16 {
            continue;
        }
        let l = rng.random_range(1..=6usize);
        let schedule = HeadSchedule::uniform(d, h).expect("d chosen divisible by h");
        let params = MsMhaParams::<f64>::init(&schedule, &mut rng).unwrap();
        let x_data: Vec<f64> = (0..l * d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let x = Tensor::new(&[l, d], x_data).unwrap();

        let a = msmha(&x, &params, &schedule).unwrap();
        let b = multi_head_attention(&x, &params).unwrap();
        for (va, vb) in a.data().iter().zip(b.data()) {
            worst = worst.max((va - vb).abs());
        }
        done += 1;
    }
    assert!(worst <= 1e-6, "max |msmha - mha| = {worst}");
    println!("PASS reduction equivalence: 100 uniform instances, max abs diff {worst:.3e}");
}

// ── 3. gradient suite ───────────────────────────────────────────────

#[test]
fn acceptance_gradient_suite() {
    let started = Instant::now();
    let cfg = GradCheckConfig::default(); // T=4 F=6 D=8 h=2 S=2 C=3, 20 seeds, 1e-4
    assert_eq!(cfg.seeds, 20);
    let report = gradcheck(&cfg).unwrap();
    assert!(
        report.passed,
        "max relative error {} exceeds {}",
        report.max_rel_err, report.tolerance
    );

    let sabotaged = gradcheck(&GradCheckConfig {
        sabotage: true,
        seeds: 1,
        ..GradCheckConfig::default()
    })
    .unwrap();
    assert!(!sabotaged.passed, "negative control failed to fail");

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() < 120, "gradient suite took {elapsed:?}");
    println!(
        "PASS gradient suite: max rel err {:.3e} over 20 seeds in {elapsed:?}; sabotage detected",
        report.max_rel_err
    );
}

// ── 4. brute-force oracle ───────────────────────────────────────────

/// Straight-line softmax(Q K^T / sqrt(d)) V, sharing no code with the crate.
fn oracle_attention(
    q: &[f64],
    k: &[f64],
    v: &[f64],
    l: usize,
    d: usize,
    dv: usize,
) -> Vec<f64> {
    let mut out = vec![0.0; l * dv];
    for i in 0..l {
        let mut scores = vec![0.0; l];
        for j in 0..l {
            let mut s = 0.0;
            for p in 0..d {
                s += q[i * d + p] * k[j * d + p];
            }
            scores[j] = s / (d as f64).sqrt();
        }
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        for j in 0..l {
            let w = exps[j] / z;
            for c in 0..dv {
                out[i * dv + c] += w * v[j * dv + c];
            }
        }
    }
    out
}

/// Straight-line multiscaled attention over explicit weight slices.
#[allow(clippy::too_many_arguments)]
fn oracle_msmha(
    x: &[f64],
    l: usize,
    d: usize,
    dims: &[usize],
    wq: &[Vec<f64>],
    wk: &[Vec<f64>],
    wv: &[Vec<f64>],
    wo: &[f64],
) -> Vec<f64> {
    let project = |w: &[f64], dj: usize| -> Vec<f64> {
        let mut out = vec![0.0; l * dj];
        for i in 0..l {
            for c in 0..dj {
                let mut s = 0.0;
                for p in 0..d {
                    s += x[i * d + p] * w[p * dj + c];
                }
                out[i * dj + c] = s;
            }
        }
        out
    };
    let total: usize = dims.iter().sum();
    let mut concat = vec![0.0; l * total];
    let mut offset = 0;
    for (j, &dj) in dims.iter().enumerate() {
        let q = project(&wq[j], dj);
        let k = project(&wk[j], dj);
        let v = project(&wv[j], dj);
        let head = oracle_attention(&q, &k, &v, l, dj, dj);
        for i in 0..l {
            concat[i * total + offset..i * total + offset + dj]
                .copy_from_slice(&head[i * dj..(i + 1) * dj]);
        }
        offset += dj;
    }
    let mut out = vec![0.0; l * d];
    for i in 0..l {
        for c in 0..d {
            let mut s = 0.0;
            for p in 0..total {
                s += concat[i * total + p] * wo[p * d + c];
            }
            out[i * d + c] = s;
        }
    }
    out
}

#[test]
fn acceptance_brute_force_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(4096);
    let mut rand_vec = |n: usize| -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-2.0..2.0)).collect()
    };
    let mut worst = 0.0f64;

    // scaled_dot_attention on 2x2 and 3x4 instances
    for (l, d) in [(2usize, 2usize), (3, 4)] {
        let (q, k, v) = (rand_vec(l * d), rand_vec(l * d), rand_vec(l * d));
        let got = scaled_dot_attention(
            &Tensor::new(&[l, d], q.clone()).unwrap(),
            &Tensor::new(&[l, d], k.clone()).unwrap(),
            &Tensor::new(&[l, d], v.clone()).unwrap(),
        )
        .unwrap();
        let want = oracle_attention(&q, &k, &v, l, d, d);
        for (a, b) in got.data().iter().zip(&want) {
            worst = worst.max((a - b).abs());
        }
    }

    // multi_head_attention on a 3x4 two-head uniform instance
    {
        let (l, d, h) = (3usize, 4usize, 2usize);
        let dims = vec![d / h; h];
        let wq: Vec<Vec<f64>> = dims.iter().map(|&dj| rand_vec(d * dj)).collect();
        let wk: Vec<Vec<f64>> = dims.iter().map(|&dj| rand_vec(d * dj)).collect();
        let wv: Vec<Vec<f64>> = dims.iter().map(|&dj| rand_vec(d * dj)).collect();
        let wo = rand_vec(d * d);
        let params = MsMhaParams {
            heads: (0..h)
                .map(|j| HeadParams {
                    w_q: Tensor::new(&[d, dims[j]], wq[j].clone()).unwrap(),
                    w_k: Tensor::new(&[d, dims[j]], wk[j].clone()).unwrap(),
                    w_v: Tensor::new(&[d, dims[j]], wv[j].clone()).unwrap(),
                })
                .collect(),
            w_o: Tensor::new(&[d, d], wo.clone()).unwrap(),
        };
        let x = rand_vec(l * d);
        let got =
            multi_head_attention(&Tensor::new(&[l, d], x.clone()).unwrap(), &params).unwrap();
        let want = oracle_msmha(&x, l, d, &dims, &wq, &wk, &wv, &wo);
        for (a, b) in got.data().iter().zip(&want) {
            worst = worst.max((a - b).abs());
        }
    }

    // msmha on 2x2 (one head) and 3x4 (pyramid [4, 2]) instances
    for (l, d, h) in [(2usize, 2usize, 1usize), (3, 4, 2)] {
        let schedule = head_schedule(d, h).unwrap();
        let dims = schedule.dims().to_vec();
        let wq: Vec<Vec<f64>> = dims.iter().map(|&dj| rand_vec(d * dj)).collect();
        let wk: Vec<Vec<f64>> = dims.iter().map(|&dj| rand_vec(d * dj)).collect();
        let wv: Vec<Vec<f64>> = dims.iter().map(|&dj| rand_vec(d * dj)).collect();
        let total: usize = dims.iter().sum();
        let wo = rand_vec(total * d);

        let params = MsMhaParams {
            heads: (0..h)
                .map(|j| HeadParams {
                    w_q: Tensor::new(&[d, dims[j]], wq[j].clone()).unwrap(),
                    w_k: Tensor::new(&[d, dims[j]], wk[j].clone()).unwrap(),
                    w_v: Tensor::new(&[d, dims[j]], wv[j].clone()).unwrap(),
                })
                .collect(),
            w_o: Tensor::new(&[total, d], wo.clone()).unwrap(),
        };
        let x = rand_vec(l * d);
        let got = msmha(
            &Tensor::new(&[l, d], x.clone()).unwrap(),
            &params,
            &schedule,
        )
        .unwrap();
        let want = oracle_msmha(&x, l, d, &dims, &wq, &wk, &wv, &wo);
        for (a, b) in got.data().iter().zip(&want) {
            worst = worst.max((a - b).abs());
        }
    }

    assert!(worst <= 1e-6, "max abs deviation from oracle: {worst}");
    println!("PASS brute-force oracle: max abs deviation {worst:.3e}");
}

// ── 5. toy training ─────────────────────────────────────────────────

fn toy_config() -> TrainConfig {
    TrainConfig {
        model: ModelConfig {
            feature_width: 32,
            head_count: 4,
            stage_count: 2,
            sequence_length: 8,
            class_count: 5,
            ffn_width: None,
            input_frame_dim: 16,
            positional_encoding: true,
        },
        synth: Some(SynthConfig {
            class_count: 5,
            sequence_length: 8,
            frame_dim: 16,
            stream_count: 1,
            train_size: 200,
            test_size: 100,
            noise_sigma: 0.5,
            cross_stream_correlation: 0.3,
            seed: 7,
        }),
        dataset: None,
        stream: None,
        learning_rate: 1e-3,
        decay_epochs: vec![],
        decay_factor: 0.1,
        beta1: 0.9,
        beta2: 0.999,
        adam_eps: 1e-8,
        epochs: 30,
        batch_size: 16,
        seed: 42,
    }
}

#[test]
fn acceptance_toy_training() {
    let started = Instant::now();
    let cfg = toy_config();
    let first = train(&cfg).unwrap();
    let second = train(&cfg).unwrap();
    let elapsed = started.elapsed();

    let last = first.metrics.last().unwrap();
    assert!(
        last.train_accuracy >= 0.95,
        "train accuracy {}",
        last.train_accuracy
    );
    assert!(
        last.test_accuracy >= 0.80,
        "test accuracy {}",
        last.test_accuracy
    );
    assert!(
        elapsed.as_secs() < 300,
        "two training runs took {elapsed:?}, budget is 5 min for one"
    );

    // loss descent: epoch-30 loss at most half the epoch-1 loss
    let first_loss = first.metrics.first().unwrap().train_loss;
    let final_loss = last.train_loss;
    assert!(
        final_loss <= 0.5 * first_loss,
        "loss went {first_loss} -> {final_loss}"
    );

    // bit-identical metrics and checkpoint bytes across reruns
    for (a, b) in first.metrics.iter().zip(&second.metrics) {
        assert_eq!(a.train_loss.to_bits(), b.train_loss.to_bits());
        assert_eq!(a.train_accuracy.to_bits(), b.train_accuracy.to_bits());
        assert_eq!(a.test_accuracy.to_bits(), b.test_accuracy.to_bits());
    }
    let dir = tempfile::tempdir().unwrap();
    let path_a = dir.path().join("a.ckpt");
    let path_b = dir.path().join("b.ckpt");
    save_checkpoint(&path_a, &first.params, &first.config).unwrap();
    save_checkpoint(&path_b, &second.params, &second.config).unwrap();
    assert_eq!(
        std::fs::read(&path_a).unwrap(),
        std::fs::read(&path_b).unwrap(),
        "checkpoint bytes differ between identical runs"
    );

    println!(
        "PASS toy training: train_acc {:.4}, test_acc {:.4}, two runs in {elapsed:?}, reruns bit-identical",
        last.train_accuracy, last.test_accuracy
    );
}

// ── 6. fusion benefit ───────────────────────────────────────────────

#[test]
fn acceptance_fusion_benefit() {
    let model = ModelConfig {
        feature_width: 16,
        head_count: 2,
        stage_count: 1,
        sequence_length: 8,
        class_count: 5,
        ffn_width: None,
        input_frame_dim: 16,
        positional_encoding: true,
    };
    let mut wins = 0;
    let mut lines = Vec::new();
    for seed in 0..10u64 {
        let synth = SynthConfig {
            class_count: 5,
            sequence_length: 8,
            frame_dim: 16,
            stream_count: 2,
            train_size: 120,
            test_size: 100,
            noise_sigma: 1.0,
            cross_stream_correlation: 0.3,
            seed,
        };
        let (_, test_set) = generate_dataset(&synth).unwrap();

        let mut posteriors = Vec::new();
        let mut single = Vec::new();
        for stream in ["synthetic-0", "synthetic-1"] {
            let cfg = TrainConfig {
                model: model.clone(),
                synth: Some(synth.clone()),
                dataset: None,
                stream: Some(stream.to_string()),
                learning_rate: 3e-3,
                decay_epochs: vec![],
                decay_factor: 0.1,
                beta1: 0.9,
                beta2: 0.999,
                adam_eps: 1e-8,
                epochs: 20,
                batch_size: 16,
                seed: 1,
            };
            let outcome = train(&cfg).unwrap();
            let eval = evaluate(&outcome.params, &outcome.config, &test_set, Some(stream)).unwrap();
            single.push(eval.accuracy);
            posteriors.push((stream.to_string(), eval.posteriors));
        }

        // single-stream fusion must reproduce the unimodal accuracy exactly
        let solo = fuse_posterior_sets(&posteriors[..1]).unwrap();
        assert_eq!(solo.fused_accuracy.to_bits(), single[0].to_bits());

        let report = fuse_posterior_sets(&posteriors).unwrap();
        let best = single[0].max(single[1]);
        let win = report.fused_accuracy >= best;
        wins += usize::from(win);
        lines.push(format!(
            "seed {seed}: singles {:.2}/{:.2} fused {:.2} {}",
            single[0],
            single[1],
            report.fused_accuracy,
            if win { "ok" } else { "below best single" }
        ));
    }
    for line in &lines {
        println!("  {line}");
    }
    assert!(wins >= 8, "fusion matched or beat the best single stream on only {wins}/10 seeds");
    println!("PASS fusion benefit: {wins}/10 seeds at rho 0.3, noise 1.0");
}

// ── 7. cost model ───────────────────────────────────────────────────

#[test]
fn acceptance_cost_model() {
    let cfg = BenchConfig {
        dims: vec![512],
        heads: vec![8],
        seq_lens: vec![8],
        repeats: 3,
        seed: 9,
    };
    let outcome = run_bench(&cfg).unwrap();
    let pyramid = outcome
        .rows
        .iter()
        .find(|r| r.variant == "pyramid" && r.d == 512 && r.h == 8)
        .expect("pyramid row present");
    let uniform = outcome
        .rows
        .iter()
        .find(|r| r.variant == "uniform" && r.d == 512 && r.h == 8)
        .expect("uniform row present");
    assert_eq!(pyramid.params, 2_088_960);
    assert_eq!(uniform.params, 1_048_576);

    // exhaustive enumeration of the actual parameter tensors
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let ps = head_schedule(512, 8).unwrap();
    let us = HeadSchedule::uniform(512, 8).unwrap();
    let enumerated_pyramid = MsMhaParams::<f32>::init(&ps, &mut rng).unwrap().num_params() as u64;
    let enumerated_uniform = MsMhaParams::<f32>::init(&us, &mut rng).unwrap().num_params() as u64;
    assert_eq!(pyramid.params, enumerated_pyramid);
    assert_eq!(uniform.params, enumerated_uniform);
    assert_eq!(param_count_for(&ps, false), enumerated_pyramid);
    assert_eq!(param_count_for(&us, false), enumerated_uniform);
    assert!(pyramid.median_ns > 0 && uniform.median_ns > 0);

    println!(
        "PASS cost model: pyramid {} vs uniform {} params at D=512 h=8, both matching enumeration",
        pyramid.params, uniform.params
    );
}

// ── 8. format round trips ───────────────────────────────────────────

#[test]
fn acceptance_format_round_trips() {
    let dir = tempfile::tempdir().unwrap();

    // dataset
    let synth = SynthConfig {
        class_count: 4,
        sequence_length: 6,
        frame_dim: 5,
        stream_count: 2,
        train_size: 12,
        test_size: 4,
        noise_sigma: 0.8,
        cross_stream_correlation: 0.5,
        seed: 31,
    };
    let (train_set, _) = generate_dataset(&synth).unwrap();
    let data_path = dir.path().join("d.msgv");
    write_dataset(&data_path, &train_set).unwrap();
    let reread = read_dataset(&data_path).unwrap();
    for (a, b) in train_set.samples.iter().zip(&reread.samples) {
        assert_eq!(a.label, b.label);
        for (sa, sb) in a.streams.iter().zip(&b.streams) {
            let bits_a: Vec<u32> = sa.data().iter().map(|v| v.to_bits()).collect();
            let bits_b: Vec<u32> = sb.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(bits_a, bits_b);
        }
    }

    // checkpoint, including bit-exact logits after reload
    let config = ModelConfig {
        feature_width: 8,
        head_count: 2,
        stage_count: 2,
        sequence_length: 4,
        class_count: 3,
        ffn_width: None,
        input_frame_dim: 6,
        positional_encoding: true,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let params = ModelParams::<f32>::init(&config, &mut rng).unwrap();
    let ckpt_path = dir.path().join("m.ckpt");
    save_checkpoint(&ckpt_path, &params, &config).unwrap();
    let (loaded, loaded_config) = load_checkpoint(&ckpt_path).unwrap();

    for (a, b) in params.tensors().iter().zip(loaded.tensors().iter()) {
        let bits_a: Vec<u32> = a.data().iter().map(|v| v.to_bits()).collect();
        let bits_b: Vec<u32> = b.data().iter().map(|v| v.to_bits()).collect();
        assert_eq!(bits_a, bits_b);
    }

    let frames_data: Vec<f32> = (0..24).map(|i| (i as f32 * 0.17).cos()).collect();
    let frames = Tensor::new(&[4, 6], frames_data).unwrap();
    let a = classify(&frames, &params, &config).unwrap();
    let b = classify(&frames, &loaded, &loaded_config).unwrap();
    let bits_a: Vec<u32> = a.data().iter().map(|v| v.to_bits()).collect();
    let bits_b: Vec<u32> = b.data().iter().map(|v| v.to_bits()).collect();
    assert_eq!(bits_a, bits_b, "reloaded checkpoint changed the logits");

    println!("PASS format round trips: dataset and checkpoint bit-exact, logits reproduced");
}
