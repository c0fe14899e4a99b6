//! Command-line surface: gen-data, train, eval, fuse, gradcheck, bench.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use msmha::data::{
    generate_dataset, load_checkpoint, read_dataset, save_checkpoint, write_dataset, SynthConfig,
};
use msmha::train::{
    fuse_posterior_sets, gradcheck, run_bench, write_bench_csv, BenchConfig, GradCheckConfig,
    TrainConfig,
};
use msmha::{Error, Result};

#[derive(Parser)]
#[command(
    name = "msmha",
    version,
    about = "Multiscaled multi-head attention video transformer: train, evaluate and fuse gesture classifiers on synthetic multimodal data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic train/test dataset pair.
    GenData(GenDataArgs),
    /// Train a classifier and write a checkpoint.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset and write per-sample posteriors.
    Eval(EvalArgs),
    /// Fuse posterior files and report per-stream and fused accuracy.
    Fuse(FuseArgs),
    /// Check analytic gradients against finite differences at 64 bits.
    Gradcheck(GradcheckArgs),
    /// Benchmark pyramid vs uniform attention cost, emitting CSV.
    Bench(BenchArgs),
}

#[derive(Args)]
struct GenDataArgs {
    /// JSON file holding the generator settings.
    #[arg(long)]
    config: PathBuf,
    /// Directory for train.msgv and test.msgv.
    #[arg(long)]
    out: PathBuf,
    /// Override the generator seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct TrainArgs {
    /// JSON file holding the training settings.
    #[arg(long)]
    config: PathBuf,
    /// Checkpoint output path.
    #[arg(long, default_value = "model.ckpt")]
    out: PathBuf,
    /// Override the training dataset path.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Override the held-out dataset path.
    #[arg(long)]
    test_data: Option<PathBuf>,
    /// Override the modality stream to train on.
    #[arg(long)]
    stream: Option<String>,
    /// Override the training seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct EvalArgs {
    /// Checkpoint to evaluate.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Dataset to evaluate on.
    #[arg(long)]
    data: PathBuf,
    /// Posterior file to write.
    #[arg(long)]
    out: PathBuf,
    /// Modality stream to evaluate (defaults to the only stream).
    #[arg(long)]
    stream: Option<String>,
}

#[derive(Args)]
struct FuseArgs {
    /// Posterior files produced by eval, one per stream.
    #[arg(required = true)]
    posteriors: Vec<PathBuf>,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Random instances to check.
    #[arg(long, default_value_t = 20)]
    seeds: u64,
    /// Maximum allowed relative error.
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
    /// Corrupt the attention-scale gradient on purpose; the check must fail.
    #[arg(long)]
    sabotage: bool,
}

#[derive(Args)]
struct BenchArgs {
    /// Feature widths D to sweep.
    #[arg(long, value_delimiter = ',', default_value = "512")]
    dims: Vec<usize>,
    /// Head counts h to sweep.
    #[arg(long, value_delimiter = ',', default_value = "8")]
    heads: Vec<usize>,
    /// Sequence lengths L to sweep.
    #[arg(long, value_delimiter = ',', default_value = "40")]
    seq_lens: Vec<usize>,
    /// Timed repetitions per configuration.
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    /// Write the CSV here as well as to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::GenData(args) => gen_data(args),
        Command::Train(args) => train_cmd(args),
        Command::Eval(args) => eval_cmd(args),
        Command::Fuse(args) => fuse_cmd(args),
        Command::Gradcheck(args) => gradcheck_cmd(args),
        Command::Bench(args) => bench_cmd(args),
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn gen_data(args: GenDataArgs) -> Result<ExitCode> {
    let mut cfg: SynthConfig = read_json(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let (train, test) = generate_dataset(&cfg)?;
    fs::create_dir_all(&args.out)?;
    let train_path = args.out.join("train.msgv");
    let test_path = args.out.join("test.msgv");
    write_dataset(&train_path, &train)?;
    write_dataset(&test_path, &test)?;
    println!(
        "wrote {} train and {} test samples ({} streams, T={}, F={}, C={})",
        train.samples.len(),
        test.samples.len(),
        train.streams.len(),
        train.sequence_length,
        cfg.frame_dim,
        train.class_count
    );
    println!("train: {}", train_path.display());
    println!("test:  {}", test_path.display());
    Ok(ExitCode::SUCCESS)
}

fn train_cmd(args: TrainArgs) -> Result<ExitCode> {
    let mut cfg: TrainConfig = read_json(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(stream) = args.stream {
        cfg.stream = Some(stream);
    }
    match (&args.data, &args.test_data) {
        (None, None) => {}
        (Some(train), Some(test)) => {
            cfg.synth = None;
            cfg.dataset = Some(msmha::train::DataPaths {
                train: train.clone(),
                test: test.clone(),
            });
        }
        _ => {
            return Err(Error::Argument(
                "--data and --test-data must be given together".into(),
            ))
        }
    }

    let outcome = msmha::train::train(&cfg)?;
    for m in &outcome.metrics {
        println!(
            "epoch {:3}  lr {:9.3e}  train_loss {:.6}  train_acc {:.4}  test_acc {:.4}",
            m.epoch, m.learning_rate, m.train_loss, m.train_accuracy, m.test_accuracy
        );
    }
    save_checkpoint(&args.out, &outcome.params, &outcome.config)?;
    println!("trained on stream '{}'", outcome.stream);
    println!("checkpoint: {}", args.out.display());
    Ok(ExitCode::SUCCESS)
}

fn eval_cmd(args: EvalArgs) -> Result<ExitCode> {
    let (params, config) = load_checkpoint(&args.checkpoint)?;
    let dataset = read_dataset(&args.data)?;
    let outcome = msmha::train::evaluate(&params, &config, &dataset, args.stream.as_deref())?;
    write_dataset(&args.out, &outcome.posteriors)?;
    println!("accuracy {:.4}", outcome.accuracy);
    println!("posteriors: {}", args.out.display());
    Ok(ExitCode::SUCCESS)
}

fn fuse_cmd(args: FuseArgs) -> Result<ExitCode> {
    let mut sets = Vec::with_capacity(args.posteriors.len());
    for path in &args.posteriors {
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        sets.push((name, read_dataset(path)?));
    }
    let report = fuse_posterior_sets(&sets)?;

    println!("{:<24} accuracy", "stream");
    for (name, acc) in &report.per_stream {
        println!("{name:<24} {acc:.4}");
    }
    let fused_name = sets
        .iter()
        .map(|(n, _)| n.as_str())
        .collect::<Vec<_>>()
        .join("+");
    println!(
        "{fused_name:<24} {:.4}  (fused, {} samples)",
        report.fused_accuracy, report.sample_count
    );
    Ok(ExitCode::SUCCESS)
}

fn gradcheck_cmd(args: GradcheckArgs) -> Result<ExitCode> {
    let cfg = GradCheckConfig {
        seeds: args.seeds,
        tolerance: args.tolerance,
        sabotage: args.sabotage,
        ..GradCheckConfig::default()
    };
    let report = gradcheck(&cfg)?;
    println!("{:<24} max_rel_err", "parameter group");
    for g in &report.groups {
        println!("{:<24} {:.3e}", g.name, g.max_rel_err);
    }
    println!(
        "max relative error {:.3e} over {} seeds (tolerance {:.1e}): {}",
        report.max_rel_err,
        report.seeds,
        report.tolerance,
        if report.passed { "PASS" } else { "FAIL" }
    );
    Ok(if report.passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn bench_cmd(args: BenchArgs) -> Result<ExitCode> {
    let cfg = BenchConfig {
        dims: args.dims,
        heads: args.heads,
        seq_lens: args.seq_lens,
        repeats: args.repeats,
        seed: args.seed,
    };
    let outcome = run_bench(&cfg)?;
    for note in &outcome.skipped {
        eprintln!("skipped {note}");
    }
    let mut csv = Vec::new();
    write_bench_csv(&outcome.rows, &mut csv)?;
    print!("{}", String::from_utf8_lossy(&csv));
    if let Some(path) = args.out {
        fs::write(&path, &csv)?;
        eprintln!("csv: {}", path.display());
    }
    Ok(ExitCode::SUCCESS)
}
