//! Attention cost benchmark: analytic parameter and multiply-accumulate
//! counts for the pyramid and uniform head layouts, next to measured forward
//! wall time, emitted as CSV.

use std::io::Write;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::attention::{
    mac_count_for, msmha, param_count_for, HeadSchedule, MsMhaParams,
};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct BenchConfig {
    /// Feature widths D to sweep.
    pub dims: Vec<usize>,
    /// Head counts h to sweep.
    pub heads: Vec<usize>,
    /// Sequence lengths L to sweep.
    pub seq_lens: Vec<usize>,
    /// Timed forward passes per configuration (after one warmup).
    pub repeats: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            dims: vec![512],
            heads: vec![8],
            seq_lens: vec![40],
            repeats: 5,
            seed: 42,
        }
    }
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BenchRow {
    pub d: usize,
    pub h: usize,
    pub l: usize,
    /// `pyramid` or `uniform`.
    pub variant: &'static str,
    pub params: u64,
    pub macs: u64,
    pub median_ns: u128,
}

/// Sweep every `(D, h, L)` combination. Combinations where a layout is not
/// constructible (divisibility) are skipped and reported via `skipped`.
pub struct BenchOutcome {
    pub rows: Vec<BenchRow>,
    pub skipped: Vec<String>,
}

pub fn run_bench(cfg: &BenchConfig) -> Result<BenchOutcome> {
    if cfg.repeats == 0 {
        return Err(Error::Argument("bench repeats must be at least 1".into()));
    }
    if cfg.dims.is_empty() || cfg.heads.is_empty() || cfg.seq_lens.is_empty() {
        return Err(Error::Argument("bench sweep lists must be non-empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut rows = Vec::new();
    let mut skipped = Vec::new();

    for &d in &cfg.dims {
        for &h in &cfg.heads {
            for &l in &cfg.seq_lens {
                for (variant, schedule) in [
                    ("pyramid", HeadSchedule::pyramid(d, h)),
                    ("uniform", HeadSchedule::uniform(d, h)),
                ] {
                    match schedule {
                        Ok(schedule) => {
                            rows.push(time_variant(&schedule, variant, l, cfg.repeats, &mut rng)?)
                        }
                        Err(e) => skipped.push(format!("D={d} h={h} {variant}: {e}")),
                    }
                }
            }
        }
    }
    Ok(BenchOutcome { rows, skipped })
}

fn time_variant(
    schedule: &HeadSchedule,
    variant: &'static str,
    seq_len: usize,
    repeats: usize,
    rng: &mut ChaCha8Rng,
) -> Result<BenchRow> {
    let d = schedule.feature_width();
    let params = MsMhaParams::<f32>::init(schedule, rng)?;
    let x_data: Vec<f32> = (0..seq_len * d).map(|_| rng.random_range(-1.0..1.0)).collect();
    // untracked input and forward-only timing: no graph is recorded
    let x = Tensor::new(&[seq_len, d], x_data)?;
    let untracked = untracked_params(&params);

    msmha(&x, &untracked, schedule)?; // warmup

    let mut times: Vec<u128> = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let start = Instant::now();
        let out = msmha(&x, &untracked, schedule)?;
        times.push(start.elapsed().as_nanos());
        std::hint::black_box(out.data()[0]);
    }
    times.sort_unstable();
    let median_ns = times[times.len() / 2];

    Ok(BenchRow {
        d,
        h: schedule.head_count(),
        l: seq_len,
        variant,
        params: param_count_for(schedule, false),
        macs: mac_count_for(schedule, seq_len),
        median_ns,
    })
}

fn untracked_params(params: &MsMhaParams<f32>) -> MsMhaParams<f32> {
    let untrack = |t: &Tensor<f32>| {
        Tensor::new(t.shape(), t.data().to_vec()).expect("same shape and data")
    };
    MsMhaParams {
        heads: params
            .heads
            .iter()
            .map(|h| crate::attention::HeadParams {
                w_q: untrack(&h.w_q),
                w_k: untrack(&h.w_k),
                w_v: untrack(&h.w_v),
            })
            .collect(),
        w_o: untrack(&params.w_o),
    }
}

/// Write rows as `D,h,L,variant,params,macs,median_ns`.
pub fn write_bench_csv<W: Write>(rows: &[BenchRow], mut w: W) -> Result<()> {
    writeln!(w, "D,h,L,variant,params,macs,median_ns")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.d, r.h, r.l, r.variant, r.params, r.macs, r.median_ns
        )?;
    }
    Ok(())
}
