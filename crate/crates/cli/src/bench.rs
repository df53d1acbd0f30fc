//! `bench`: dense and LSH score kernels side by side on seeded Gaussian inputs.

use serde::Serialize;
use simhash_attn::instrument::{execution_family, full_counters, sample_lsh_counts};
use simhash_attn::rng::stream_rng;
use simhash_attn::{time_attention, AttentionInputs, LshConfig, ScoreMode};

use crate::{positive, to_csv, to_json, BenchArgs, CliError, Format};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModeStats {
    pub kflops: f64,
    /// Mean over the sampled executions (exact for the dense kernel).
    pub dot_products: f64,
    pub mean_time_s: f64,
    pub std_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub batch: usize,
    pub heads: usize,
    pub seq_len: usize,
    pub head_dim: usize,
    pub bands: usize,
    pub table_size: usize,
    pub num_hash_fns: usize,
    pub seed: u64,
    pub samples: u64,
    pub runs: usize,
    pub full: ModeStats,
    pub lsh: ModeStats,
}

#[derive(Serialize)]
struct MetricRow {
    metric: &'static str,
    full: f64,
    lsh: f64,
}

impl BenchReport {
    pub fn render(&self, format: Format) -> Result<String, CliError> {
        match format {
            Format::Json => to_json(self),
            Format::Csv => to_csv(&[
                MetricRow {
                    metric: "kflops",
                    full: self.full.kflops,
                    lsh: self.lsh.kflops,
                },
                MetricRow {
                    metric: "dot_products",
                    full: self.full.dot_products,
                    lsh: self.lsh.dot_products,
                },
                MetricRow {
                    metric: "mean_time_s",
                    full: self.full.mean_time_s,
                    lsh: self.lsh.mean_time_s,
                },
            ]),
        }
    }
}

pub fn run(a: &BenchArgs) -> Result<BenchReport, CliError> {
    let batch = positive("batch", a.batch.unwrap_or(1))?;
    let heads = positive("heads", a.heads.unwrap_or(2))?;
    let seq_len = positive("seq-len", a.seq_len.unwrap_or(10))?;
    let head_dim = positive("head-dim", a.head_dim.unwrap_or(64))?;
    let samples = a.samples.unwrap_or(100);
    if samples == 0 {
        return Err(CliError::Usage("--samples must be positive".into()));
    }
    let runs = positive("runs", a.runs.unwrap_or(1000))?;
    let seed = a.seed.unwrap_or(0);
    let config = LshConfig::new(
        a.bands.unwrap_or(2),
        a.table_size.unwrap_or(64),
        a.num_hash_fns.unwrap_or(1),
        head_dim,
        seed,
    )?;

    let inputs = AttentionInputs::gaussian(&mut stream_rng(seed, 0), batch, heads, seq_len, head_dim);

    let dense = full_counters(batch, heads, seq_len, head_dim);
    let full_time = time_attention(ScoreMode::Full, &inputs, None, runs)?;
    let sampled = sample_lsh_counts(&inputs, &config, samples)?;
    let family = execution_family(&config, 0)?;
    let lsh_time = time_attention(ScoreMode::Lsh, &inputs, Some(&family), runs)?;

    Ok(BenchReport {
        batch,
        heads,
        seq_len,
        head_dim,
        bands: config.bands,
        table_size: config.table_size,
        num_hash_fns: config.num_hash_fns,
        seed,
        samples,
        runs,
        full: ModeStats {
            kflops: dense.kflops(),
            dot_products: dense.dot_products as f64,
            mean_time_s: full_time.mean_s,
            std_time_s: full_time.std_s,
        },
        lsh: ModeStats {
            kflops: sampled.mean_flops() / 1000.0,
            dot_products: sampled.mean_dot_products(),
            mean_time_s: lsh_time.mean_s,
            std_time_s: lsh_time.std_s,
        },
    })
}
