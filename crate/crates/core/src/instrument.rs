//! Operation counts, an analytic FLOP model, and wall-clock timing.
//!
//! FLOP convention: a `d`-wide dot product costs `2d` (one multiply and one
//! add per coordinate). The LSH model charges the sign projections of every
//! stacked query and key row plus one dot product per collided pair. Integer
//! bucket arithmetic is not floating point and is not counted, so the model
//! does not depend on the table size.

use std::hint::black_box;
use std::ops::{Add, AddAssign};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::attention::{full_scores, lsh_scores, AttentionInputs, ScoreMode};
use crate::error::{Error, Result};
use crate::simhash::{build_hash_family, HashFamily, LshConfig, QkCollisionMask};

/// Warm-up executions discarded before timing.
pub const WARMUP_RUNS: usize = 10;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct OpCounters {
    pub dot_products: u64,
    pub flops: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_time_seconds: Option<f64>,
}

impl OpCounters {
    pub fn new(dot_products: u64, flops: u64) -> Self {
        Self {
            dot_products,
            flops,
            wall_time_seconds: None,
        }
    }

    pub fn kflops(&self) -> f64 {
        self.flops as f64 / 1000.0
    }
}

impl Add for OpCounters {
    type Output = Self;

    fn add(self, rhs: Self) -> Self {
        let wall_time_seconds = match (self.wall_time_seconds, rhs.wall_time_seconds) {
            (None, None) => None,
            (a, b) => Some(a.unwrap_or(0.0) + b.unwrap_or(0.0)),
        };
        Self {
            dot_products: self.dot_products + rhs.dot_products,
            flops: self.flops + rhs.flops,
            wall_time_seconds,
        }
    }
}

impl AddAssign for OpCounters {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

/// `batch * heads * seq_len^2`.
pub fn baseline_dot_count(batch: usize, heads: usize, seq_len: usize) -> u64 {
    (batch * heads * seq_len * seq_len) as u64
}

pub fn baseline_flops(batch: usize, heads: usize, seq_len: usize, head_dim: usize) -> u64 {
    baseline_dot_count(batch, heads, seq_len) * 2 * head_dim as u64
}

/// Sign projections: `2L` stacked rows, `n * r` directions each, `2d` FLOPs
/// per projection, for every (batch, head).
pub fn lsh_hash_flops(config: &LshConfig, batch: usize, heads: usize, seq_len: usize) -> u64 {
    (batch * heads * 2 * seq_len * config.num_hash_fns * config.bands * 2 * config.dim) as u64
}

/// Hashing cost plus `2d` per collided pair.
///
/// `collided_pairs` should not exceed `batch * heads * seq_len^2`.
pub fn lsh_flops_model(
    config: &LshConfig,
    batch: usize,
    heads: usize,
    seq_len: usize,
    collided_pairs: u64,
) -> u64 {
    debug_assert!(collided_pairs <= baseline_dot_count(batch, heads, seq_len));
    lsh_hash_flops(config, batch, heads, seq_len) + collided_pairs * 2 * config.dim as u64
}

/// One dot product per collided `(query, key)` cell.
pub fn count_lsh_dot_products(masks: &[QkCollisionMask]) -> u64 {
    masks.iter().map(|m| m.count() as u64).sum()
}

pub fn full_counters(batch: usize, heads: usize, seq_len: usize, head_dim: usize) -> OpCounters {
    OpCounters::new(
        baseline_dot_count(batch, heads, seq_len),
        baseline_flops(batch, heads, seq_len, head_dim),
    )
}

pub fn lsh_counters(
    config: &LshConfig,
    masks: &[QkCollisionMask],
    batch: usize,
    heads: usize,
    seq_len: usize,
) -> OpCounters {
    let dots = count_lsh_dot_products(masks);
    OpCounters::new(dots, lsh_flops_model(config, batch, heads, seq_len, dots))
}

/// Family used for execution `index` of a repeated LSH measurement: the
/// config seed offset by the execution index.
pub fn execution_family(config: &LshConfig, index: u64) -> Result<HashFamily> {
    build_hash_family(config.with_seed(config.seed.wrapping_add(index)))
}

/// Per-execution LSH counters over `samples` freshly seeded families.
#[derive(Debug, Clone, PartialEq)]
pub struct LshSamples {
    pub dot_products: Vec<u64>,
    pub flops: Vec<u64>,
}

impl LshSamples {
    pub fn mean_dot_products(&self) -> f64 {
        mean_u64(&self.dot_products)
    }

    pub fn mean_flops(&self) -> f64 {
        mean_u64(&self.flops)
    }
}

fn mean_u64(xs: &[u64]) -> f64 {
    xs.iter().sum::<u64>() as f64 / xs.len() as f64
}

pub fn sample_lsh_counts(inputs: &AttentionInputs, config: &LshConfig, samples: u64) -> Result<LshSamples> {
    if samples < 1 {
        return Err(Error::Config("samples must be >= 1".into()));
    }
    let mut out = LshSamples {
        dot_products: Vec::with_capacity(samples as usize),
        flops: Vec::with_capacity(samples as usize),
    };
    for s in 0..samples {
        let family = execution_family(config, s)?;
        let scores = lsh_scores(inputs, &family)?;
        let masks = scores.masks.as_deref().unwrap_or_default();
        let c = lsh_counters(
            config,
            masks,
            inputs.batch(),
            inputs.heads(),
            inputs.seq_len(),
        );
        out.dot_products.push(c.dot_products);
        out.flops.push(c.flops);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingStats {
    pub runs: usize,
    pub mean_s: f64,
    pub std_s: f64,
}

/// Mean and standard deviation of `runs` sequential executions of the score
/// kernel, after [`WARMUP_RUNS`] untimed ones.
pub fn time_attention(
    mode: ScoreMode,
    inputs: &AttentionInputs,
    family: Option<&HashFamily>,
    runs: usize,
) -> Result<TimingStats> {
    if runs < 1 {
        return Err(Error::Config("runs must be >= 1".into()));
    }
    let run_once = || -> Result<()> {
        match mode {
            ScoreMode::Full => {
                black_box(full_scores(black_box(inputs)));
            }
            ScoreMode::Lsh => {
                let family = family
                    .ok_or_else(|| Error::Config("lsh timing needs a hash family".into()))?;
                black_box(lsh_scores(black_box(inputs), family)?);
            }
        }
        Ok(())
    };
    for _ in 0..WARMUP_RUNS {
        run_once()?;
    }
    let mut samples = Vec::with_capacity(runs);
    for _ in 0..runs {
        let start = Instant::now();
        run_once()?;
        samples.push(start.elapsed().as_secs_f64());
    }
    let mean = samples.iter().sum::<f64>() / runs as f64;
    let var = samples.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / runs as f64;
    Ok(TimingStats {
        runs,
        mean_s: mean,
        std_s: var.sqrt(),
    })
}

/// One row of a configuration sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub bands: usize,
    pub table_size: usize,
    pub num_hash_fns: usize,
    pub batch: usize,
    pub heads: usize,
    pub seq_len: usize,
    pub head_dim: usize,
    pub seed: u64,
    pub mode: ScoreMode,
    pub kflops: f64,
    pub dot_products: f64,
    pub runs: usize,
    pub mean_time_s: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    #[test]
    fn baseline_counts() {
        assert_eq!(baseline_dot_count(1, 2, 10), 200);
        assert_eq!(baseline_dot_count(1, 1, 1), 1);
        assert_eq!(baseline_dot_count(2, 4, 16), 2048);
    }

    #[test]
    fn baseline_flop_values() {
        assert_eq!(baseline_flops(1, 2, 10, 64), 25_600);
        assert_eq!(baseline_flops(1, 1, 1, 1), 2);
        assert_eq!(baseline_flops(1, 2, 20, 64), 102_400);
        assert_eq!(full_counters(1, 2, 10, 64).kflops(), 25.6);
    }

    #[test]
    fn lsh_model_minimal() {
        let c = LshConfig::new(1, 2, 1, 1, 0).unwrap();
        assert_eq!(lsh_flops_model(&c, 1, 1, 1, 0), 4);
    }

    #[test]
    fn lsh_model_hash_term_at_reference_config() {
        let c = LshConfig::new(2, 64, 1, 64, 0).unwrap();
        assert_eq!(lsh_hash_flops(&c, 1, 2, 10), 10_240);
        assert_eq!(lsh_flops_model(&c, 1, 2, 10, 30), 10_240 + 30 * 128);
    }

    #[test]
    fn doubling_hash_fns_doubles_hash_term() {
        let c1 = LshConfig::new(3, 64, 2, 16, 0).unwrap();
        let c2 = LshConfig { num_hash_fns: 4, ..c1 };
        assert_eq!(lsh_hash_flops(&c2, 2, 3, 7), 2 * lsh_hash_flops(&c1, 2, 3, 7));
    }

    #[test]
    fn counters_add() {
        let mut a = OpCounters::new(3, 10);
        a += OpCounters::new(4, 5);
        assert_eq!(a, OpCounters::new(7, 15));
        let timed = OpCounters {
            wall_time_seconds: Some(0.5),
            ..OpCounters::default()
        };
        assert_eq!((a + timed).wall_time_seconds, Some(0.5));
    }

    #[test]
    fn dot_count_edges() {
        assert_eq!(count_lsh_dot_products(&vec![QkCollisionMask::filled(10, false); 2]), 0);
        assert_eq!(count_lsh_dot_products(&vec![QkCollisionMask::filled(10, true); 2]), 200);
    }

    #[test]
    fn timing_single_run() {
        let inp = AttentionInputs::gaussian(&mut stream_rng(0, 0), 1, 2, 10, 64);
        let t = time_attention(ScoreMode::Full, &inp, None, 1).unwrap();
        assert_eq!(t.runs, 1);
        assert!(t.mean_s >= 0.0);
        assert_eq!(t.std_s, 0.0);
        assert!(time_attention(ScoreMode::Lsh, &inp, None, 1).is_err());
        assert!(time_attention(ScoreMode::Full, &inp, None, 0).is_err());
    }

    #[test]
    fn sampling_is_deterministic() {
        let inp = AttentionInputs::gaussian(&mut stream_rng(1, 0), 1, 2, 10, 64);
        let c = LshConfig::new(2, 64, 1, 64, 5).unwrap();
        let a = sample_lsh_counts(&inp, &c, 20).unwrap();
        let b = sample_lsh_counts(&inp, &c, 20).unwrap();
        assert_eq!(a, b);
        assert!(a.dot_products.iter().all(|&d| d <= 200));
    }
}
