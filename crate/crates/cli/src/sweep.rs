//! `sweep`: one LSH record per (bands, hash functions, table size) point.
//!
//! The `kflops` column is the analytic model with a fixed number of collided
//! pairs (`--model-collisions`), so it isolates the dependence on the LSH
//! configuration. `dot_products` is the measured mean over `--samples`
//! executions.

use simhash_attn::instrument::{execution_family, sample_lsh_counts};
use simhash_attn::rng::stream_rng;
use simhash_attn::{
    baseline_dot_count, lsh_flops_model, time_attention, AttentionInputs, LshConfig, ScoreMode,
    SweepRecord,
};

use crate::{positive, to_csv, to_json, CliError, Format, SweepArgs};

pub const DEFAULT_BANDS: [usize; 4] = [1, 2, 3, 4];
pub const DEFAULT_HASH_FNS: [usize; 4] = [1, 2, 3, 4];
pub const DEFAULT_TABLE_SIZES: [usize; 3] = [16, 64, 256];

fn grid(name: &str, list: &Option<Vec<usize>>, default: &[usize]) -> Result<Vec<usize>, CliError> {
    let v = list.clone().unwrap_or_else(|| default.to_vec());
    if v.is_empty() {
        return Err(CliError::Usage(format!("--{name} is empty")));
    }
    Ok(v)
}

pub fn run(a: &SweepArgs) -> Result<Vec<SweepRecord>, CliError> {
    let bands = grid("bands-list", &a.bands_list, &DEFAULT_BANDS)?;
    let hash_fns = grid("hashfns-list", &a.hashfns_list, &DEFAULT_HASH_FNS)?;
    let sizes = grid("tablesize-list", &a.tablesize_list, &DEFAULT_TABLE_SIZES)?;
    let batch = positive("batch", a.batch.unwrap_or(1))?;
    let heads = positive("heads", a.heads.unwrap_or(2))?;
    let seq_len = positive("seq-len", a.seq_len.unwrap_or(10))?;
    let head_dim = positive("head-dim", a.head_dim.unwrap_or(64))?;
    let samples = a.samples.unwrap_or(100);
    if samples == 0 {
        return Err(CliError::Usage("--samples must be positive".into()));
    }
    let runs = positive("runs", a.runs.unwrap_or(100))?;
    let seed = a.seed.unwrap_or(0);
    let collisions = a.model_collisions.unwrap_or(0);
    if collisions > baseline_dot_count(batch, heads, seq_len) {
        return Err(CliError::Usage(
            "--model-collisions exceeds batch * heads * seq-len^2".into(),
        ));
    }

    let inputs = AttentionInputs::gaussian(&mut stream_rng(seed, 0), batch, heads, seq_len, head_dim);

    let mut points: Vec<(usize, usize, usize)> = Vec::new();
    for &n in &hash_fns {
        for &r in &bands {
            for &m in &sizes {
                points.push((n, r, m));
            }
        }
    }
    points.sort_unstable();
    points.dedup();

    let mut rows = Vec::with_capacity(points.len());
    for (n, r, m) in points {
        let config = LshConfig::new(r, m, n, head_dim, seed)?;
        let sampled = sample_lsh_counts(&inputs, &config, samples)?;
        let family = execution_family(&config, 0)?;
        let timing = time_attention(ScoreMode::Lsh, &inputs, Some(&family), runs)?;
        let flops = lsh_flops_model(&config, batch, heads, seq_len, collisions);
        rows.push(SweepRecord {
            bands: r,
            table_size: m,
            num_hash_fns: n,
            batch,
            heads,
            seq_len,
            head_dim,
            seed,
            mode: ScoreMode::Lsh,
            kflops: flops as f64 / 1000.0,
            dot_products: sampled.mean_dot_products(),
            runs,
            mean_time_s: timing.mean_s,
        });
    }
    Ok(rows)
}

pub fn render(rows: &[SweepRecord], format: Format) -> Result<String, CliError> {
    match format {
        Format::Csv => to_csv(rows),
        Format::Json => to_json(rows),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(n: Vec<usize>, r: Vec<usize>, m: Vec<usize>) -> SweepArgs {
        SweepArgs {
            hashfns_list: Some(n),
            bands_list: Some(r),
            tablesize_list: Some(m),
            samples: Some(3),
            runs: Some(1),
            ..SweepArgs::default()
        }
    }

    #[test]
    fn two_by_two_by_two() {
        let rows = run(&small(vec![2, 1], vec![1, 2], vec![64, 16])).unwrap();
        assert_eq!(rows.len(), 8);
        let keys: Vec<_> = rows.iter().map(|r| (r.num_hash_fns, r.bands, r.table_size)).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
    }

    #[test]
    fn empty_grid_rejected() {
        let a = small(vec![], vec![1], vec![16]);
        assert!(matches!(run(&a), Err(CliError::Usage(_))));
    }

    #[test]
    fn header_order() {
        let rows = run(&small(vec![1], vec![2], vec![64])).unwrap();
        let text = render(&rows, Format::Csv).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "bands,table_size,num_hash_fns,batch,heads,seq_len,head_dim,seed,mode,kflops,dot_products,runs,mean_time_s"
        );
        assert!(text.lines().nth(1).unwrap().starts_with("2,64,1,1,2,10,64,0,lsh,10.24,"));
    }
}
