//! `demo-forward`: the same token sequence through the encoder with dense and
//! LSH attention.

use serde::Serialize;
use simhash_attn::encoder::{diff_norm, random_tokens};
use simhash_attn::{encoder_forward, init_encoder, EncoderConfig, LshConfig, ScoreMode};

use crate::{positive, CliError, DemoArgs};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeSummary {
    pub dot_products: u64,
    pub kflops: f64,
    pub all_finite: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DemoSummary {
    pub seed: u64,
    pub config: EncoderConfig,
    pub tokens: Vec<usize>,
    pub output_shape: [usize; 2],
    pub full: ModeSummary,
    pub lsh: ModeSummary,
    /// Frobenius norm of the difference of the first layer's attention
    /// sub-layer outputs.
    pub attention_sublayer_diff_norm: f64,
    pub output_diff_norm: f64,
}

pub fn encoder_config(a: &DemoArgs) -> Result<EncoderConfig, CliError> {
    let d = EncoderConfig::default();
    let seed = a.seed.unwrap_or(0);
    let hidden = a.hidden_size.unwrap_or(d.hidden_size);
    let heads = positive("num-heads", a.num_heads.unwrap_or(d.num_heads))?;
    let base = d.lsh.unwrap_or(LshConfig {
        bands: 2,
        table_size: 64,
        num_hash_fns: 1,
        dim: 64,
        seed: 0,
    });
    let config = EncoderConfig {
        hidden_size: hidden,
        num_layers: a.num_layers.unwrap_or(d.num_layers),
        num_heads: heads,
        intermediate_size: a.intermediate_size.unwrap_or(d.intermediate_size),
        vocab_size: a.vocab_size.unwrap_or(d.vocab_size),
        max_seq_len: a.max_seq_len.unwrap_or(d.max_seq_len),
        attention_mode: ScoreMode::Full,
        lsh: Some(LshConfig {
            bands: a.bands.unwrap_or(base.bands),
            table_size: a.table_size.unwrap_or(base.table_size),
            num_hash_fns: a.num_hash_fns.unwrap_or(base.num_hash_fns),
            dim: hidden / heads,
            seed,
        }),
        seed,
    };
    config.validate()?;
    Ok(config)
}

pub fn run(a: &DemoArgs) -> Result<DemoSummary, CliError> {
    let config = encoder_config(a)?;
    let seq_len = positive("seq-len", a.seq_len.unwrap_or(10))?;
    if seq_len > config.max_seq_len {
        return Err(CliError::Usage(format!(
            "--seq-len {seq_len} exceeds max-seq-len {}",
            config.max_seq_len
        )));
    }
    let state = init_encoder(config.clone())?;
    let tokens = random_tokens(config.seed, 1, seq_len, config.vocab_size);
    let full = encoder_forward(&state, &tokens, Some(ScoreMode::Full))?;
    let lsh = encoder_forward(&state, &tokens, Some(ScoreMode::Lsh))?;
    let summary = |o: &simhash_attn::ForwardOutput| ModeSummary {
        dot_products: o.counters.dot_products,
        kflops: o.counters.kflops(),
        all_finite: o.hidden.iter().all(|v| v.is_finite()),
    };
    let (rows, cols) = full.hidden.dim();
    Ok(DemoSummary {
        seed: config.seed,
        tokens,
        output_shape: [rows, cols],
        full: summary(&full),
        lsh: summary(&lsh),
        attention_sublayer_diff_norm: diff_norm(&full.attention_sublayers[0], &lsh.attention_sublayers[0]),
        output_diff_norm: diff_norm(&full.hidden, &lsh.hidden),
        config,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_shape_and_counts() {
        let s = run(&DemoArgs::default()).unwrap();
        assert_eq!(s.output_shape, [10, 128]);
        assert!(s.full.all_finite && s.lsh.all_finite);
        assert_eq!(s.full.dot_products, 400);
        assert!(s.lsh.dot_products <= 400);
    }

    #[test]
    fn single_token_sublayers_agree() {
        let a = DemoArgs {
            seq_len: Some(1),
            ..DemoArgs::default()
        };
        assert_eq!(run(&a).unwrap().attention_sublayer_diff_norm, 0.0);
    }

    #[test]
    fn bad_encoder_config_rejected() {
        let a = DemoArgs {
            hidden_size: Some(127),
            ..DemoArgs::default()
        };
        assert_eq!(run(&a).unwrap_err().exit_code(), 2);
        let a = DemoArgs {
            seq_len: Some(129),
            ..DemoArgs::default()
        };
        assert!(matches!(run(&a), Err(CliError::Usage(_))));
    }
}
