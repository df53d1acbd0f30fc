//! Small post-layer-norm transformer encoder with a swappable score kernel.
//!
//! Layout per layer: multi-head self-attention, residual add and layer norm,
//! GELU feed-forward, residual add and layer norm. Token plus learned
//! positional embeddings feed the first layer. No task heads, no dropout.

use ndarray::{Array1, Array2, Array4, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::attention::{
    attention_output, full_scores, lsh_scores, lsh_scores_with_masks, AttentionInputs, ScoreMode,
};
use crate::error::{Error, Result};
use crate::instrument::{full_counters, lsh_counters, OpCounters};
use crate::rng::{gaussian, stream_rng};
use crate::simhash::{build_hash_family, HashFamily, LshConfig, QkCollisionMask};

pub const INIT_STD: f64 = 0.02;
pub const LAYER_NORM_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    pub hidden_size: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub intermediate_size: usize,
    pub vocab_size: usize,
    pub max_seq_len: usize,
    pub attention_mode: ScoreMode,
    pub lsh: Option<LshConfig>,
    pub seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            hidden_size: 128,
            num_layers: 2,
            num_heads: 2,
            intermediate_size: 512,
            vocab_size: 1024,
            max_seq_len: 128,
            attention_mode: ScoreMode::Full,
            lsh: Some(LshConfig {
                bands: 2,
                table_size: 64,
                num_hash_fns: 1,
                dim: 64,
                seed: 0,
            }),
            seed: 0,
        }
    }
}

impl EncoderConfig {
    pub fn head_dim(&self) -> usize {
        self.hidden_size / self.num_heads
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("hidden_size", self.hidden_size),
            ("num_layers", self.num_layers),
            ("num_heads", self.num_heads),
            ("intermediate_size", self.intermediate_size),
            ("vocab_size", self.vocab_size),
            ("max_seq_len", self.max_seq_len),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !self.hidden_size.is_multiple_of(self.num_heads) {
            return Err(Error::Config(format!(
                "hidden_size {} not divisible by num_heads {}",
                self.hidden_size, self.num_heads
            )));
        }
        if let Some(lsh) = &self.lsh {
            lsh.validate()?;
            if lsh.dim != self.head_dim() {
                return Err(Error::Config(format!(
                    "lsh dim {} must equal head_dim {}",
                    lsh.dim,
                    self.head_dim()
                )));
            }
        } else if self.attention_mode == ScoreMode::Lsh {
            return Err(Error::Config("lsh attention needs an lsh config".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights {
    pub w_query: Array2<f64>,
    pub b_query: Array1<f64>,
    pub w_key: Array2<f64>,
    pub b_key: Array1<f64>,
    pub w_value: Array2<f64>,
    pub b_value: Array1<f64>,
    pub w_out: Array2<f64>,
    pub b_out: Array1<f64>,
    pub attn_norm_gamma: Array1<f64>,
    pub attn_norm_beta: Array1<f64>,
    pub w_ff_in: Array2<f64>,
    pub b_ff_in: Array1<f64>,
    pub w_ff_out: Array2<f64>,
    pub b_ff_out: Array1<f64>,
    pub ff_norm_gamma: Array1<f64>,
    pub ff_norm_beta: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderState {
    config: EncoderConfig,
    pub token_embeddings: Array2<f64>,
    pub position_embeddings: Array2<f64>,
    pub layers: Vec<LayerWeights>,
    family: Option<HashFamily>,
}

fn normal_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| INIT_STD * gaussian(rng))
}

pub fn init_encoder(config: EncoderConfig) -> Result<EncoderState> {
    config.validate()?;
    let mut rng = stream_rng(config.seed, 0);
    let h = config.hidden_size;
    let ff = config.intermediate_size;
    let token_embeddings = normal_matrix(&mut rng, config.vocab_size, h);
    let position_embeddings = normal_matrix(&mut rng, config.max_seq_len, h);
    let layers = (0..config.num_layers)
        .map(|_| LayerWeights {
            w_query: normal_matrix(&mut rng, h, h),
            b_query: Array1::zeros(h),
            w_key: normal_matrix(&mut rng, h, h),
            b_key: Array1::zeros(h),
            w_value: normal_matrix(&mut rng, h, h),
            b_value: Array1::zeros(h),
            w_out: normal_matrix(&mut rng, h, h),
            b_out: Array1::zeros(h),
            attn_norm_gamma: Array1::ones(h),
            attn_norm_beta: Array1::zeros(h),
            w_ff_in: normal_matrix(&mut rng, h, ff),
            b_ff_in: Array1::zeros(ff),
            w_ff_out: normal_matrix(&mut rng, ff, h),
            b_ff_out: Array1::zeros(h),
            ff_norm_gamma: Array1::ones(h),
            ff_norm_beta: Array1::zeros(h),
        })
        .collect();
    let family = config.lsh.map(build_hash_family).transpose()?;
    Ok(EncoderState {
        config,
        token_embeddings,
        position_embeddings,
        layers,
        family,
    })
}

impl EncoderState {
    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn family(&self) -> Option<&HashFamily> {
        self.family.as_ref()
    }
}

/// How attention scores are produced inside the encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttentionKernel {
    Full,
    Lsh,
    /// LSH write rule with every query/key pair treated as collided.
    ForcedCollisions,
}

impl From<ScoreMode> for AttentionKernel {
    fn from(mode: ScoreMode) -> Self {
        match mode {
            ScoreMode::Full => Self::Full,
            ScoreMode::Lsh => Self::Lsh,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    /// Final hidden states, `seq_len x hidden`.
    pub hidden: Array2<f64>,
    pub counters: OpCounters,
    /// Attention sub-layer output (after the output projection, before the
    /// residual) for each layer.
    pub attention_sublayers: Vec<Array2<f64>>,
}

/// Forward pass using the configured mode, or `mode` when given.
pub fn encoder_forward(
    state: &EncoderState,
    tokens: &[usize],
    mode: Option<ScoreMode>,
) -> Result<ForwardOutput> {
    let kernel = mode.unwrap_or(state.config.attention_mode).into();
    encoder_forward_with(state, tokens, kernel)
}

pub fn encoder_forward_with(
    state: &EncoderState,
    tokens: &[usize],
    kernel: AttentionKernel,
) -> Result<ForwardOutput> {
    let cfg = &state.config;
    if tokens.is_empty() {
        return Err(Error::Input("token sequence is empty".into()));
    }
    if tokens.len() > cfg.max_seq_len {
        return Err(Error::Input(format!(
            "sequence length {} exceeds max_seq_len {}",
            tokens.len(),
            cfg.max_seq_len
        )));
    }
    if let Some(&t) = tokens.iter().find(|&&t| t >= cfg.vocab_size) {
        return Err(Error::Input(format!(
            "token id {t} outside vocabulary of {}",
            cfg.vocab_size
        )));
    }
    let len = tokens.len();
    let mut x = Array2::zeros((len, cfg.hidden_size));
    for (pos, &tok) in tokens.iter().enumerate() {
        let row = &state.token_embeddings.row(tok) + &state.position_embeddings.row(pos);
        x.row_mut(pos).assign(&row);
    }
    let mut counters = OpCounters::default();
    let mut attention_sublayers = Vec::with_capacity(state.layers.len());
    for layer in &state.layers {
        let (attn, c) = self_attention(state, layer, x.view(), kernel)?;
        counters += c;
        x = layer_norm(
            (&x + &attn).view(),
            layer.attn_norm_gamma.view(),
            layer.attn_norm_beta.view(),
        );
        attention_sublayers.push(attn);
        let mut inner = affine(x.view(), &layer.w_ff_in, &layer.b_ff_in);
        inner.mapv_inplace(gelu);
        let ff = affine(inner.view(), &layer.w_ff_out, &layer.b_ff_out);
        x = layer_norm(
            (&x + &ff).view(),
            layer.ff_norm_gamma.view(),
            layer.ff_norm_beta.view(),
        );
    }
    Ok(ForwardOutput {
        hidden: x,
        counters,
        attention_sublayers,
    })
}

fn affine(x: ArrayView2<'_, f64>, w: &Array2<f64>, b: &Array1<f64>) -> Array2<f64> {
    x.dot(w) + b
}

/// `seq x hidden` to `1 x heads x seq x head_dim`.
fn split_heads(x: &Array2<f64>, heads: usize) -> Array4<f64> {
    let (len, hidden) = x.dim();
    let hd = hidden / heads;
    Array4::from_shape_fn((1, heads, len, hd), |(_, h, i, c)| x[[i, h * hd + c]])
}

fn merge_heads(t: &Array4<f64>) -> Array2<f64> {
    let (_, heads, len, hd) = t.dim();
    Array2::from_shape_fn((len, heads * hd), |(i, col)| t[[0, col / hd, i, col % hd]])
}

fn self_attention(
    state: &EncoderState,
    layer: &LayerWeights,
    x: ArrayView2<'_, f64>,
    kernel: AttentionKernel,
) -> Result<(Array2<f64>, OpCounters)> {
    let cfg = &state.config;
    let heads = cfg.num_heads;
    let hd = cfg.head_dim();
    let len = x.nrows();
    let q = affine(x, &layer.w_query, &layer.b_query);
    let k = affine(x, &layer.w_key, &layer.b_key);
    let v = affine(x, &layer.w_value, &layer.b_value);
    let inputs = AttentionInputs::new(
        split_heads(&q, heads),
        split_heads(&k, heads),
        split_heads(&v, heads),
    )?;
    let (scores, counters) = match kernel {
        AttentionKernel::Full => (full_scores(&inputs), full_counters(1, heads, len, hd)),
        AttentionKernel::Lsh => {
            let family = state
                .family
                .as_ref()
                .ok_or_else(|| Error::Config("lsh attention needs an lsh config".into()))?;
            let scores = lsh_scores(&inputs, family)?;
            let c = lsh_counters(
                family.config(),
                scores.masks.as_deref().unwrap_or_default(),
                1,
                heads,
                len,
            );
            (scores, c)
        }
        AttentionKernel::ForcedCollisions => {
            let masks = vec![QkCollisionMask::filled(len, true); heads];
            let scores = lsh_scores_with_masks(&inputs, masks)?;
            // every pair is visited once, same count as dense attention
            (scores, full_counters(1, heads, len, hd))
        }
    };
    let ctx = attention_output(&scores, inputs.v(), hd)?;
    let out = affine(merge_heads(&ctx).view(), &layer.w_out, &layer.b_out);
    Ok((out, counters))
}

/// Zero-mean, unit-variance rows (population variance), before the affine.
pub fn normalize_rows(x: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut out = x.to_owned();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let mean = row.mean().unwrap_or(0.0);
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / row.len() as f64;
        let inv = (var + LAYER_NORM_EPS).sqrt().recip();
        row.mapv_inplace(|v| (v - mean) * inv);
    }
    out
}

pub fn layer_norm(x: ArrayView2<'_, f64>, gamma: ArrayView1<'_, f64>, beta: ArrayView1<'_, f64>) -> Array2<f64> {
    normalize_rows(x) * gamma + beta
}

/// Exact (erf) GELU.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

/// Uniform random token ids drawn from stream `stream` of `seed`.
pub fn random_tokens(seed: u64, stream: u64, len: usize, vocab_size: usize) -> Vec<usize> {
    let mut rng = stream_rng(seed, stream);
    (0..len).map(|_| rng.random_range(0..vocab_size)).collect()
}

/// Frobenius norm of `a - b`.
pub fn diff_norm(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    (a - b).iter().map(|d| d * d).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn lsh_config() -> EncoderConfig {
        EncoderConfig {
            attention_mode: ScoreMode::Lsh,
            seed: 3,
            ..EncoderConfig::default()
        }
    }

    #[test]
    fn default_head_dim() {
        let cfg = EncoderConfig::default();
        assert_eq!(cfg.head_dim(), 64);
        cfg.validate().unwrap();
    }

    #[test]
    fn indivisible_hidden_rejected() {
        let cfg = EncoderConfig {
            hidden_size: 127,
            lsh: None,
            ..EncoderConfig::default()
        };
        assert!(matches!(init_encoder(cfg), Err(Error::Config(_))));
    }

    #[test]
    fn lsh_dim_must_match_head_dim() {
        let mut cfg = lsh_config();
        cfg.lsh.as_mut().unwrap().dim = 32;
        assert!(init_encoder(cfg).is_err());
        let cfg = EncoderConfig {
            lsh: None,
            ..lsh_config()
        };
        assert!(init_encoder(cfg).is_err());
    }

    #[test]
    fn init_is_deterministic() {
        let a = init_encoder(lsh_config()).unwrap();
        let b = init_encoder(lsh_config()).unwrap();
        assert_eq!(a, b);
        let mut other = lsh_config();
        other.seed = 4;
        assert_ne!(a.token_embeddings, init_encoder(other).unwrap().token_embeddings);
    }

    #[test]
    fn init_scale_is_small() {
        let s = init_encoder(EncoderConfig::default()).unwrap();
        let w = &s.layers[0].w_query;
        let var = w.iter().map(|v| v * v).sum::<f64>() / w.len() as f64;
        assert!((var.sqrt() - INIT_STD).abs() < 0.002, "std {}", var.sqrt());
        assert!(s.layers[0].b_ff_in.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn forward_shape_both_modes() {
        let state = init_encoder(lsh_config()).unwrap();
        let tokens = random_tokens(1, 0, 10, 1024);
        for mode in [ScoreMode::Full, ScoreMode::Lsh] {
            let out = encoder_forward(&state, &tokens, Some(mode)).unwrap();
            assert_eq!(out.hidden.dim(), (10, 128));
            assert!(out.hidden.iter().all(|v| v.is_finite()));
            assert_eq!(out.attention_sublayers.len(), 2);
        }
    }

    #[test]
    fn full_mode_counters() {
        let state = init_encoder(EncoderConfig::default()).unwrap();
        let out = encoder_forward(&state, &random_tokens(1, 0, 10, 1024), None).unwrap();
        assert_eq!(out.counters.dot_products, 2 * 200);
        assert_eq!(out.counters.flops, 2 * 25_600);
    }

    #[test]
    fn bad_tokens_rejected() {
        let state = init_encoder(EncoderConfig::default()).unwrap();
        assert!(matches!(
            encoder_forward(&state, &[1, 1024], None),
            Err(Error::Input(_))
        ));
        assert!(matches!(encoder_forward(&state, &[], None), Err(Error::Input(_))));
        assert!(matches!(
            encoder_forward(&state, &vec![0; 129], None),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn lsh_override_without_family_fails() {
        let cfg = EncoderConfig {
            lsh: None,
            ..EncoderConfig::default()
        };
        let state = init_encoder(cfg).unwrap();
        assert!(encoder_forward(&state, &[1, 2], Some(ScoreMode::Lsh)).is_err());
    }

    #[test]
    fn layer_norm_rows_standardized() {
        let x = crate::rng::gaussian_matrix(&mut stream_rng(2, 0), 5, 128) * 3.0 + 7.0;
        let y = normalize_rows(x.view());
        for row in y.rows() {
            let mean = row.mean().unwrap();
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 128.0;
            assert!(mean.abs() <= 1e-5);
            assert!((var - 1.0).abs() <= 1e-3);
        }
    }

    #[test]
    fn gelu_reference_points() {
        assert_eq!(gelu(0.0), 0.0);
        assert_abs_diff_eq!(gelu(1.0), 0.841_344_746_068_542_9, epsilon = 1e-12);
        assert_abs_diff_eq!(gelu(-1.0), -0.158_655_253_931_457_05, epsilon = 1e-12);
    }

    #[test]
    fn heads_round_trip() {
        let x = crate::rng::gaussian_matrix(&mut stream_rng(5, 0), 3, 8);
        assert_eq!(merge_heads(&split_heads(&x, 2)), x);
    }
}
