//! SimHash LSH approximation of transformer self-attention.
//!
//! - [`simhash`]: hash family, bucket tables, collision matrices and the
//!   collision-probability model with its Monte Carlo check.
//! - [`attention`]: dense and LSH score kernels, softmax aggregation, and the
//!   fixed-mask gradient.
//! - [`encoder`]: a small encoder that runs either kernel end to end.
//! - [`instrument`]: dot-product counts, FLOP model, timing, sweep records.

pub mod attention;
pub mod encoder;
mod error;
pub mod instrument;
mod linalg;
pub mod rng;
pub mod simhash;

pub use attention::{
    attention_output, full_scores, lsh_scores, lsh_scores_grad, lsh_scores_with_masks,
    AttentionInputs, ScoreMatrix, ScoreMode,
};
pub use encoder::{encoder_forward, init_encoder, EncoderConfig, EncoderState, ForwardOutput};
pub use error::{Error, Result};
pub use instrument::{
    baseline_dot_count, baseline_flops, count_lsh_dot_products, lsh_flops_model, time_attention,
    OpCounters, SweepRecord,
};
pub use linalg::dot;
pub use simhash::{
    analytic_collision_probability, build_hash_family, monte_carlo_collision_rate,
    single_band_agreement, BucketTable, CollisionMatrix, HashFamily, LshConfig, QkCollisionMask,
    SignSignature,
};
