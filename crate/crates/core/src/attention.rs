//! Dense and LSH-approximated attention scores.
//!
//! The LSH kernel starts from a zero score matrix per (batch, head), asks the
//! hash family which query/key pairs collide, and for each collided `(i, j)`
//! in row-major order computes `<q_i, k_j>` once and writes it to both `[i][j]`
//! and `[j][i]`. When both `(i, j)` and `(j, i)` collide the later visit wins.
//! Cells that were never written stay at zero and still take part in the
//! softmax.

use ndarray::{s, Array2, Array4, ArrayView2, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::simhash::{HashFamily, QkCollisionMask};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreMode {
    Full,
    Lsh,
}

impl std::fmt::Display for ScoreMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Full => f.write_str("full"),
            Self::Lsh => f.write_str("lsh"),
        }
    }
}

impl std::str::FromStr for ScoreMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Self::Full),
            "lsh" => Ok(Self::Lsh),
            other => Err(Error::Input(format!("unknown attention mode `{other}`"))),
        }
    }
}

/// Q, K, V laid out `batch x heads x seq_len x head_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionInputs {
    q: Array4<f64>,
    k: Array4<f64>,
    v: Array4<f64>,
}

impl AttentionInputs {
    pub fn new(q: Array4<f64>, k: Array4<f64>, v: Array4<f64>) -> Result<Self> {
        if q.shape() != k.shape() || q.shape() != v.shape() {
            return Err(Error::Shape(format!(
                "q {:?}, k {:?}, v {:?} must share a shape",
                q.shape(),
                k.shape(),
                v.shape()
            )));
        }
        for (name, t) in [("q", &q), ("k", &k), ("v", &v)] {
            if t.iter().any(|x| !x.is_finite()) {
                return Err(Error::Numeric(name));
            }
        }
        // the kernel reads rows as contiguous slices
        let q = q.as_standard_layout().into_owned();
        let k = k.as_standard_layout().into_owned();
        let v = v.as_standard_layout().into_owned();
        Ok(Self { q, k, v })
    }

    /// Independent standard-normal Q, K and V drawn from `rng`.
    pub fn gaussian<R: rand::Rng + ?Sized>(
        rng: &mut R,
        batch: usize,
        heads: usize,
        seq_len: usize,
        head_dim: usize,
    ) -> Self {
        let shape = (batch, heads, seq_len, head_dim);
        let q = crate::rng::gaussian_tensor(rng, shape);
        let k = crate::rng::gaussian_tensor(rng, shape);
        let v = crate::rng::gaussian_tensor(rng, shape);
        Self { q, k, v }
    }

    pub fn q(&self) -> &Array4<f64> {
        &self.q
    }

    pub fn k(&self) -> &Array4<f64> {
        &self.k
    }

    pub fn v(&self) -> &Array4<f64> {
        &self.v
    }

    pub fn batch(&self) -> usize {
        self.q.shape()[0]
    }

    pub fn heads(&self) -> usize {
        self.q.shape()[1]
    }

    pub fn seq_len(&self) -> usize {
        self.q.shape()[2]
    }

    pub fn head_dim(&self) -> usize {
        self.q.shape()[3]
    }

    pub fn q_head(&self, b: usize, h: usize) -> ArrayView2<'_, f64> {
        self.q.slice(s![b, h, .., ..])
    }

    pub fn k_head(&self, b: usize, h: usize) -> ArrayView2<'_, f64> {
        self.k.slice(s![b, h, .., ..])
    }

    pub fn v_head(&self, b: usize, h: usize) -> ArrayView2<'_, f64> {
        self.v.slice(s![b, h, .., ..])
    }
}

/// Per-head score matrices, `batch x heads x seq_len x seq_len`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    pub scores: Array4<f64>,
    pub mode: ScoreMode,
    /// One mask per (batch, head), flattened `b * heads + h`. `None` for full mode.
    pub masks: Option<Vec<QkCollisionMask>>,
}

impl ScoreMatrix {
    pub fn head(&self, b: usize, h: usize) -> ArrayView2<'_, f64> {
        self.scores.slice(s![b, h, .., ..])
    }

    pub fn mask(&self, b: usize, h: usize) -> Option<&QkCollisionMask> {
        let heads = self.scores.shape()[1];
        self.masks.as_ref().map(|m| &m[b * heads + h])
    }
}

/// `Q K^T` for every (batch, head).
pub fn full_scores(inputs: &AttentionInputs) -> ScoreMatrix {
    let (b, h, l) = (inputs.batch(), inputs.heads(), inputs.seq_len());
    let mut scores = Array4::zeros((b, h, l, l));
    for bi in 0..b {
        for hi in 0..h {
            let k = inputs.k_head(bi, hi);
            scores
                .slice_mut(s![bi, hi, .., ..])
                .assign(&inputs.q_head(bi, hi).dot(&k.t()));
        }
    }
    ScoreMatrix {
        scores,
        mode: ScoreMode::Full,
        masks: None,
    }
}

/// Collision masks for every (batch, head) under one shared family.
pub fn collision_masks(inputs: &AttentionInputs, family: &HashFamily) -> Result<Vec<QkCollisionMask>> {
    if inputs.head_dim() != family.config().dim {
        return Err(Error::Config(format!(
            "head_dim {} does not match hash family dim {}",
            inputs.head_dim(),
            family.config().dim
        )));
    }
    let mut masks = Vec::with_capacity(inputs.batch() * inputs.heads());
    for b in 0..inputs.batch() {
        for h in 0..inputs.heads() {
            masks.push(family.qk_collision_mask(inputs.q_head(b, h), inputs.k_head(b, h))?);
        }
    }
    Ok(masks)
}

pub fn lsh_scores(inputs: &AttentionInputs, family: &HashFamily) -> Result<ScoreMatrix> {
    if inputs.seq_len() < 1 {
        return Err(Error::Shape("seq_len must be >= 1".into()));
    }
    let masks = collision_masks(inputs, family)?;
    lsh_scores_with_masks(inputs, masks)
}

/// Runs the LSH score kernel against precomputed masks.
pub fn lsh_scores_with_masks(
    inputs: &AttentionInputs,
    masks: Vec<QkCollisionMask>,
) -> Result<ScoreMatrix> {
    check_masks(inputs, &masks)?;
    let (b, h, l) = (inputs.batch(), inputs.heads(), inputs.seq_len());
    let mut scores = Array4::zeros((b, h, l, l));
    for bi in 0..b {
        for hi in 0..h {
            let head = collided_scores(
                inputs.q_head(bi, hi),
                inputs.k_head(bi, hi),
                &masks[bi * h + hi],
            );
            scores.slice_mut(s![bi, hi, .., ..]).assign(&head);
        }
    }
    Ok(ScoreMatrix {
        scores,
        mode: ScoreMode::Lsh,
        masks: Some(masks),
    })
}

fn check_masks(inputs: &AttentionInputs, masks: &[QkCollisionMask]) -> Result<()> {
    let units = inputs.batch() * inputs.heads();
    if masks.len() != units {
        return Err(Error::Shape(format!(
            "expected {units} masks, got {}",
            masks.len()
        )));
    }
    let l = inputs.seq_len();
    if let Some(m) = masks.iter().find(|m| m.rows() != l || m.cols() != l) {
        return Err(Error::Shape(format!(
            "mask {}x{} does not match seq_len {l}",
            m.rows(),
            m.cols()
        )));
    }
    Ok(())
}

/// One head of the kernel: zero matrix, then symmetric writes per collision.
fn collided_scores(q: ArrayView2<'_, f64>, k: ArrayView2<'_, f64>, mask: &QkCollisionMask) -> Array2<f64> {
    let l = q.nrows();
    let mut a = Array2::zeros((l, l));
    for (i, j) in mask.pairs() {
        let score = dot(
            q.row(i).as_slice().expect("contiguous row"),
            k.row(j).as_slice().expect("contiguous row"),
        );
        a[[i, j]] = score;
        a[[j, i]] = score;
    }
    a
}

/// For each score cell, the `(query, key)` pair whose dot product it finally
/// holds under the row-major last-write rule.
pub fn write_sources(mask: &QkCollisionMask) -> Array2<Option<(usize, usize)>> {
    let mut src = Array2::from_elem((mask.rows(), mask.cols()), None);
    for (i, j) in mask.pairs() {
        src[[i, j]] = Some((i, j));
        src[[j, i]] = Some((i, j));
    }
    src
}

/// Row-wise numerically stable softmax.
pub fn softmax_rows(x: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut out = x.to_owned();
    for mut row in out.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

/// `softmax(S / sqrt(head_dim)) V` per (batch, head).
pub fn attention_output(scores: &ScoreMatrix, v: &Array4<f64>, head_dim: usize) -> Result<Array4<f64>> {
    let s_shape = scores.scores.shape();
    let v_shape = v.shape();
    if s_shape[0] != v_shape[0]
        || s_shape[1] != v_shape[1]
        || s_shape[2] != v_shape[2]
        || s_shape[3] != v_shape[2]
    {
        return Err(Error::Shape(format!(
            "scores {s_shape:?} incompatible with values {v_shape:?}"
        )));
    }
    if head_dim == 0 {
        return Err(Error::Shape("head_dim must be >= 1".into()));
    }
    if scores.scores.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("scores"));
    }
    let scale = (head_dim as f64).sqrt().recip();
    let mut out = Array4::zeros(v.raw_dim());
    for b in 0..v_shape[0] {
        for h in 0..v_shape[1] {
            let weights = softmax_rows((&scores.head(b, h) * scale).view());
            out.slice_mut(s![b, h, .., ..])
                .assign(&weights.dot(&v.slice(s![b, h, .., ..])));
        }
    }
    Ok(out)
}

/// Gradients of `sum(upstream * lsh_scores)` with respect to Q and K.
///
/// The masks are constants; each score cell is a bilinear function of one
/// query row and one key row, so the gradient is exact.
pub fn lsh_scores_grad(
    inputs: &AttentionInputs,
    masks: &[QkCollisionMask],
    upstream: &Array4<f64>,
) -> Result<(Array4<f64>, Array4<f64>)> {
    check_masks(inputs, masks)?;
    let (b, h, l) = (inputs.batch(), inputs.heads(), inputs.seq_len());
    if upstream.shape() != [b, h, l, l] {
        return Err(Error::Shape(format!(
            "upstream {:?} must be {:?}",
            upstream.shape(),
            [b, h, l, l]
        )));
    }
    let mut dq = Array4::zeros(inputs.q.raw_dim());
    let mut dk = Array4::zeros(inputs.k.raw_dim());
    for bi in 0..b {
        for hi in 0..h {
            let q = inputs.q_head(bi, hi);
            let k = inputs.k_head(bi, hi);
            let up = upstream.slice(s![bi, hi, .., ..]);
            let src = write_sources(&masks[bi * h + hi]);
            let mut dq_head = dq.slice_mut(s![bi, hi, .., ..]);
            let mut dk_head = dk.slice_mut(s![bi, hi, .., ..]);
            Zip::indexed(&src).for_each(|cell, source| {
                if let Some((qi, kj)) = *source {
                    let g = up[cell];
                    dq_head.row_mut(qi).scaled_add(g, &k.row(kj));
                    dk_head.row_mut(kj).scaled_add(g, &q.row(qi));
                }
            });
        }
    }
    Ok((dq, dk))
}

/// Number of query/key dot products the LSH kernel evaluates for `masks`.
pub fn mask_population(masks: &[QkCollisionMask]) -> u64 {
    masks.iter().map(|m| m.count() as u64).sum()
}
