//! SimHash locality-sensitive hashing over dense vectors.
//!
//! A hash family holds `n` independent hash functions. Function `i` projects a
//! vector onto `r` Gaussian directions, keeps the sign pattern, and folds the
//! signs into one of `m` buckets by summing per-band integer coefficients over
//! the positive positions, modulo `m`. Two vectors collide when any function
//! puts them in the same bucket.
//!
//! Bucket ids are 0-based (`0..m`). `sign(0)` is taken as `+1`.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use ndarray::{concatenate, Array2, ArrayView2, Axis};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::rng::{gaussian, gaussian_vec, stream_rng};

/// Stream id used when a family is built straight from `LshConfig::seed`.
const FAMILY_STREAM: u64 = 0;

/// Parameters of a hash family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LshConfig {
    /// Hyperplanes per hash function (`r`).
    pub bands: usize,
    /// Number of buckets (`m`).
    pub table_size: usize,
    /// Independent hash functions (`n`).
    pub num_hash_fns: usize,
    /// Input vector width (`d`).
    pub dim: usize,
    pub seed: u64,
}

impl LshConfig {
    pub fn new(
        bands: usize,
        table_size: usize,
        num_hash_fns: usize,
        dim: usize,
        seed: u64,
    ) -> Result<Self> {
        let config = Self {
            bands,
            table_size,
            num_hash_fns,
            dim,
            seed,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.bands < 1 {
            return Err(Error::Config("bands must be >= 1".into()));
        }
        if self.table_size < 2 {
            return Err(Error::Config("table_size must be >= 2".into()));
        }
        if self.num_hash_fns < 1 {
            return Err(Error::Config("num_hash_fns must be >= 1".into()));
        }
        if self.dim < 1 {
            return Err(Error::Config("dim must be >= 1".into()));
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Gaussian projection bank plus uniform-hash coefficients.
///
/// `projections` is laid out `[fn][band][coord]`, `coeffs` as `[fn][band]`.
/// Immutable once built; share it freely across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct HashFamily {
    config: LshConfig,
    projections: Vec<f64>,
    coeffs: Vec<u64>,
}

/// Builds the family determined by `config.seed`.
pub fn build_hash_family(config: LshConfig) -> Result<HashFamily> {
    HashFamily::build(config)
}

impl HashFamily {
    pub fn build(config: LshConfig) -> Result<Self> {
        Self::sample(config, &mut stream_rng(config.seed, FAMILY_STREAM))
    }

    /// Draws a family from an external generator; `config.seed` is ignored.
    /// Projections are drawn first, then coefficients.
    pub fn sample<R: Rng + ?Sized>(config: LshConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let n_coeffs = config.num_hash_fns * config.bands;
        let projections = gaussian_vec(rng, n_coeffs * config.dim);
        let m = config.table_size as u64;
        let coeffs = (0..n_coeffs).map(|_| rng.random_range(1..=m)).collect();
        Ok(Self {
            config,
            projections,
            coeffs,
        })
    }

    /// Assembles a family from explicit parts, checking every invariant.
    pub fn from_parts(config: LshConfig, projections: Vec<f64>, coeffs: Vec<u64>) -> Result<Self> {
        config.validate()?;
        let n_coeffs = config.num_hash_fns * config.bands;
        if projections.len() != n_coeffs * config.dim {
            return Err(Error::Shape(format!(
                "expected {} projection entries, got {}",
                n_coeffs * config.dim,
                projections.len()
            )));
        }
        if coeffs.len() != n_coeffs {
            return Err(Error::Shape(format!(
                "expected {n_coeffs} coefficients, got {}",
                coeffs.len()
            )));
        }
        if projections.iter().any(|p| !p.is_finite()) {
            return Err(Error::Numeric("projections"));
        }
        let m = config.table_size as u64;
        if let Some(c) = coeffs.iter().find(|&&c| c < 1 || c > m) {
            return Err(Error::Config(format!("coefficient {c} outside [1, {m}]")));
        }
        Ok(Self {
            config,
            projections,
            coeffs,
        })
    }

    pub fn config(&self) -> &LshConfig {
        &self.config
    }

    pub fn projections(&self) -> &[f64] {
        &self.projections
    }

    pub fn coeffs(&self) -> &[u64] {
        &self.coeffs
    }

    /// Direction `g_{fn_index, band}`.
    pub fn projection(&self, fn_index: usize, band: usize) -> &[f64] {
        let d = self.config.dim;
        let start = (fn_index * self.config.bands + band) * d;
        &self.projections[start..start + d]
    }

    pub fn fn_coeffs(&self, fn_index: usize) -> &[u64] {
        let r = self.config.bands;
        &self.coeffs[fn_index * r..(fn_index + 1) * r]
    }

    fn check_fn(&self, fn_index: usize) -> Result<()> {
        if fn_index >= self.config.num_hash_fns {
            return Err(Error::Shape(format!(
                "hash function {fn_index} out of range (n = {})",
                self.config.num_hash_fns
            )));
        }
        Ok(())
    }

    fn check_dim(&self, len: usize) -> Result<()> {
        if len != self.config.dim {
            return Err(Error::Shape(format!(
                "vector length {len} does not match family dim {}",
                self.config.dim
            )));
        }
        Ok(())
    }

    pub fn sign_signature(&self, x: &[f64], fn_index: usize) -> Result<SignSignature> {
        self.check_fn(fn_index)?;
        self.check_dim(x.len())?;
        let signs = (0..self.config.bands)
            .map(|band| {
                if dot(self.projection(fn_index, band), x) >= 0.0 {
                    1
                } else {
                    -1
                }
            })
            .collect();
        Ok(SignSignature { signs })
    }

    pub fn uniform_hash(&self, signature: &SignSignature, fn_index: usize) -> Result<usize> {
        self.check_fn(fn_index)?;
        if signature.len() != self.config.bands {
            return Err(Error::Shape(format!(
                "signature length {} does not match bands {}",
                signature.len(),
                self.config.bands
            )));
        }
        Ok(fold_signature(
            &signature.signs,
            self.fn_coeffs(fn_index),
            self.config.table_size,
        ))
    }

    /// Bucket of `x` under hash function `fn_index`.
    pub fn bucket(&self, x: &[f64], fn_index: usize) -> Result<usize> {
        let sig = self.sign_signature(x, fn_index)?;
        self.uniform_hash(&sig, fn_index)
    }

    /// Hashes every row of `vectors` under every function.
    pub fn hash_all(&self, vectors: ArrayView2<'_, f64>) -> Result<BucketTable> {
        self.check_dim(vectors.ncols())?;
        let n_vectors = vectors.nrows();
        let rows: Vec<Vec<f64>> = vectors.rows().into_iter().map(|r| r.to_vec()).collect();
        let mut assignments = Vec::with_capacity(self.config.num_hash_fns);
        let mut buckets = Vec::with_capacity(self.config.num_hash_fns);
        for fn_index in 0..self.config.num_hash_fns {
            let ids = rows
                .iter()
                .map(|row| self.bucket(row, fn_index))
                .collect::<Result<Vec<_>>>()?;
            let mut table: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
            for (v, &id) in ids.iter().enumerate() {
                table.entry(id).or_default().push(v);
            }
            assignments.push(ids);
            buckets.push(table);
        }
        Ok(BucketTable {
            n_vectors,
            assignments,
            buckets,
        })
    }

    pub fn collision_matrix(&self, vectors: ArrayView2<'_, f64>) -> Result<CollisionMatrix> {
        Ok(CollisionMatrix::from_table(&self.hash_all(vectors)?))
    }

    /// Query/key block of the collision matrix over `[Q; K]`.
    ///
    /// The whole stacked matrix is built; the query-query and key-key blocks
    /// are dropped.
    pub fn qk_collision_mask(
        &self,
        queries: ArrayView2<'_, f64>,
        keys: ArrayView2<'_, f64>,
    ) -> Result<QkCollisionMask> {
        if queries.nrows() != keys.nrows() {
            return Err(Error::Shape(format!(
                "query rows {} != key rows {}",
                queries.nrows(),
                keys.nrows()
            )));
        }
        if queries.ncols() != keys.ncols() {
            return Err(Error::Shape(format!(
                "query width {} != key width {}",
                queries.ncols(),
                keys.ncols()
            )));
        }
        let len = queries.nrows();
        let stacked = concatenate(Axis(0), &[queries, keys])
            .map_err(|e| Error::Shape(e.to_string()))?;
        let full = self.collision_matrix(stacked.view())?;
        Ok(QkCollisionMask::from_fn(len, len, |i, j| full.get(i, len + j)))
    }
}

/// `(sum of coeffs at positive positions) mod m`.
pub fn fold_signature(signs: &[i8], coeffs: &[u64], table_size: usize) -> usize {
    let total: u64 = signs
        .iter()
        .zip(coeffs)
        .filter(|(&s, _)| s > 0)
        .map(|(_, &c)| c)
        .sum();
    (total % table_size as u64) as usize
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SignSignature {
    signs: Vec<i8>,
}

impl SignSignature {
    pub fn new(signs: Vec<i8>) -> Result<Self> {
        if signs.iter().any(|&s| s != 1 && s != -1) {
            return Err(Error::Domain("signature entries must be +1 or -1".into()));
        }
        Ok(Self { signs })
    }

    pub fn signs(&self) -> &[i8] {
        &self.signs
    }

    pub fn len(&self) -> usize {
        self.signs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signs.is_empty()
    }
}

/// Per-function bucket assignments for a batch of vectors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BucketTable {
    n_vectors: usize,
    /// `assignments[fn][vector]` is a bucket id in `0..m`.
    assignments: Vec<Vec<usize>>,
    /// `buckets[fn][bucket]` lists member vectors in ascending order.
    buckets: Vec<BTreeMap<usize, Vec<usize>>>,
}

impl BucketTable {
    pub fn n_vectors(&self) -> usize {
        self.n_vectors
    }

    pub fn assignments(&self) -> &[Vec<usize>] {
        &self.assignments
    }

    pub fn buckets(&self, fn_index: usize) -> &BTreeMap<usize, Vec<usize>> {
        &self.buckets[fn_index]
    }

    pub fn bucket_of(&self, fn_index: usize, vector: usize) -> usize {
        self.assignments[fn_index][vector]
    }
}

/// Symmetric boolean matrix: `get(i, j)` iff vectors `i` and `j` share a
/// bucket under at least one hash function.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CollisionMatrix {
    n_vectors: usize,
    entries: Vec<bool>,
}

impl CollisionMatrix {
    pub fn from_table(table: &BucketTable) -> Self {
        let n = table.n_vectors;
        let mut entries = vec![false; n * n];
        for fn_buckets in &table.buckets {
            for members in fn_buckets.values() {
                for &a in members {
                    for &b in members {
                        entries[a * n + b] = true;
                    }
                }
            }
        }
        Self {
            n_vectors: n,
            entries,
        }
    }

    pub fn n_vectors(&self) -> usize {
        self.n_vectors
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.entries[i * self.n_vectors + j]
    }

    pub fn to_array(&self) -> Array2<bool> {
        Array2::from_shape_vec((self.n_vectors, self.n_vectors), self.entries.clone())
            .expect("square entries")
    }
}

/// Query-by-key collision block (rows are queries, columns keys).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QkCollisionMask {
    rows: usize,
    cols: usize,
    entries: Vec<bool>,
}

impl QkCollisionMask {
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut entries = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                entries.push(f(i, j));
            }
        }
        Self {
            rows,
            cols,
            entries,
        }
    }

    pub fn filled(len: usize, value: bool) -> Self {
        Self {
            rows: len,
            cols: len,
            entries: vec![value; len * len],
        }
    }

    pub fn from_array(a: ArrayView2<'_, bool>) -> Self {
        Self::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.entries[i * self.cols + j]
    }

    pub fn count(&self) -> usize {
        self.entries.iter().filter(|&&e| e).count()
    }

    /// Collided `(query, key)` pairs in row-major order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let cols = self.cols;
        self.entries
            .iter()
            .enumerate()
            .filter(|(_, &e)| e)
            .map(move |(idx, _)| (idx / cols, idx % cols))
    }
}

fn check_angle(theta: f64) -> Result<()> {
    if !(0.0..=PI).contains(&theta) {
        return Err(Error::Domain(format!("angle {theta} outside [0, pi]")));
    }
    Ok(())
}

/// Probability that one random hyperplane does not separate two vectors at
/// angle `theta`: `1 - theta / pi`.
pub fn single_band_agreement(theta: f64) -> Result<f64> {
    check_angle(theta)?;
    Ok(1.0 - theta / PI)
}

/// `1 - (1 - min(1, (1 - theta/pi)^r + 1/m))^n`.
///
/// The per-function term adds the chance of an accidental bucket match to
/// the chance of an identical signature, so it can exceed 1 near `theta = 0`;
/// it is clamped before complementing.
pub fn analytic_collision_probability(theta: f64, config: &LshConfig) -> Result<f64> {
    config.validate()?;
    let agree = single_band_agreement(theta)?;
    let per_fn = (agree.powi(config.bands as i32) + 1.0 / config.table_size as f64).min(1.0);
    Ok(1.0 - (1.0 - per_fn).powi(config.num_hash_fns as i32))
}

/// Monte Carlo hit count and derived statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollisionEstimate {
    pub hits: u64,
    pub trials: u64,
}

impl CollisionEstimate {
    pub fn rate(&self) -> f64 {
        self.hits as f64 / self.trials as f64
    }

    /// Binomial standard error of `rate()`.
    pub fn std_error(&self) -> f64 {
        let p = self.rate();
        (p * (1.0 - p) / self.trials as f64).sqrt()
    }
}

/// Two unit vectors in `dim` dimensions separated by exactly `theta`.
pub fn angle_pair<R: Rng + ?Sized>(rng: &mut R, dim: usize, theta: f64) -> (Vec<f64>, Vec<f64>) {
    let u = random_unit(rng, dim);
    if dim == 1 {
        // only 0 and pi are reachable on a line
        let v = if theta > PI / 2.0 { vec![-u[0]] } else { u.clone() };
        return (u, v);
    }
    let w = loop {
        let mut w = gaussian_vec(rng, dim);
        let proj = dot(&w, &u);
        w.iter_mut().zip(&u).for_each(|(wi, ui)| *wi -= proj * ui);
        let norm = dot(&w, &w).sqrt();
        if norm > 1e-9 {
            w.iter_mut().for_each(|wi| *wi /= norm);
            break w;
        }
    };
    let (sin, cos) = theta.sin_cos();
    let v = u.iter().zip(&w).map(|(ui, wi)| cos * ui + sin * wi).collect();
    (u, v)
}

fn random_unit<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Vec<f64> {
    loop {
        let mut u: Vec<f64> = (0..dim).map(|_| gaussian(rng)).collect();
        let norm = dot(&u, &u).sqrt();
        if norm > 1e-9 {
            u.iter_mut().for_each(|x| *x /= norm);
            return u;
        }
    }
}

/// Counts trials in which an exact-angle pair shares a bucket under at least
/// one function of a freshly drawn family. Trial `t` draws everything from
/// stream `t` of `seed`, so the result does not depend on thread scheduling.
pub fn monte_carlo_collisions(
    theta: f64,
    config: &LshConfig,
    trials: u64,
    seed: u64,
) -> Result<CollisionEstimate> {
    config.validate()?;
    check_angle(theta)?;
    if trials < 1 {
        return Err(Error::Config("trials must be >= 1".into()));
    }
    if config.dim < 2 && theta != 0.0 && theta != PI {
        return Err(Error::Config(
            "dim must be >= 2 for angles strictly between 0 and pi".into(),
        ));
    }
    let hits = (0..trials)
        .into_par_iter()
        .map(|t| -> Result<u64> {
            let mut rng = stream_rng(seed, t);
            let (a, b) = angle_pair(&mut rng, config.dim, theta);
            let family = HashFamily::sample(*config, &mut rng)?;
            for fn_index in 0..config.num_hash_fns {
                if family.bucket(&a, fn_index)? == family.bucket(&b, fn_index)? {
                    return Ok(1);
                }
            }
            Ok(0)
        })
        .try_reduce(|| 0, |x, y| Ok(x + y))?;
    Ok(CollisionEstimate { hits, trials })
}

pub fn monte_carlo_collision_rate(
    theta: f64,
    config: &LshConfig,
    trials: u64,
    seed: u64,
) -> Result<f64> {
    Ok(monte_carlo_collisions(theta, config, trials, seed)?.rate())
}

/// Angle between two vectors, in `[0, pi]`. Zero vectors count as angle 0.
pub fn angle_between(a: &[f64], b: &[f64]) -> f64 {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot(a, b) / (na * nb)).clamp(-1.0, 1.0).acos()
}
