use std::f64::consts::PI;

use ndarray::{concatenate, Array2, Axis};
use proptest::prelude::*;
use simhash_attn::rng::{gaussian_matrix, stream_rng};
use simhash_attn::simhash::monte_carlo_collisions;
use simhash_attn::{
    analytic_collision_probability, build_hash_family, HashFamily, LshConfig,
};

// Oracle: recompute buckets straight from the raw projection and coefficient
// buffers with explicit index arithmetic.
fn oracle_bucket(fam: &HashFamily, fn_index: usize, x: &[f64]) -> usize {
    let c = fam.config();
    let mut total = 0u64;
    for band in 0..c.bands {
        let mut ip = 0.0;
        for k in 0..c.dim {
            ip += fam.projections()[(fn_index * c.bands + band) * c.dim + k] * x[k];
        }
        if ip >= 0.0 {
            total += fam.coeffs()[fn_index * c.bands + band];
        }
    }
    (total % c.table_size as u64) as usize
}

fn oracle_table(fam: &HashFamily, v: &Array2<f64>) -> Vec<Vec<usize>> {
    (0..fam.config().num_hash_fns)
        .map(|i| {
            v.rows()
                .into_iter()
                .map(|r| oracle_bucket(fam, i, &r.to_vec()))
                .collect()
        })
        .collect()
}

fn oracle_collisions(fam: &HashFamily, v: &Array2<f64>) -> Vec<Vec<bool>> {
    let t = oracle_table(fam, v);
    let n = v.nrows();
    (0..n)
        .map(|a| (0..n).map(|b| t.iter().any(|row| row[a] == row[b])).collect())
        .collect()
}

fn cfg(r: usize, m: usize, n: usize, d: usize, seed: u64) -> LshConfig {
    LshConfig::new(r, m, n, d, seed).unwrap()
}

#[test]
fn signature_of_first_basis_vector() {
    let fam = build_hash_family(cfg(2, 64, 1, 4, 42)).unwrap();
    let x = [1.0, 0.0, 0.0, 0.0];
    // <g, e_1> is the first coordinate of g
    let want: Vec<i8> = (0..2)
        .map(|j| if fam.projection(0, j)[0] >= 0.0 { 1 } else { -1 })
        .collect();
    assert_eq!(fam.sign_signature(&x, 0).unwrap().signs(), want.as_slice());
    assert_eq!(want, vec![1, -1]);
}

#[test]
fn hash_table_small_fixed_seed() {
    let fam = build_hash_family(cfg(2, 8, 2, 4, 42)).unwrap();
    let v = gaussian_matrix(&mut stream_rng(42, 1), 4, 4);
    let table = fam.hash_all(v.view()).unwrap();
    let want = oracle_table(&fam, &v);
    assert_eq!(table.assignments(), want.as_slice());
    assert_eq!(want, vec![vec![7, 7, 7, 5], vec![4, 0, 0, 5]]);
    for i in 0..2 {
        let mut seen = vec![0; 4];
        for (&bucket, members) in table.buckets(i) {
            assert!(bucket < 8);
            for &m in members {
                assert_eq!(table.bucket_of(i, m), bucket);
                seen[m] += 1;
            }
        }
        assert!(seen.iter().all(|&c| c == 1));
    }
}

#[test]
fn collision_matrix_fixed_seed() {
    let fam = build_hash_family(cfg(2, 8, 2, 4, 42)).unwrap();
    let v = gaussian_matrix(&mut stream_rng(42, 2), 6, 4);
    let got = fam.collision_matrix(v.view()).unwrap();
    let want = oracle_collisions(&fam, &v);
    for a in 0..6 {
        for b in 0..6 {
            assert_eq!(got.get(a, b), want[a][b], "({a},{b})");
        }
    }
    let count: usize = want.iter().flatten().filter(|&&e| e).count();
    assert_eq!(count, 12);
}

#[test]
fn qk_mask_reference_config() {
    let fam = build_hash_family(cfg(2, 64, 1, 64, 42)).unwrap();
    let mut rng = stream_rng(42, 3);
    let q = gaussian_matrix(&mut rng, 10, 64);
    let k = gaussian_matrix(&mut rng, 10, 64);
    let mask = fam.qk_collision_mask(q.view(), k.view()).unwrap();
    let stacked = concatenate(Axis(0), &[q.view(), k.view()]).unwrap();
    let full = oracle_collisions(&fam, &stacked);
    for i in 0..10 {
        for j in 0..10 {
            assert_eq!(mask.get(i, j), full[i][10 + j]);
        }
    }
    assert_eq!(mask.count(), 27);
}

#[test]
fn single_pair_mask() {
    let fam = build_hash_family(cfg(3, 16, 2, 5, 9)).unwrap();
    let mut rng = stream_rng(9, 1);
    let q = gaussian_matrix(&mut rng, 1, 5);
    let k = gaussian_matrix(&mut rng, 1, 5);
    let mask = fam.qk_collision_mask(q.view(), k.view()).unwrap();
    let expect = (0..2).any(|i| {
        oracle_bucket(&fam, i, &q.row(0).to_vec()) == oracle_bucket(&fam, i, &k.row(0).to_vec())
    });
    assert_eq!((mask.rows(), mask.cols()), (1, 1));
    assert_eq!(mask.get(0, 0), expect);
}

fn small_config() -> impl Strategy<Value = LshConfig> {
    (1usize..5, 2usize..40, 1usize..4, 1usize..7, any::<u64>())
        .prop_map(|(r, m, n, d, seed)| cfg(r, m, n, d, seed))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn collision_matrix_symmetric_with_true_diagonal(c in small_config(), rows in 1usize..12, s in any::<u64>()) {
        let fam = build_hash_family(c).unwrap();
        let v = gaussian_matrix(&mut stream_rng(s, 0), rows, c.dim);
        let m = fam.collision_matrix(v.view()).unwrap();
        for i in 0..rows {
            prop_assert!(m.get(i, i));
            for j in 0..rows {
                prop_assert_eq!(m.get(i, j), m.get(j, i));
            }
        }
    }

    #[test]
    fn quadrant_matches_stacked_matrix(c in small_config(), len in 1usize..8, s in any::<u64>()) {
        let fam = build_hash_family(c).unwrap();
        let mut rng = stream_rng(s, 0);
        let q = gaussian_matrix(&mut rng, len, c.dim);
        let k = gaussian_matrix(&mut rng, len, c.dim);
        let mask = fam.qk_collision_mask(q.view(), k.view()).unwrap();
        let stacked = concatenate(Axis(0), &[q.view(), k.view()]).unwrap();
        let full = fam.collision_matrix(stacked.view()).unwrap();
        for i in 0..len {
            for j in 0..len {
                prop_assert_eq!(mask.get(i, j), full.get(i, len + j));
            }
        }
    }

    #[test]
    fn row_permutation_permutes_collisions(c in small_config(), rows in 1usize..10, s in any::<u64>()) {
        let fam = build_hash_family(c).unwrap();
        let v = gaussian_matrix(&mut stream_rng(s, 0), rows, c.dim);
        // rotate rows by one
        let perm: Vec<usize> = (0..rows).map(|i| (i + 1) % rows).collect();
        let pv = Array2::from_shape_fn((rows, c.dim), |(i, k)| v[[perm[i], k]]);
        let m = fam.collision_matrix(v.view()).unwrap();
        let pm = fam.collision_matrix(pv.view()).unwrap();
        for i in 0..rows {
            for j in 0..rows {
                prop_assert_eq!(pm.get(i, j), m.get(perm[i], perm[j]));
            }
        }
    }

    #[test]
    fn positive_scaling_keeps_signature(c in small_config(), scale in 1e-3f64..1e3, s in any::<u64>()) {
        let fam = build_hash_family(c).unwrap();
        let x = gaussian_matrix(&mut stream_rng(s, 0), 1, c.dim).row(0).to_vec();
        let y: Vec<f64> = x.iter().map(|v| v * scale).collect();
        for i in 0..c.num_hash_fns {
            prop_assert_eq!(fam.sign_signature(&x, i).unwrap(), fam.sign_signature(&y, i).unwrap());
        }
    }

    #[test]
    fn hashing_is_a_function_of_the_vector(c in small_config(), s in any::<u64>()) {
        let fam = build_hash_family(c).unwrap();
        let x = gaussian_matrix(&mut stream_rng(s, 0), 1, c.dim).row(0).to_vec();
        for i in 0..c.num_hash_fns {
            prop_assert_eq!(fam.bucket(&x, i).unwrap(), fam.bucket(&x.clone(), i).unwrap());
            prop_assert_eq!(fam.bucket(&x, i).unwrap(), oracle_bucket(&fam, i, &x));
        }
    }
}

#[test]
fn empirical_rate_non_increasing_in_angle() {
    let c = cfg(2, 64, 2, 16, 0);
    let trials = 10_000;
    let grid = [0.1, 0.5, 1.0, 1.5, 2.0, 2.5];
    let est: Vec<_> = grid
        .iter()
        .map(|&t| monte_carlo_collisions(t, &c, trials, 77).unwrap())
        .collect();
    for w in est.windows(2) {
        let slack = 3.0 * (w[0].std_error().powi(2) + w[1].std_error().powi(2)).sqrt();
        assert!(
            w[1].rate() <= w[0].rate() + slack,
            "{} -> {}",
            w[0].rate(),
            w[1].rate()
        );
    }
}

#[test]
fn monte_carlo_agrees_with_formula_on_random_configs() {
    let mut rng = stream_rng(5150, 0);
    use rand::Rng;
    for _ in 0..4 {
        let r = rng.random_range(1..=4);
        let n = rng.random_range(1..=4);
        let m = [64, 128, 256][rng.random_range(0..3)];
        let theta = rng.random_range(PI / 4.0..=PI);
        let c = cfg(r, m, n, 16, 0);
        let est = monte_carlo_collisions(theta, &c, 100_000, rng.random()).unwrap();
        let want = analytic_collision_probability(theta, &c).unwrap();
        assert!(
            (est.rate() - want).abs() <= 0.02,
            "r={r} n={n} m={m} theta={theta}: {} vs {want}",
            est.rate()
        );
    }
}
