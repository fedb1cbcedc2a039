//! Brute-force oracles shared by the integration tests. Everything here walks
//! multi-indices explicitly and never calls the library's reductions.
#![allow(dead_code)]

use nncp::{DenseTensor, KruskalModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// All multi-indices of `shape` in row-major order.
pub fn indices(shape: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for &d in shape {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (0..d).map(move |j| {
                    let mut v = prefix.clone();
                    v.push(j);
                    v
                })
            })
            .collect();
    }
    out
}

/// Entry of a Kruskal model at one index: `Σ_p δ_p Π_i F_i[idx_i, p]`.
pub fn model_entry(m: &KruskalModel, idx: &[usize]) -> f64 {
    (0..m.rank())
        .map(|p| {
            m.factors()
                .iter()
                .zip(idx)
                .fold(m.delta()[p], |acc, (f, &j)| acc * f[(j, p)])
        })
        .sum()
}

pub fn model_e_norm(m: &KruskalModel) -> f64 {
    indices(m.shape()).iter().map(|idx| model_entry(m, idx).abs()).sum()
}

pub fn max_abs_entry_diff(m: &KruskalModel, t: &DenseTensor) -> f64 {
    indices(m.shape())
        .iter()
        .map(|idx| (model_entry(m, idx) - t.get(idx).unwrap()).abs())
        .fold(0.0, f64::max)
}

/// Termwise generalized KL, `Σ a log(a/b) − a + b`.
pub fn kl_oracle(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| if x == 0.0 { y } else { x * (x / y).ln() - x + y })
        .sum()
}

pub fn random_vec(rng: &mut ChaCha8Rng, len: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(lo..hi)).collect()
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> DenseTensor {
    let n = shape.iter().product();
    DenseTensor::new(shape.to_vec(), random_vec(rng, n, lo, hi)).unwrap()
}

/// Unnormalized nonnegative model with entries in `[0, 2)` and weights in `(0, 3)`.
pub fn random_nonneg_model(rng: &mut ChaCha8Rng, shape: &[usize], r: usize) -> KruskalModel {
    let delta = random_vec(rng, r, 0.01, 3.0);
    let cols: Vec<Vec<Vec<f64>>> = (0..r)
        .map(|_| shape.iter().map(|&d| random_vec(rng, d, 0.0, 2.0)).collect())
        .collect();
    KruskalModel::from_components(shape, delta, &cols).unwrap()
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let cov: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    cov / var
}
