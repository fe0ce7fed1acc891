#![allow(dead_code)]

use std::path::PathBuf;

use ndarray::{Array1, Array2, ArrayView1};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use sparse_shield::model::{Dictionary, SparseCode};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_vector(rng: &mut ChaCha8Rng, n: usize) -> Array1<f64> {
    Array1::from_shape_simple_fn(n, || rng.sample(StandardNormal))
}

pub fn unit_vector(rng: &mut ChaCha8Rng, n: usize) -> Array1<f64> {
    let v = gaussian_vector(rng, n);
    let norm = v.dot(&v).sqrt();
    v / norm
}

pub fn gaussian_dictionary(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Dictionary {
    Dictionary::normalized(Array2::from_shape_simple_fn((n, m), || rng.sample(StandardNormal))).unwrap()
}

/// `k` nonzeros on a uniform support, magnitudes uniform in `[lo, hi]`,
/// random signs.
pub fn random_code(rng: &mut ChaCha8Rng, m: usize, k: usize, lo: f64, hi: f64) -> SparseCode {
    let support = sample(rng, m, k).into_vec();
    let amps: Vec<f64> = (0..k)
        .map(|_| {
            let a = rng.random_range(lo..=hi);
            if rng.random_bool(0.5) { a } else { -a }
        })
        .collect();
    SparseCode::from_support(m, &support, &amps).unwrap()
}

pub fn norm(v: ArrayView1<f64>) -> f64 {
    v.dot(&v).sqrt()
}

pub fn distance(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    let d = &a - &b;
    d.dot(&d).sqrt()
}

/// Central differences with step `1e-6`.
pub fn finite_difference(x: &Array1<f64>, f: impl Fn(ArrayView1<f64>) -> f64) -> Array1<f64> {
    let h = 1e-6;
    Array1::from_shape_fn(x.len(), |i| {
        let mut p = x.clone();
        let mut m = x.clone();
        p[i] += h;
        m[i] -= h;
        (f(p.view()) - f(m.view())) / (2.0 * h)
    })
}

pub fn relative_error(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    distance(a.view(), b.view()) / norm(a.view()).max(norm(b.view())).max(1e-12)
}

pub fn repo_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn config_path(name: &str) -> PathBuf {
    repo_root().join("configs").join(name)
}
