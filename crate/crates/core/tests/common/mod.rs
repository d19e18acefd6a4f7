#![allow(dead_code)]

use std::path::PathBuf;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde_json::Value;

pub fn fixture(name: &str) -> Value {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name);
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    serde_json::from_str(&text).expect("valid fixture JSON")
}

/// High-precision values are stored as decimal strings.
pub fn num(v: &Value) -> f64 {
    match v {
        Value::String(s) => s.parse().expect("numeric string"),
        other => other.as_f64().expect("number"),
    }
}

pub fn scalar_fixture(key: &str) -> f64 {
    num(&fixture("scalars.json")[key])
}

pub fn rel_err(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs().max(1e-300)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

pub fn random_psd(d: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let b = gaussian(d, d, rng);
    &b * b.transpose() / d as f64
}

pub fn random_symmetric(d: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let b = gaussian(d, d, rng);
    (&b + b.transpose()) * 0.5
}

/// Largest |eigenvalue| of a symmetric matrix by power iteration on M².
pub fn power_spectral_norm(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let m2 = m * m;
    let mut v = DMatrix::from_fn(n, 1, |i, _| 1.0 + 0.1 * i as f64);
    let mut est = 0.0;
    for _ in 0..20_000 {
        let w = &m2 * &v;
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let next = (norm / v.norm()).sqrt();
        v = w / norm;
        if (next - est).abs() <= 1e-15 * next {
            return next;
        }
        est = next;
    }
    est
}
