//! WebAssembly bindings for the static demo page in `www/`.

use acgm_core::dagmath::{acyclicity_value, dag_report, depth_value, AdjacencyMatrix};
use acgm_core::envs::cgs_reward;
use ndarray::array;
use wasm_bindgen::prelude::*;

/// Report for a whitespace-separated 0/1 matrix, or `error: ...`.
#[wasm_bindgen]
pub fn check_matrix(text: &str) -> String {
    match AdjacencyMatrix::parse(text) {
        Ok(a) => dag_report(&a),
        Err(e) => format!("error: {e}\n"),
    }
}

/// `n` evenly spaced samples of the squeeze reward `G(f)` on `[lo, hi]`.
#[wasm_bindgen]
pub fn cgs_reward_curve(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![cgs_reward(lo)],
        _ => (0..n)
            .map(|i| cgs_reward(lo + (hi - lo) * i as f64 / (n - 1) as f64))
            .collect(),
    }
}

/// Penalties of the two-agent weight matrix `[[0, a], [b, 0]]` on an
/// `n x n` grid over `a, b` in `[0, 1]`, row-major with `b` along rows:
/// the acyclicity values followed by the depth-`k` values.
#[wasm_bindgen]
pub fn constraint_field(n: usize, k: usize) -> Vec<f64> {
    if n < 2 || k == 0 {
        return Vec::new();
    }
    let mut g = Vec::with_capacity(n * n);
    let mut c = Vec::with_capacity(n * n);
    for r in 0..n {
        for col in 0..n {
            let b = r as f64 / (n - 1) as f64;
            let a = col as f64 / (n - 1) as f64;
            let w = array![[0.0, a], [b, 0.0]];
            g.push(acyclicity_value(&w).unwrap_or(f64::NAN));
            c.push(depth_value(&w, k).unwrap_or(f64::NAN));
        }
    }
    g.extend(c);
    g
}
