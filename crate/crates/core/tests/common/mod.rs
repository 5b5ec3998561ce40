//! Brute-force reference implementations shared by the integration tests.
//! Everything here uses explicit index loops over `DenseTensor::get` and
//! never calls the contraction engine.

#![allow(dead_code, clippy::needless_range_loop)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tnid_core::model::InitScheme;
use tnid_core::{DenseTensor, ModelKind, TensorNetwork};

/// Full weight tensor `W[s, k]` of a network, with the bit string `s`
/// (bit `i` = index of feature `i`, most significant first) flattened.
pub fn full_weights(model: &TensorNetwork) -> Vec<Vec<f64>> {
    let m = model.features();
    let n = model.classes();
    (0..1usize << m)
        .map(|s| {
            let bits: Vec<usize> = (0..m).map(|i| (s >> (m - 1 - i)) & 1).collect();
            (0..n).map(|k| weight(model, &bits, k)).collect()
        })
        .collect()
}

fn at(t: &DenseTensor, idx: &[usize]) -> f64 {
    t.get(idx).expect("index in range")
}

fn weight(model: &TensorNetwork, bits: &[usize], k: usize) -> f64 {
    let params = model.parameters();
    match model.kind() {
        ModelKind::Tr => {
            let r = model.bond();
            let m = bits.len();
            // P = A_0[:, s_0, :] · ... · A_{m-1}[:, s_{m-1}, :]
            let mut p = vec![vec![0.0; r]; r];
            for (a, row) in p.iter_mut().enumerate() {
                row[a] = 1.0;
            }
            for (i, &s) in bits.iter().enumerate() {
                let mut next = vec![vec![0.0; r]; r];
                for a in 0..r {
                    for b in 0..r {
                        let mut acc = 0.0;
                        for c in 0..r {
                            acc += p[a][c] * at(params[i], &[c, s, b]);
                        }
                        next[a][b] = acc;
                    }
                }
                p = next;
            }
            let out = params[m];
            let mut w = 0.0;
            for a in 0..r {
                for b in 0..r {
                    w += p[a][b] * at(out, &[b, k, a]);
                }
            }
            w
        }
        ModelKind::Ttn => {
            let mut level: Vec<Vec<f64>> = bits
                .iter()
                .map(|&s| {
                    let mut e = vec![0.0; 2];
                    e[s] = 1.0;
                    e
                })
                .collect();
            let mut index = 0;
            while level.len() > 1 {
                let mut next = Vec::new();
                for pair in level.chunks(2) {
                    let core = params[index];
                    index += 1;
                    let sh = core.shape();
                    let mut v = vec![0.0; sh[2]];
                    for (c, vc) in v.iter_mut().enumerate() {
                        for a in 0..sh[0] {
                            for b in 0..sh[1] {
                                *vc += at(core, &[a, b, c]) * pair[0][a] * pair[1][b];
                            }
                        }
                    }
                    next.push(v);
                }
                level = next;
            }
            level[0][k]
        }
    }
}

fn monomial(bits: usize, m: usize, x: &[f64]) -> f64 {
    (0..m)
        .filter(|i| (bits >> (m - 1 - i)) & 1 == 1)
        .map(|i| x[i])
        .product()
}

/// `f_k(x) = Σ_s W[s, k] Π_{i: s_i = 1} x_i`.
pub fn oracle_forward(w: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    let m = x.len();
    let n = w[0].len();
    let mut out = vec![0.0; n];
    for (s, ws) in w.iter().enumerate() {
        let mono = monomial(s, m, x);
        for k in 0..n {
            out[k] += ws[k] * mono;
        }
    }
    out
}

/// Degree-`j` part: the same sum restricted to bit strings of Hamming
/// weight `j`. Returns rows `j = 0..=m`.
pub fn oracle_degrees(w: &[Vec<f64>], x: &[f64]) -> Vec<Vec<f64>> {
    let m = x.len();
    let n = w[0].len();
    let mut rows = vec![vec![0.0; n]; m + 1];
    for (s, ws) in w.iter().enumerate() {
        let j = s.count_ones() as usize;
        let mono = monomial(s, m, x);
        for k in 0..n {
            rows[j][k] += ws[k] * mono;
        }
    }
    rows
}

/// Largest absolute difference relative to the largest reference magnitude.
pub fn relative_error(got: &[f64], want: &[f64]) -> f64 {
    let scale = want.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-300);
    got.iter()
        .zip(want)
        .fold(0.0f64, |a, (g, w)| a.max((g - w).abs()))
        / scale
}

pub fn random_model(kind: ModelKind, m: usize, r: usize, n: usize, seed: u64) -> TensorNetwork {
    // Scale keeps products of m cores of order one.
    let sigma = 1.0 / (r as f64).sqrt();
    TensorNetwork::init(kind, m, r, n, seed, InitScheme::Gaussian { sigma }).expect("valid dimensions")
}

pub fn random_input(m: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..m).map(|_| rng.random_range(-0.5..0.5)).collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Nested-loop contraction: every output element is an explicit sum over
/// all assignments of the contracted indices. Returns the output and, per
/// element, the sum of absolute terms (the rounding scale).
pub fn contract_oracle(a: &DenseTensor, b: &DenseTensor, pairs: &[(usize, usize)]) -> (Vec<f64>, Vec<f64>) {
    let free_a: Vec<usize> = (0..a.shape().len()).filter(|i| !pairs.iter().any(|p| p.0 == *i)).collect();
    let free_b: Vec<usize> = (0..b.shape().len()).filter(|i| !pairs.iter().any(|p| p.1 == *i)).collect();
    let out_dims: Vec<usize> = free_a
        .iter()
        .map(|&i| a.shape()[i])
        .chain(free_b.iter().map(|&i| b.shape()[i]))
        .collect();
    let sum_dims: Vec<usize> = pairs.iter().map(|p| a.shape()[p.0]).collect();
    let (mut values, mut scales) = (Vec::new(), Vec::new());
    for out in indices(&out_dims) {
        let (mut acc, mut scale) = (0.0, 0.0);
        for s in indices(&sum_dims) {
            let mut ia = vec![0; a.shape().len()];
            let mut ib = vec![0; b.shape().len()];
            for (k, &ax) in free_a.iter().enumerate() {
                ia[ax] = out[k];
            }
            for (k, &ax) in free_b.iter().enumerate() {
                ib[ax] = out[free_a.len() + k];
            }
            for (k, p) in pairs.iter().enumerate() {
                ia[p.0] = s[k];
                ib[p.1] = s[k];
            }
            let term = at(a, &ia) * at(b, &ib);
            acc += term;
            scale += term.abs();
        }
        values.push(acc);
        scales.push(scale);
    }
    (values, scales)
}

/// All multi-indices of `dims` in row-major order.
fn indices(dims: &[usize]) -> Vec<Vec<usize>> {
    let mut all = vec![vec![]];
    for &d in dims {
        all = all
            .into_iter()
            .flat_map(|prefix: Vec<usize>| {
                (0..d).map(move |i| {
                    let mut v = prefix.clone();
                    v.push(i);
                    v
                })
            })
            .collect();
    }
    all
}
