//! Direct-from-definition implementations used as oracles, plus instance builders.
#![allow(dead_code)]

use proptest::prelude::*;
use rand::Rng;
use sbm_twosample::graph::{AdjacencyMatrix, MembershipLabel};
use sbm_twosample::rng::RngSeed;

/// Block estimate by looping over every ordered pair, then clamping to
/// `[m, 1 - m]` with `m = 1 / (n_u n_v + 1)`.
pub fn oracle_block(a: &[Vec<u8>], g: &[usize], k: usize) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut out = vec![vec![0.0; k]; k];
    for u in 0..k {
        for v in 0..k {
            let (mut edges, mut pairs) = (0u64, 0u64);
            for i in 0..n {
                for j in 0..n {
                    if i != j && g[i] == u && g[j] == v {
                        pairs += 1;
                        edges += a[i][j] as u64;
                    }
                }
            }
            let n_u = g.iter().filter(|&&c| c == u).count();
            let n_v = g.iter().filter(|&&c| c == v).count();
            let margin = 1.0 / ((n_u * n_v) as f64 + 1.0);
            out[u][v] = (edges as f64 / pairs as f64).clamp(margin, 1.0 - margin);
        }
    }
    out
}

/// Single-sample deviation entry by summing one standardized residual per peer.
pub fn oracle_rho_hat(a: &[Vec<u8>], g: &[usize], b: &[Vec<f64>], i: usize, v: usize) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for j in 0..a.len() {
        if j != i && g[j] == v {
            let p = b[g[i]][g[j]];
            sum += (a[i][j] as f64 - p) / (p * (1.0 - p)).sqrt();
            count += 1;
        }
    }
    sum / (count as f64).sqrt()
}

/// Two-sample deviation entry: X residuals over `gy`'s community `v` against `by`,
/// Y residuals over `gx`'s community `v` against `bx`.
#[allow(clippy::too_many_arguments)]
pub fn oracle_rho_tilde(
    x: &[Vec<u8>],
    y: &[Vec<u8>],
    gx: &[usize],
    gy: &[usize],
    bx: &[Vec<f64>],
    by: &[Vec<f64>],
    i: usize,
    v: usize,
) -> f64 {
    let n = x.len();
    let (mut sx, mut sy) = (0.0, 0.0);
    let (mut cx, mut cy) = (0usize, 0usize);
    for j in 0..n {
        if j != i && gy[j] == v {
            let p = by[gy[i]][gy[j]];
            sy += (x[i][j] as f64 - p) / (p * (1.0 - p)).sqrt();
            cy += 1;
        }
        if j != i && gx[j] == v {
            let p = bx[gx[i]][gx[j]];
            sx += (y[i][j] as f64 - p) / (p * (1.0 - p)).sqrt();
            cx += 1;
        }
    }
    (sx + sy) / ((cx + cy) as f64).sqrt()
}

pub fn oracle_t(l: f64, k: usize, n: usize, loglog: f64) -> f64 {
    let m = (2 * k * n) as f64;
    l * l - 2.0 * m.ln() + loglog * m.ln().ln()
}

/// Largest |entry| over all `(i, v)`.
pub fn oracle_max(n: usize, k: usize, entry: impl Fn(usize, usize) -> f64) -> f64 {
    let mut best: f64 = 0.0;
    for i in 0..n {
        for v in 0..k {
            best = best.max(entry(i, v).abs());
        }
    }
    best
}

pub fn graph_from_bits(n: usize, bits: &[bool]) -> AdjacencyMatrix {
    let mut edges = Vec::new();
    let mut idx = 0;
    for i in 0..n {
        for j in (i + 1)..n {
            if bits[idx] {
                edges.push((i, j));
            }
            idx += 1;
        }
    }
    AdjacencyMatrix::from_edges(n, &edges).unwrap()
}

pub fn random_graph(n: usize, p: f64, seed: u64) -> AdjacencyMatrix {
    let mut rng = RngSeed::new(seed).rng();
    let bits: Vec<bool> = (0..n * (n - 1) / 2).map(|_| rng.random_bool(p)).collect();
    graph_from_bits(n, &bits)
}

/// Random labels with every community holding at least two nodes.
pub fn random_label(n: usize, k: usize, seed: u64) -> MembershipLabel {
    assert!(n >= 2 * k);
    let mut rng = RngSeed::new(seed).rng();
    let mut ids: Vec<usize> = (0..n)
        .map(|i| {
            if i < 2 * k {
                i / 2
            } else {
                rng.random_range(0..k)
            }
        })
        .collect();
    for i in (1..n).rev() {
        ids.swap(i, rng.random_range(0..=i));
    }
    MembershipLabel::from_zero_based(ids, k).unwrap()
}

pub fn random_permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut rng = RngSeed::new(seed).rng();
    let mut p: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        p.swap(i, rng.random_range(0..=i));
    }
    p
}

/// `(n, k, density, seed)` for small random instances.
pub fn small_instance() -> impl Strategy<Value = (usize, usize, f64, u64)> {
    (1usize..=2).prop_flat_map(|k| (2 * k.max(2)..=12usize, Just(k), 0.1f64..0.9, any::<u64>()))
}
