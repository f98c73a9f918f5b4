//! Leading eigenpairs (by absolute eigenvalue) of an adjacency matrix.
//!
//! Small graphs go through a dense symmetric decomposition. Larger graphs use
//! Lanczos with full reorthogonalization, a start vector drawn from the
//! caller's seed, and Krylov dimension grown until the wanted Ritz pairs meet
//! the residual tolerance.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::AdjacencyMatrix;
use crate::rng::RngSeed;

/// Graphs with at most this many nodes use the dense solver.
pub const DENSE_LIMIT: usize = 256;

const RESIDUAL_TOLERANCE: f64 = 1e-10;
const MAX_KRYLOV: usize = 1500;

/// Eigenvalues sorted by decreasing `|λ|` and the matching unit eigenvectors,
/// stored column-major (`vectors[c * n + i]`).
#[derive(Clone, Debug)]
pub struct Eigenpairs {
    pub values: Vec<f64>,
    pub vectors: Vec<f64>,
    pub n: usize,
}

impl Eigenpairs {
    pub fn vector(&self, c: usize) -> &[f64] {
        &self.vectors[c * self.n..(c + 1) * self.n]
    }
}

pub fn leading_eigenpairs(a: &AdjacencyMatrix, k: usize, seed: RngSeed) -> Result<Eigenpairs> {
    let n = a.n();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!(
            "need 1 <= K <= n, got K={k}, n={n}"
        )));
    }
    let mut pairs = if n <= DENSE_LIMIT {
        dense(a, k)
    } else {
        lanczos(a, k, seed)?
    };
    orient(&mut pairs);
    Ok(pairs)
}

/// Flips each vector so its largest-magnitude component (first on ties) is positive.
fn orient(p: &mut Eigenpairs) {
    let n = p.n;
    for c in 0..p.values.len() {
        let col = &mut p.vectors[c * n..(c + 1) * n];
        let mut best = 0;
        for i in 1..n {
            if col[i].abs() > col[best].abs() + 1e-12 {
                best = i;
            }
        }
        if col[best] < 0.0 {
            col.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

fn by_magnitude(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&x, &y| values[y].abs().total_cmp(&values[x].abs()).then(x.cmp(&y)));
    order
}

fn dense(a: &AdjacencyMatrix, k: usize) -> Eigenpairs {
    let n = a.n();
    let m = DMatrix::from_fn(n, n, |i, j| a.entry(i, j) as f64);
    let eig = SymmetricEigen::new(m);
    let values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    let order = by_magnitude(&values);
    let mut out_values = Vec::with_capacity(k);
    let mut vectors = Vec::with_capacity(k * n);
    for &c in order.iter().take(k) {
        out_values.push(values[c]);
        vectors.extend(eig.eigenvectors.column(c).iter());
    }
    Eigenpairs {
        values: out_values,
        vectors,
        n,
    }
}

struct Csr {
    offsets: Vec<usize>,
    targets: Vec<u32>,
}

impl Csr {
    fn new(a: &AdjacencyMatrix) -> Self {
        let mut offsets = Vec::with_capacity(a.n() + 1);
        let mut targets = Vec::new();
        offsets.push(0);
        for i in 0..a.n() {
            targets.extend(a.neighbors(i).map(|j| j as u32));
            offsets.push(targets.len());
        }
        Self { offsets, targets }
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (i, out) in y.iter_mut().enumerate() {
            *out = self.targets[self.offsets[i]..self.offsets[i + 1]]
                .iter()
                .map(|&j| x[j as usize])
                .sum();
        }
    }
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

fn norm(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

/// Removes the components of `w` along the first `m` basis vectors, twice.
fn reorthogonalize(basis: &[f64], m: usize, n: usize, w: &mut [f64]) {
    for _ in 0..2 {
        for c in 0..m {
            let q = &basis[c * n..(c + 1) * n];
            let h = dot(q, w);
            w.iter_mut().zip(q).for_each(|(x, qi)| *x -= h * qi);
        }
    }
}

fn lanczos(a: &AdjacencyMatrix, k: usize, seed: RngSeed) -> Result<Eigenpairs> {
    let n = a.n();
    let csr = Csr::new(a);
    let max_dim = n.min(MAX_KRYLOV);
    let mut rng = seed.rng();
    let mut random_unit = |basis: &[f64], m: usize| -> Option<Vec<f64>> {
        for _ in 0..8 {
            let mut v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
            reorthogonalize(basis, m, n, &mut v);
            let nv = norm(&v);
            if nv > 1e-8 {
                v.iter_mut().for_each(|x| *x /= nv);
                return Some(v);
            }
        }
        None
    };

    let mut basis: Vec<f64> = Vec::with_capacity(n * max_dim.min(4 * k + 64));
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let q0 = random_unit(&basis, 0).expect("n >= 1");
    basis.extend_from_slice(&q0);

    let scale = (0..n)
        .map(|i| (csr.offsets[i + 1] - csr.offsets[i]) as f64)
        .fold(1.0, f64::max);
    let mut w = vec![0.0; n];
    let mut next_check = (2 * k + 20).min(max_dim);
    let mut m = 1;
    loop {
        let j = m - 1;
        csr.apply(&basis[j * n..m * n], &mut w);
        let a_j = dot(&basis[j * n..m * n], &w);
        alpha.push(a_j);
        reorthogonalize(&basis, m, n, &mut w);
        let b_j = norm(&w);

        let exhausted = m == max_dim;
        // A breakdown alone never ends the search: a fresh direction may still
        // reach another copy of a repeated eigenvalue.
        if m >= k && (m >= next_check || exhausted) {
            if let Some(pairs) = ritz(&basis, &alpha, &beta, b_j, k, n, scale, exhausted)? {
                return Ok(pairs);
            }
            next_check = (m + m / 2).max(m + 10);
        }
        if exhausted {
            return Err(Error::EigenFailure { iterations: m });
        }
        if b_j <= 1e-10 * scale {
            // invariant subspace found; continue in a fresh orthogonal direction
            match random_unit(&basis, m) {
                Some(q) => {
                    beta.push(0.0);
                    basis.extend_from_slice(&q);
                }
                None => return Err(Error::EigenFailure { iterations: m }),
            }
        } else {
            beta.push(b_j);
            basis.extend(w.iter().map(|x| x / b_j));
        }
        m += 1;
    }
}

/// Ritz pairs of the current tridiagonal matrix, or `None` if the `k` wanted
/// ones have not converged. With `force`, the basis spans the whole space and
/// the pairs are exact up to rounding.
#[allow(clippy::too_many_arguments)]
fn ritz(
    basis: &[f64],
    alpha: &[f64],
    beta: &[f64],
    last_beta: f64,
    k: usize,
    n: usize,
    scale: f64,
    force: bool,
) -> Result<Option<Eigenpairs>> {
    let m = alpha.len();
    let t = DMatrix::from_fn(m, m, |r, c| {
        if r == c {
            alpha[r]
        } else if r + 1 == c {
            beta[r]
        } else if c + 1 == r {
            beta[c]
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(t);
    let theta: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    let order = by_magnitude(&theta);
    let wanted = &order[..k];
    let converged = wanted
        .iter()
        .all(|&c| (last_beta * eig.eigenvectors[(m - 1, c)]).abs() <= RESIDUAL_TOLERANCE * scale);
    if !converged && !force {
        return Ok(None);
    }
    let mut values = Vec::with_capacity(k);
    let mut vectors = vec![0.0; k * n];
    for (slot, &c) in wanted.iter().enumerate() {
        values.push(theta[c]);
        let out = &mut vectors[slot * n..(slot + 1) * n];
        for r in 0..m {
            let s = eig.eigenvectors[(r, c)];
            let q = &basis[r * n..(r + 1) * n];
            out.iter_mut().zip(q).for_each(|(o, qi)| *o += s * qi);
        }
        let nv = norm(out);
        out.iter_mut().for_each(|x| *x /= nv);
    }
    Ok(Some(Eigenpairs { values, vectors, n }))
}
