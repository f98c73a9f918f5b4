//! Spectral community detection.
//!
//! Nodes are embedded with the `K` eigenvectors of the adjacency matrix of
//! largest absolute eigenvalue and clustered by k-means (k-means++ seeding,
//! Lloyd iterations, best of several restarts). Label alignment uses the
//! Hungarian algorithm on the confusion matrix.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::eigen::leading_eigenpairs;
use crate::error::{Error, Result};
use crate::graph::{AdjacencyMatrix, MembershipLabel};
use crate::rng::RngSeed;

/// Seed of the eigensolver start vector. Fixed so embeddings depend on the graph only.
const EMBEDDING_SEED: RngSeed = RngSeed {
    seed: 0x5eed_e16e,
    stream: 0,
};

/// Node coordinates (row-major `n x k`) and the eigenvalues that produced them.
#[derive(Clone, Debug)]
pub struct SpectralEmbedding {
    pub n: usize,
    pub k: usize,
    pub coords: Vec<f64>,
    /// Sorted by decreasing absolute value.
    pub eigenvalues: Vec<f64>,
}

impl SpectralEmbedding {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.coords[i * self.k..(i + 1) * self.k]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.coords[i * self.k + c]).collect()
    }
}

pub fn spectral_embed(a: &AdjacencyMatrix, k: usize) -> Result<SpectralEmbedding> {
    let pairs = leading_eigenpairs(a, k, EMBEDDING_SEED)?;
    let n = a.n();
    let mut coords = vec![0.0; n * k];
    for c in 0..k {
        for (i, &x) in pairs.vector(c).iter().enumerate() {
            coords[i * k + c] = x;
        }
    }
    Ok(SpectralEmbedding {
        n,
        k,
        coords,
        eigenvalues: pairs.values,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KMeansConfig {
    pub restarts: usize,
    pub max_iterations: usize,
    /// Lloyd stops once no centroid moves farther than this.
    pub tolerance: f64,
    pub seed: RngSeed,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            restarts: 20,
            max_iterations: 100,
            tolerance: 1e-6,
            seed: RngSeed::new(0),
        }
    }
}

impl KMeansConfig {
    pub fn with_seed(seed: RngSeed) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.restarts == 0 {
            return Err(Error::InvalidArgument(
                "k-means needs at least one restart".into(),
            ));
        }
        if !(self.tolerance >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "k-means tolerance must be nonnegative, got {}",
                self.tolerance
            )));
        }
        Ok(())
    }
}

/// Best clustering over all restarts.
#[derive(Clone, Debug)]
pub struct KMeansFit {
    pub label: MembershipLabel,
    /// Row-major `k x d`.
    pub centroids: Vec<f64>,
    pub within_ss: f64,
    pub restart: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Clusters the rows of the row-major `n x d` matrix `points`.
pub fn kmeans(
    points: &[f64],
    d: usize,
    k: usize,
    config: &KMeansConfig,
) -> Result<MembershipLabel> {
    Ok(kmeans_fit(points, d, k, config)?.label)
}

pub fn kmeans_fit(points: &[f64], d: usize, k: usize, config: &KMeansConfig) -> Result<KMeansFit> {
    config.validate()?;
    if d == 0 || !points.len().is_multiple_of(d) {
        return Err(Error::Shape(format!(
            "{} values do not form rows of width {d}",
            points.len()
        )));
    }
    let n = points.len() / d;
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!(
            "need 1 <= K <= n, got K={k}, n={n}"
        )));
    }
    let mut best: Option<(Vec<usize>, Vec<f64>, f64, usize)> = None;
    for restart in 0..config.restarts {
        let mut rng = config.seed.derive(restart as u64).rng();
        let (assign, centroids, wcss) = lloyd(points, d, k, config, &mut rng);
        if best.as_ref().is_none_or(|b| wcss < b.2) {
            best = Some((assign, centroids, wcss, restart));
        }
    }
    let (assign, centroids, within_ss, restart) = best.expect("restarts >= 1");
    let (assign, centroids) = canonical_order(assign, centroids, k, d);
    Ok(KMeansFit {
        label: MembershipLabel::from_zero_based(assign, k)?,
        centroids,
        within_ss,
        restart,
    })
}

/// Renumbers clusters by first appearance.
fn canonical_order(
    assign: Vec<usize>,
    centroids: Vec<f64>,
    k: usize,
    d: usize,
) -> (Vec<usize>, Vec<f64>) {
    let mut map = vec![usize::MAX; k];
    let mut next = 0;
    for &c in &assign {
        if map[c] == usize::MAX {
            map[c] = next;
            next += 1;
        }
    }
    let assign = assign.iter().map(|&c| map[c]).collect();
    let mut out = vec![0.0; k * d];
    for (c, &m) in map.iter().enumerate() {
        out[m * d..(m + 1) * d].copy_from_slice(&centroids[c * d..(c + 1) * d]);
    }
    (assign, out)
}

fn plus_plus_seeds(points: &[f64], d: usize, k: usize, rng: &mut impl Rng) -> Vec<f64> {
    let n = points.len() / d;
    let row = |i: usize| &points[i * d..(i + 1) * d];
    let mut centroids = Vec::with_capacity(k * d);
    centroids.extend_from_slice(row(rng.random_range(0..n)));
    let mut dist: Vec<f64> = (0..n).map(|i| sq_dist(row(i), &centroids[..d])).collect();
    for _ in 1..k {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, &w) in dist.iter().enumerate() {
                acc += w;
                if acc > target && w > 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let start = centroids.len();
        centroids.extend_from_slice(row(pick));
        for (i, di) in dist.iter_mut().enumerate() {
            *di = di.min(sq_dist(row(i), &centroids[start..start + d]));
        }
    }
    centroids
}

fn lloyd(
    points: &[f64],
    d: usize,
    k: usize,
    config: &KMeansConfig,
    rng: &mut impl Rng,
) -> (Vec<usize>, Vec<f64>, f64) {
    let n = points.len() / d;
    let row = |i: usize| &points[i * d..(i + 1) * d];
    let mut centroids = plus_plus_seeds(points, d, k, rng);
    let mut assign = vec![0usize; n];
    let mut dist = vec![0.0; n];
    for iteration in 0..=config.max_iterations {
        for i in 0..n {
            let (mut best, mut best_d) = (0, f64::INFINITY);
            for c in 0..k {
                let dc = sq_dist(row(i), &centroids[c * d..(c + 1) * d]);
                if dc < best_d {
                    best = c;
                    best_d = dc;
                }
            }
            assign[i] = best;
            dist[i] = best_d;
        }
        fill_empty_clusters(&mut assign, &mut dist, k);
        if iteration == config.max_iterations {
            break;
        }
        let mut next = vec![0.0; k * d];
        let mut sizes = vec![0usize; k];
        for i in 0..n {
            let c = assign[i];
            sizes[c] += 1;
            next[c * d..(c + 1) * d]
                .iter_mut()
                .zip(row(i))
                .for_each(|(s, x)| *s += x);
        }
        let mut shift: f64 = 0.0;
        for c in 0..k {
            let s = sizes[c] as f64;
            next[c * d..(c + 1) * d].iter_mut().for_each(|x| *x /= s);
            shift = shift
                .max(sq_dist(&next[c * d..(c + 1) * d], &centroids[c * d..(c + 1) * d]).sqrt());
        }
        centroids = next;
        if shift <= config.tolerance {
            // final assignment against the settled centroids
            for i in 0..n {
                let (mut best, mut best_d) = (0, f64::INFINITY);
                for c in 0..k {
                    let dc = sq_dist(row(i), &centroids[c * d..(c + 1) * d]);
                    if dc < best_d {
                        best = c;
                        best_d = dc;
                    }
                }
                assign[i] = best;
                dist[i] = best_d;
            }
            fill_empty_clusters(&mut assign, &mut dist, k);
            break;
        }
    }
    // centroids of the returned assignment, so the reported SS matches it
    let mut centroids = vec![0.0; k * d];
    let mut sizes = vec![0usize; k];
    for i in 0..n {
        sizes[assign[i]] += 1;
        centroids[assign[i] * d..(assign[i] + 1) * d]
            .iter_mut()
            .zip(row(i))
            .for_each(|(s, x)| *s += x);
    }
    for c in 0..k {
        let s = sizes[c] as f64;
        centroids[c * d..(c + 1) * d]
            .iter_mut()
            .for_each(|x| *x /= s);
    }
    let wcss = (0..n)
        .map(|i| sq_dist(row(i), &centroids[assign[i] * d..(assign[i] + 1) * d]))
        .sum();
    (assign, centroids, wcss)
}

/// Gives each empty cluster the point farthest from its centroid, taken from
/// clusters that can spare one.
fn fill_empty_clusters(assign: &mut [usize], dist: &mut [f64], k: usize) {
    let mut sizes = vec![0usize; k];
    assign.iter().for_each(|&c| sizes[c] += 1);
    for c in 0..k {
        if sizes[c] > 0 {
            continue;
        }
        let mut pick = None;
        for i in 0..assign.len() {
            if sizes[assign[i]] > 1 && pick.is_none_or(|p: usize| dist[i] > dist[p]) {
                pick = Some(i);
            }
        }
        let i = pick.expect("n >= k leaves a cluster with two members");
        sizes[assign[i]] -= 1;
        sizes[c] = 1;
        assign[i] = c;
        dist[i] = 0.0;
    }
}

/// Spectral clustering of `a` into `k` communities.
pub fn detect_communities(
    a: &AdjacencyMatrix,
    k: usize,
    config: &KMeansConfig,
) -> Result<MembershipLabel> {
    let n = a.n();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!(
            "need 1 <= K <= n, got K={k}, n={n}"
        )));
    }
    if k == 1 {
        return MembershipLabel::from_zero_based(vec![0; n], 1);
    }
    let emb = spectral_embed(a, k)?;
    kmeans(&emb.coords, k, k, config)
}

/// Detects communities on both graphs and aligns the second labelling to the first.
pub fn detect_pair(
    x: &AdjacencyMatrix,
    y: &AdjacencyMatrix,
    k: usize,
    config: &KMeansConfig,
) -> Result<(MembershipLabel, MembershipLabel)> {
    let gx = detect_communities(x, k, config)?;
    let gy = detect_communities(
        y,
        k,
        &KMeansConfig {
            seed: config.seed.derive(1),
            ..*config
        },
    )?;
    let gy = align_labels(&gx, &gy)?;
    Ok((gx, gy))
}

/// `confusion[u * k + v]` counts nodes with `reference = u` and `candidate = v`.
fn confusion(reference: &MembershipLabel, candidate: &MembershipLabel) -> Result<Vec<usize>> {
    if reference.k() != candidate.k() {
        return Err(Error::KMismatch {
            left: reference.k(),
            right: candidate.k(),
        });
    }
    if reference.n() != candidate.n() {
        return Err(Error::SizeMismatch {
            left: reference.n(),
            right: candidate.n(),
        });
    }
    let k = reference.k();
    let mut m = vec![0usize; k * k];
    for (&u, &v) in reference.as_slice().iter().zip(candidate.as_slice()) {
        m[u * k + v] += 1;
    }
    Ok(m)
}

/// Assignment `col_of_row` maximizing `Σ weight[r][col_of_row[r]]` over permutations.
pub(crate) fn max_weight_assignment(weight: &[usize], k: usize) -> Vec<usize> {
    // Shortest augmenting path Hungarian method on costs -weight, 1-based potentials.
    let cost = |r: usize, c: usize| -(weight[(r - 1) * k + (c - 1)] as i64);
    let inf = i64::MAX / 4;
    let mut u = vec![0i64; k + 1];
    let mut v = vec![0i64; k + 1];
    let mut row_of_col = vec![0usize; k + 1];
    let mut way = vec![0usize; k + 1];
    for r in 1..=k {
        row_of_col[0] = r;
        let mut c0 = 0;
        let mut minv = vec![inf; k + 1];
        let mut used = vec![false; k + 1];
        loop {
            used[c0] = true;
            let r0 = row_of_col[c0];
            let mut delta = inf;
            let mut c1 = 0;
            for c in 1..=k {
                if !used[c] {
                    let cur = cost(r0, c) - u[r0] - v[c];
                    if cur < minv[c] {
                        minv[c] = cur;
                        way[c] = c0;
                    }
                    if minv[c] < delta {
                        delta = minv[c];
                        c1 = c;
                    }
                }
            }
            for c in 0..=k {
                if used[c] {
                    u[row_of_col[c]] += delta;
                    v[c] -= delta;
                } else {
                    minv[c] -= delta;
                }
            }
            c0 = c1;
            if row_of_col[c0] == 0 {
                break;
            }
        }
        loop {
            let c1 = way[c0];
            row_of_col[c0] = row_of_col[c1];
            c0 = c1;
            if c0 == 0 {
                break;
            }
        }
    }
    let mut col_of_row = vec![0; k];
    for c in 1..=k {
        col_of_row[row_of_col[c] - 1] = c - 1;
    }
    col_of_row
}

/// Relabels `candidate` by the community permutation that agrees best with `reference`.
pub fn align_labels(
    reference: &MembershipLabel,
    candidate: &MembershipLabel,
) -> Result<MembershipLabel> {
    let k = reference.k();
    let m = confusion(reference, candidate)?;
    // rows = candidate ids, columns = reference ids
    let transposed: Vec<usize> = (0..k * k).map(|idx| m[(idx % k) * k + idx / k]).collect();
    let mapping = max_weight_assignment(&transposed, k);
    Ok(candidate.relabel(&mapping))
}

/// Fraction of nodes misassigned under the best matching of community ids.
pub fn misclassification_rate(truth: &MembershipLabel, estimate: &MembershipLabel) -> Result<f64> {
    let k = truth.k();
    let m = confusion(truth, estimate)?;
    let matching = max_weight_assignment(&m, k);
    let agree: usize = matching
        .iter()
        .enumerate()
        .map(|(u, &v)| m[u * k + v])
        .sum();
    Ok(1.0 - agree as f64 / truth.n().max(1) as f64)
}
