//! Graphs, community labels and block probability matrices.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const WORD: usize = 64;

fn words_for(n: usize) -> usize {
    n.div_ceil(WORD)
}

/// Symmetric, hollow, binary adjacency matrix stored one bit per entry.
///
/// Rows are packed into `u64` words so that neighbourhood counts against a
/// node set reduce to `popcount(row & mask)`.
#[derive(Clone, PartialEq, Eq)]
pub struct AdjacencyMatrix {
    n: usize,
    words: usize,
    bits: Vec<u64>,
}

impl std::fmt::Debug for AdjacencyMatrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AdjacencyMatrix")
            .field("n", &self.n)
            .field("edges", &self.edge_count())
            .finish()
    }
}

impl AdjacencyMatrix {
    pub fn empty(n: usize) -> Self {
        let words = words_for(n);
        Self {
            n,
            words,
            bits: vec![0; n * words],
        }
    }

    pub fn complete(n: usize) -> Self {
        let mut a = Self::empty(n);
        for i in 0..n {
            for j in (i + 1)..n {
                a.insert_edge(i, j);
            }
        }
        a
    }

    /// Builds a graph from 0-based undirected edges. Self-loops and indices
    /// outside `0..n` are rejected; duplicates are harmless.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut a = Self::empty(n);
        for &(i, j) in edges {
            if i >= n {
                return Err(Error::IndexOutOfRange { index: i + 1, n });
            }
            if j >= n {
                return Err(Error::IndexOutOfRange { index: j + 1, n });
            }
            if i == j {
                return Err(Error::NonZeroDiagonal { i });
            }
            a.insert_edge(i, j);
        }
        Ok(a)
    }

    /// Validates a raw integer matrix. Errors name the first offending pair
    /// in row-major order (0-based).
    pub fn validate(raw: &[Vec<i64>]) -> Result<Self> {
        let n = raw.len();
        for (row, r) in raw.iter().enumerate() {
            if r.len() != n {
                return Err(Error::NotSquare {
                    rows: n,
                    row,
                    cols: r.len(),
                });
            }
        }
        for i in 0..n {
            for j in 0..n {
                let v = raw[i][j];
                if v != 0 && v != 1 {
                    return Err(Error::NonBinaryEntry { i, j, value: v });
                }
                if i == j && v != 0 {
                    return Err(Error::NonZeroDiagonal { i });
                }
                if v != raw[j][i] {
                    let (a, b) = if i < j { (i, j) } else { (j, i) };
                    return Err(Error::NotSymmetric { i: a, j: b });
                }
            }
        }
        let mut a = Self::empty(n);
        for i in 0..n {
            for j in (i + 1)..n {
                if raw[i][j] == 1 {
                    a.insert_edge(i, j);
                }
            }
        }
        Ok(a)
    }

    pub(crate) fn insert_edge(&mut self, i: usize, j: usize) {
        debug_assert!(i != j);
        self.bits[i * self.words + j / WORD] |= 1 << (j % WORD);
        self.bits[j * self.words + i / WORD] |= 1 << (i % WORD);
    }

    /// Sets only the `(i, j)` bit; callers finish with [`Self::mirror_upper`].
    #[inline]
    pub(crate) fn insert_upper(&mut self, i: usize, j: usize) {
        debug_assert!(i < j);
        self.bits[i * self.words + j / WORD] |= 1 << (j % WORD);
    }

    /// Copies the strict upper triangle into the lower one, 64×64 bit tiles at a time.
    pub(crate) fn mirror_upper(&mut self) {
        let tiles = self.words;
        let mut tile = [0u64; 64];
        for ti in 0..tiles {
            for tj in ti..tiles {
                for (r, slot) in tile.iter_mut().enumerate() {
                    let row = ti * WORD + r;
                    *slot = if row < self.n {
                        self.bits[row * self.words + tj]
                    } else {
                        0
                    };
                }
                transpose64(&mut tile);
                for (c, &word) in tile.iter().enumerate() {
                    let row = tj * WORD + c;
                    if row < self.n && word != 0 {
                        self.bits[row * self.words + ti] |= word;
                    }
                }
            }
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.words + j / WORD] >> (j % WORD) & 1 == 1
    }

    /// Entry as 0 or 1.
    #[inline]
    pub fn entry(&self, i: usize, j: usize) -> u8 {
        self.has_edge(i, j) as u8
    }

    pub(crate) fn row(&self, i: usize) -> &[u64] {
        &self.bits[i * self.words..(i + 1) * self.words]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.row(i).iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn node_degrees(&self) -> Vec<usize> {
        (0..self.n).map(|i| self.degree(i)).collect()
    }

    pub fn edge_count(&self) -> usize {
        self.node_degrees().iter().sum::<usize>() / 2
    }

    pub fn density(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let pairs = self.n * (self.n - 1) / 2;
        self.edge_count() as f64 / pairs as f64
    }

    /// Neighbours of `i` in increasing order.
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.row(i).iter().enumerate().flat_map(|(w, &word)| {
            let mut rest = word;
            std::iter::from_fn(move || {
                if rest == 0 {
                    return None;
                }
                let b = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                Some(w * WORD + b)
            })
        })
    }

    /// Undirected edges `(i, j)` with `i < j`, 0-based, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.edge_count());
        for i in 0..self.n {
            out.extend(self.neighbors(i).filter(|&j| j > i).map(|j| (i, j)));
        }
        out
    }

    pub fn to_dense(&self) -> Vec<Vec<u8>> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.entry(i, j)).collect())
            .collect()
    }

    /// Relabels nodes: node `i` of `self` becomes node `perm[i]` of the result.
    pub fn permute(&self, perm: &[usize]) -> Self {
        assert_eq!(perm.len(), self.n, "permutation length");
        let mut out = Self::empty(self.n);
        for (i, j) in self.edges() {
            out.insert_edge(perm[i], perm[j]);
        }
        out
    }

    /// Subgraph induced by `keep` (0-based, in the given order).
    pub fn induced(&self, keep: &[usize]) -> Self {
        let mut out = Self::empty(keep.len());
        for (a, &i) in keep.iter().enumerate() {
            for (b, &j) in keep.iter().enumerate().skip(a + 1) {
                if self.has_edge(i, j) {
                    out.insert_edge(a, b);
                }
            }
        }
        out
    }

    /// Edges present in both graphs.
    pub fn intersection(&self, other: &AdjacencyMatrix) -> Self {
        assert_eq!(self.n, other.n, "graph sizes");
        let bits = self
            .bits
            .iter()
            .zip(&other.bits)
            .map(|(a, b)| a & b)
            .collect();
        Self {
            n: self.n,
            words: self.words,
            bits,
        }
    }

    /// Edges of `self` absent from `other`.
    pub fn difference(&self, other: &AdjacencyMatrix) -> Self {
        assert_eq!(self.n, other.n, "graph sizes");
        let bits = self
            .bits
            .iter()
            .zip(&other.bits)
            .map(|(a, b)| a & !b)
            .collect();
        Self {
            n: self.n,
            words: self.words,
            bits,
        }
    }

    /// `counts[i * k + v]` is the number of neighbours of `i` in community `v`.
    pub fn community_degree_counts(&self, label: &MembershipLabel) -> Vec<u32> {
        assert_eq!(label.n(), self.n, "label length");
        let k = label.k();
        let masks = label.masks(self.words);
        let mut counts = vec![0u32; self.n * k];
        for i in 0..self.n {
            let row = self.row(i);
            for v in 0..k {
                let mask = &masks[v * self.words..(v + 1) * self.words];
                counts[i * k + v] = row
                    .iter()
                    .zip(mask)
                    .map(|(a, b)| (a & b).count_ones())
                    .sum();
            }
        }
        counts
    }
}

/// In-place transpose of a 64×64 bit matrix, bit `c` of word `r` being entry `(r, c)`.
fn transpose64(a: &mut [u64; 64]) {
    let mut width = 32;
    let mut mask: u64 = 0x0000_0000_ffff_ffff;
    while width != 0 {
        let mut k = 0;
        while k < 64 {
            let t = ((a[k] >> width) ^ a[k + width]) & mask;
            a[k] ^= t << width;
            a[k + width] ^= t;
            k = (k + width + 1) & !width;
        }
        width >>= 1;
        mask ^= mask << width;
    }
}

/// Community assignment of `n` nodes into `k` communities.
///
/// Stored 0-based; external formats are 1-based.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MembershipLabel {
    assignments: Vec<usize>,
    k: usize,
}

impl MembershipLabel {
    pub fn from_zero_based(assignments: Vec<usize>, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::ZeroCommunities);
        }
        if let Some((node, &id)) = assignments.iter().enumerate().find(|(_, &g)| g >= k) {
            return Err(Error::LabelOutOfRange {
                node,
                id: id + 1,
                k,
            });
        }
        Ok(Self { assignments, k })
    }

    pub fn from_one_based(ids: &[usize], k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::ZeroCommunities);
        }
        let mut assignments = Vec::with_capacity(ids.len());
        for (node, &id) in ids.iter().enumerate() {
            if id == 0 || id > k {
                return Err(Error::LabelOutOfRange { node, id, k });
            }
            assignments.push(id - 1);
        }
        Ok(Self { assignments, k })
    }

    /// 1-based ids with `k` taken as the largest id present.
    pub fn from_one_based_infer(ids: &[usize]) -> Result<Self> {
        let k = ids.iter().copied().max().unwrap_or(0);
        Self::from_one_based(ids, k.max(1))
    }

    pub fn n(&self) -> usize {
        self.assignments.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// 0-based community of node `i`.
    #[inline]
    pub fn community(&self, i: usize) -> usize {
        self.assignments[i]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.assignments
    }

    pub fn one_based(&self) -> Vec<usize> {
        self.assignments.iter().map(|g| g + 1).collect()
    }

    pub fn block_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &g in &self.assignments {
            sizes[g] += 1;
        }
        sizes
    }

    pub fn members(&self, community: usize) -> Vec<usize> {
        (0..self.n())
            .filter(|&i| self.assignments[i] == community)
            .collect()
    }

    pub fn ensure_nonempty(&self) -> Result<()> {
        match self.block_sizes().iter().position(|&s| s == 0) {
            Some(u) => Err(Error::EmptyCommunity { community: u + 1 }),
            None => Ok(()),
        }
    }

    /// Communities of size one; estimation cannot fill their diagonal block.
    pub fn singleton_communities(&self) -> Vec<usize> {
        self.block_sizes()
            .iter()
            .enumerate()
            .filter(|(_, &s)| s == 1)
            .map(|(u, _)| u)
            .collect()
    }

    /// Renames community `u` to `mapping[u]` (0-based).
    pub fn relabel(&self, mapping: &[usize]) -> Self {
        assert_eq!(mapping.len(), self.k, "mapping length");
        Self {
            assignments: self.assignments.iter().map(|&g| mapping[g]).collect(),
            k: self.k,
        }
    }

    /// Node `i` becomes node `perm[i]`.
    pub fn permute_nodes(&self, perm: &[usize]) -> Self {
        let mut assignments = vec![0; self.n()];
        for (i, &g) in self.assignments.iter().enumerate() {
            assignments[perm[i]] = g;
        }
        Self {
            assignments,
            k: self.k,
        }
    }

    pub fn restrict(&self, keep: &[usize]) -> Self {
        Self {
            assignments: keep.iter().map(|&i| self.assignments[i]).collect(),
            k: self.k,
        }
    }

    fn masks(&self, words: usize) -> Vec<u64> {
        let mut masks = vec![0u64; self.k * words];
        for (i, &g) in self.assignments.iter().enumerate() {
            masks[g * words + i / WORD] |= 1 << (i % WORD);
        }
        masks
    }
}

/// Symmetric `k × k` matrix of edge probabilities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockMatrix {
    k: usize,
    entries: Vec<f64>,
}

impl BlockMatrix {
    /// Row-major entries; must be symmetric and inside `[0, 1]`.
    pub fn new(k: usize, entries: Vec<f64>) -> Result<Self> {
        if k == 0 {
            return Err(Error::ZeroCommunities);
        }
        if entries.len() != k * k {
            return Err(Error::Shape(format!(
                "block matrix needs {} entries, got {}",
                k * k,
                entries.len()
            )));
        }
        for u in 0..k {
            for v in 0..k {
                let value = entries[u * k + v];
                if !(0.0..=1.0).contains(&value) {
                    return Err(Error::ProbabilityOutOfRange {
                        u: u + 1,
                        v: v + 1,
                        value,
                    });
                }
                if value != entries[v * k + u] {
                    return Err(Error::AsymmetricProbability { i: u + 1, j: v + 1 });
                }
            }
        }
        Ok(Self { k, entries })
    }

    pub fn from_fn(k: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let mut entries = vec![0.0; k * k];
        for u in 0..k {
            for v in u..k {
                let x = f(u, v);
                entries[u * k + v] = x;
                entries[v * k + u] = x;
            }
        }
        Self::new(k, entries)
    }

    pub fn constant(k: usize, p: f64) -> Result<Self> {
        Self::from_fn(k, |_, _| p)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.entries[u * self.k + v]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn max_abs_diff(&self, other: &BlockMatrix) -> f64 {
        assert_eq!(self.k, other.k);
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Rows and columns reordered so that community `u` becomes `mapping[u]`.
    pub fn relabel(&self, mapping: &[usize]) -> Self {
        let k = self.k;
        let mut entries = vec![0.0; k * k];
        for u in 0..k {
            for v in 0..k {
                entries[mapping[u] * k + mapping[v]] = self.entries[u * k + v];
            }
        }
        Self { k, entries }
    }
}

/// A fully specified block model `(g, B)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SbmModel {
    label: MembershipLabel,
    block: BlockMatrix,
}

impl SbmModel {
    pub fn new(label: MembershipLabel, block: BlockMatrix) -> Result<Self> {
        if label.k() != block.k() {
            return Err(Error::KMismatch {
                left: label.k(),
                right: block.k(),
            });
        }
        Ok(Self { label, block })
    }

    pub fn label(&self) -> &MembershipLabel {
        &self.label
    }

    pub fn block(&self) -> &BlockMatrix {
        &self.block
    }

    pub fn n(&self) -> usize {
        self.label.n()
    }

    #[inline]
    pub fn probability(&self, i: usize, j: usize) -> f64 {
        self.block
            .get(self.label.community(i), self.label.community(j))
    }
}
