//! Seeded sampling of block models, membership labels and graphs.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{AdjacencyMatrix, BlockMatrix, MembershipLabel, SbmModel};
use crate::rng::RngSeed;

/// One within-community rate `r (1 + boost)` and one between-community rate `r`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantedPartitionSpec {
    pub k: usize,
    pub r: f64,
    pub boost: f64,
}

impl PlantedPartitionSpec {
    pub fn new(k: usize, r: f64, boost: f64) -> Self {
        Self { k, r, boost }
    }

    pub fn within(&self) -> f64 {
        self.r * (1.0 + self.boost)
    }
}

pub fn planted_partition(spec: &PlantedPartitionSpec) -> Result<BlockMatrix> {
    if spec.k == 0 {
        return Err(Error::ZeroCommunities);
    }
    if !(0.0..=1.0).contains(&spec.r) || spec.boost < 0.0 || !spec.boost.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "planted partition needs r in [0, 1] and boost >= 0, got r={} boost={}",
            spec.r, spec.boost
        )));
    }
    let within = spec.within();
    if within > 1.0 {
        return Err(Error::ProbabilityOverflow { value: within });
    }
    BlockMatrix::from_fn(spec.k, |u, v| if u == v { within } else { spec.r })
}

/// Block matrix with one within-community and one between-community rate.
pub fn two_level_block(k: usize, within: f64, between: f64) -> Result<BlockMatrix> {
    BlockMatrix::from_fn(k, |u, v| if u == v { within } else { between })
}

/// I.i.d. categorical labels.
pub fn sample_membership(n: usize, pi: &[f64], seed: RngSeed) -> Result<MembershipLabel> {
    if pi.is_empty() {
        return Err(Error::InvalidDistribution(
            "empty probability vector".into(),
        ));
    }
    if pi.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
        return Err(Error::InvalidDistribution(
            "entries must be finite and nonnegative".into(),
        ));
    }
    let total: f64 = pi.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidDistribution(format!(
            "entries sum to {total}, not 1"
        )));
    }
    let mut cumulative = Vec::with_capacity(pi.len());
    let mut acc = 0.0;
    for &p in pi {
        acc += p;
        cumulative.push(acc);
    }
    let last = pi.iter().rposition(|&p| p > 0.0).unwrap();
    let mut rng = seed.rng();
    let assignments = (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            cumulative
                .iter()
                .position(|&c| u < c)
                .map(|g| g.min(last))
                .unwrap_or(last)
        })
        .collect();
    MembershipLabel::from_zero_based(assignments, pi.len())
}

/// Contiguous blocks: the first `sizes[0]` nodes get community 1, and so on.
pub fn fixed_blocks(sizes: &[usize]) -> Result<MembershipLabel> {
    if sizes.is_empty() {
        return Err(Error::ZeroCommunities);
    }
    if let Some(u) = sizes.iter().position(|&s| s == 0) {
        return Err(Error::EmptyCommunity { community: u + 1 });
    }
    let assignments = sizes
        .iter()
        .enumerate()
        .flat_map(|(u, &s)| std::iter::repeat_n(u, s))
        .collect();
    MembershipLabel::from_zero_based(assignments, sizes.len())
}

/// `k` contiguous blocks as equal as possible; the first `n % k` are one larger.
pub fn balanced_blocks(n: usize, k: usize) -> Result<MembershipLabel> {
    if k == 0 {
        return Err(Error::ZeroCommunities);
    }
    let sizes: Vec<usize> = (0..k).map(|u| n / k + usize::from(u < n % k)).collect();
    fixed_blocks(&sizes)
}

/// Anything that assigns an edge probability to each unordered node pair.
pub trait EdgeProbabilities {
    fn n(&self) -> usize;
    /// Probability of edge `{i, j}` for `i < j`.
    fn probability(&self, i: usize, j: usize) -> f64;
    /// A partition of the nodes such that the edge probability depends only
    /// on the pair of classes, when one is known.
    fn node_classes(&self) -> Option<NodeClasses> {
        None
    }
}

/// Nodes grouped into classes with a class-pair probability table.
#[derive(Clone, Debug)]
pub struct NodeClasses {
    class_of: Vec<usize>,
    members: Vec<Vec<usize>>,
    probability: Vec<f64>,
}

impl NodeClasses {
    /// `probability[a * count + b]` for classes `a`, `b`; `class_of[i] < count`.
    pub fn new(class_of: Vec<usize>, count: usize, probability: Vec<f64>) -> Self {
        assert_eq!(probability.len(), count * count);
        let mut members = vec![Vec::new(); count];
        for (i, &c) in class_of.iter().enumerate() {
            members[c].push(i);
        }
        Self {
            class_of,
            members,
            probability,
        }
    }

    pub fn class_of(&self) -> &[usize] {
        &self.class_of
    }

    pub fn probability_table(&self) -> &[f64] {
        &self.probability
    }
}

impl EdgeProbabilities for SbmModel {
    fn n(&self) -> usize {
        SbmModel::n(self)
    }

    #[inline]
    fn probability(&self, i: usize, j: usize) -> f64 {
        SbmModel::probability(self, i, j)
    }

    fn node_classes(&self) -> Option<NodeClasses> {
        Some(NodeClasses::new(
            self.label().as_slice().to_vec(),
            self.block().k(),
            self.block().entries().to_vec(),
        ))
    }
}

/// Dense symmetric `n × n` probability matrix. The diagonal is never read.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilityMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl ProbabilityMatrix {
    pub fn new(n: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != n * n {
            return Err(Error::Shape(format!(
                "expected {} entries, got {}",
                n * n,
                entries.len()
            )));
        }
        for i in 0..n {
            for j in (i + 1)..n {
                let p = entries[i * n + j];
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::ProbabilityOutOfRange {
                        u: i + 1,
                        v: j + 1,
                        value: p,
                    });
                }
                if p != entries[j * n + i] {
                    return Err(Error::AsymmetricProbability { i: i + 1, j: j + 1 });
                }
            }
        }
        Ok(Self { n, entries })
    }

    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut entries = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                entries[i * n + j] = f(i, j);
            }
        }
        Self { n, entries }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.entries
            .chunks(self.n.max(1))
            .map(|r| r.to_vec())
            .take(self.n)
            .collect()
    }
}

impl EdgeProbabilities for ProbabilityMatrix {
    fn n(&self) -> usize {
        self.n
    }

    #[inline]
    fn probability(&self, i: usize, j: usize) -> f64 {
        self.get(i, j)
    }
}

const FULL: u64 = 1 << 32;

/// `p` as a 32-bit fixed-point threshold in `0..=2^32`. A uniform `u32` below
/// the threshold has probability exactly `threshold / 2^32`, so 0 and 1 are exact.
#[inline]
fn threshold(p: f64) -> u64 {
    (p * 4_294_967_296.0) as u64
}

/// 64 independent draws of `[u < threshold]` for uniform 32-bit `u`.
///
/// The bits of the 64 uniforms are drawn together, most significant first;
/// a lane is decided at the first bit where it differs from the threshold.
/// About `log2(64) + 2` words are consumed per call instead of 64.
#[inline]
fn bernoulli_lanes<R: RngCore>(t: u64, rng: &mut R) -> u64 {
    if t == 0 {
        return 0;
    }
    if t >= FULL {
        return !0;
    }
    let p = t as u32;
    let mut undecided = !0u64;
    let mut hits = 0u64;
    for level in (0..32).rev() {
        let r = rng.next_u64();
        if (p >> level) & 1 == 1 {
            hits |= undecided & !r;
            undecided &= r;
        } else {
            undecided &= !r;
        }
        if undecided == 0 {
            break;
        }
    }
    hits
}

/// Independent Bernoulli edges over the upper triangle, mirrored.
///
/// The output is a pure function of `(probabilities, seed)`. When the
/// probabilities come with node classes, each row is sampled class by class
/// 64 pairs at a time; otherwise pairs are visited in row-major order with
/// one `u32` draw each.
pub fn sample_graph<P: EdgeProbabilities + ?Sized>(probs: &P, seed: RngSeed) -> AdjacencyMatrix {
    let n = probs.n();
    let mut rng = seed.rng();
    let mut a = AdjacencyMatrix::empty(n);
    match probs.node_classes() {
        Some(classes) => {
            let count = classes.members.len();
            for i in 0..n {
                let ci = classes.class_of[i];
                for (c, members) in classes.members.iter().enumerate() {
                    let t = threshold(classes.probability[ci * count + c]);
                    if t == 0 {
                        continue;
                    }
                    let start = members.partition_point(|&j| j <= i);
                    for chunk in members[start..].chunks(64) {
                        let mut hits = bernoulli_lanes(t, &mut rng);
                        if chunk.len() < 64 {
                            hits &= (1u64 << chunk.len()) - 1;
                        }
                        while hits != 0 {
                            let b = hits.trailing_zeros() as usize;
                            hits &= hits - 1;
                            a.insert_upper(i, chunk[b]);
                        }
                    }
                }
            }
        }
        None => {
            for i in 0..n {
                for j in (i + 1)..n {
                    if (rng.next_u32() as u64) < threshold(probs.probability(i, j)) {
                        a.insert_upper(i, j);
                    }
                }
            }
        }
    }
    a.mirror_upper();
    a
}

pub fn sample_adjacency(model: &SbmModel, seed: RngSeed) -> AdjacencyMatrix {
    sample_graph(model, seed)
}

/// Like [`sample_graph`] but validates that `p` is symmetric with entries in `[0, 1]`.
pub fn sample_adjacency_from_pairwise(p: &[Vec<f64>], seed: RngSeed) -> Result<AdjacencyMatrix> {
    let n = p.len();
    if let Some(row) = p.iter().position(|r| r.len() != n) {
        return Err(Error::NotSquare {
            rows: n,
            row,
            cols: p[row].len(),
        });
    }
    let matrix = ProbabilityMatrix::new(n, p.iter().flatten().copied().collect())?;
    Ok(sample_graph(&matrix, seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planted_partition_entries() {
        let b = planted_partition(&PlantedPartitionSpec::new(3, 0.1, 2.0)).unwrap();
        assert!((b.get(0, 0) - 0.3).abs() < 1e-15);
        assert_eq!(b.get(0, 1), 0.1);
        let b = planted_partition(&PlantedPartitionSpec::new(2, 0.05, 3.0)).unwrap();
        assert!((b.get(1, 1) - 0.2).abs() < 1e-15);
        assert_eq!(b.get(1, 0), 0.05);
        let b = planted_partition(&PlantedPartitionSpec::new(4, 0.3, 0.0)).unwrap();
        assert!(b.entries().iter().all(|&x| x == 0.3));
        assert!(matches!(
            planted_partition(&PlantedPartitionSpec::new(2, 0.3, 3.0)),
            Err(Error::ProbabilityOverflow { .. })
        ));
    }

    #[test]
    fn degenerate_membership() {
        let g = sample_membership(50, &[1.0, 0.0, 0.0], RngSeed::new(3)).unwrap();
        assert!(g.as_slice().iter().all(|&c| c == 0));
        assert_eq!(g.k(), 3);
        assert!(sample_membership(5, &[0.5, 0.6], RngSeed::new(0)).is_err());
        assert!(sample_membership(5, &[1.5, -0.5], RngSeed::new(0)).is_err());
    }

    #[test]
    fn membership_within_binomial_band() {
        let pi = [1.0 / 3.0; 3];
        let g = sample_membership(600, &pi, RngSeed::new(11)).unwrap();
        for s in g.block_sizes() {
            assert!((165..=235).contains(&s), "block size {s}");
        }
        let again = sample_membership(600, &pi, RngSeed::new(11)).unwrap();
        assert_eq!(g, again);
    }

    #[test]
    fn fixed_blocks_layout() {
        assert_eq!(fixed_blocks(&[2, 2]).unwrap().one_based(), vec![1, 1, 2, 2]);
        assert_eq!(fixed_blocks(&[1]).unwrap().one_based(), vec![1]);
        assert_eq!(
            fixed_blocks(&[200, 200, 200]).unwrap().block_sizes(),
            vec![200; 3]
        );
        assert!(fixed_blocks(&[2, 0]).is_err());
        assert_eq!(balanced_blocks(7, 3).unwrap().block_sizes(), vec![3, 2, 2]);
    }

    #[test]
    fn extreme_probabilities() {
        let g = fixed_blocks(&[4, 5]).unwrap();
        let zero = SbmModel::new(g.clone(), BlockMatrix::constant(2, 0.0).unwrap()).unwrap();
        assert_eq!(sample_adjacency(&zero, RngSeed::new(1)).edge_count(), 0);
        let one = SbmModel::new(g, BlockMatrix::constant(2, 1.0).unwrap()).unwrap();
        assert_eq!(
            sample_adjacency(&one, RngSeed::new(1)),
            AdjacencyMatrix::complete(9)
        );
    }

    #[test]
    fn pairwise_sampler_contract() {
        let n = 6;
        let mut p = vec![vec![0.0; n]; n];
        assert_eq!(
            sample_adjacency_from_pairwise(&p, RngSeed::new(2))
                .unwrap()
                .edge_count(),
            0
        );
        p[0][1] = 1.0;
        p[1][0] = 1.0;
        for s in 0..20 {
            let a = sample_adjacency_from_pairwise(&p, RngSeed::new(s)).unwrap();
            assert!(a.has_edge(0, 1));
            assert_eq!(a.edge_count(), 1);
        }
        p[2][3] = 0.5;
        assert!(matches!(
            sample_adjacency_from_pairwise(&p, RngSeed::new(0)),
            Err(Error::AsymmetricProbability { .. })
        ));
        p[3][2] = 0.5;
        p[4][5] = 1.5;
        p[5][4] = 1.5;
        assert!(matches!(
            sample_adjacency_from_pairwise(&p, RngSeed::new(0)),
            Err(Error::ProbabilityOutOfRange { .. })
        ));
    }

    #[test]
    fn bernoulli_lanes_are_exact_at_the_extremes() {
        let mut rng = RngSeed::new(0).rng();
        assert_eq!(bernoulli_lanes(0, &mut rng), 0);
        assert_eq!(bernoulli_lanes(FULL, &mut rng), !0);
        // threshold 2^31 is a single fair bit per lane
        let ones: u32 = (0..1000)
            .map(|_| bernoulli_lanes(1 << 31, &mut rng).count_ones())
            .sum();
        let se = (64_000.0f64 * 0.25).sqrt();
        assert!((ones as f64 - 32_000.0).abs() < 4.0 * se);
    }

    #[test]
    fn class_and_pairwise_paths_agree_in_distribution() {
        // per-block edge frequencies from both samplers within 4 SE of B
        let g = fixed_blocks(&[40, 60]).unwrap();
        let b = BlockMatrix::new(2, vec![0.3, 0.07, 0.07, 0.6]).unwrap();
        let model = SbmModel::new(g.clone(), b.clone()).unwrap();
        let dense = ProbabilityMatrix::from_fn(100, |i, j| model.probability(i, j));
        for (name, a) in [
            ("classes", sample_graph(&model, RngSeed::new(3))),
            ("pairwise", sample_graph(&dense, RngSeed::new(3))),
        ] {
            let est = crate::estimate::estimate_block_matrix(&a, &g, Default::default()).unwrap();
            for (u, v, pairs) in [(0, 0, 780.0), (0, 1, 2400.0), (1, 1, 1770.0)] {
                let p: f64 = b.get(u, v);
                let se = (p * (1.0 - p) / pairs).sqrt();
                assert!((est.raw.get(u, v) - p).abs() < 4.0 * se, "{name} ({u},{v})");
            }
        }
    }

    #[test]
    fn density_within_three_standard_errors() {
        let g = fixed_blocks(&[1000]).unwrap();
        let model = SbmModel::new(g, BlockMatrix::constant(1, 0.3).unwrap()).unwrap();
        let a = sample_adjacency(&model, RngSeed::new(5));
        let pairs = 1000.0 * 999.0 / 2.0;
        let se = (0.3f64 * 0.7 / pairs).sqrt();
        assert!(
            (a.density() - 0.3).abs() < 3.0 * se,
            "density {}",
            a.density()
        );
    }
}
