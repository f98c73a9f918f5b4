//! Maximum-likelihood block probabilities given a labelling.
//!
//! Off-diagonal blocks are `edges(u, v) / (n_u n_v)`. Diagonal blocks count
//! ordered pairs `i != j` inside the community, so each edge contributes twice
//! over `n_u (n_u - 1)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{AdjacencyMatrix, BlockMatrix, MembershipLabel};

/// Margin `m` that keeps every estimate inside `[m, 1 - m]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub enum ClampPolicy {
    /// `1 / (n_u n_v + 1)`: below any attainable nonzero frequency, so only
    /// exact 0 and 1 estimates move.
    #[default]
    InverseCount,
    Fixed(f64),
}

impl ClampPolicy {
    pub fn margin(&self, n_u: usize, n_v: usize) -> f64 {
        match *self {
            ClampPolicy::InverseCount => 1.0 / ((n_u * n_v) as f64 + 1.0),
            ClampPolicy::Fixed(m) => m,
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            ClampPolicy::Fixed(m) if !(m > 0.0 && m < 0.5) => Err(Error::InvalidArgument(format!(
                "clamp margin must lie in (0, 1/2), got {m}"
            ))),
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockEstimate {
    /// Clamped estimate.
    pub block: BlockMatrix,
    /// Estimate before clamping.
    pub raw: BlockMatrix,
    /// Number of unordered block pairs `(u <= v)` the clamp moved.
    pub clamp_hits: usize,
}

/// Per-block edge sums over ordered pairs: `sums[u * k + v] = Σ_{i∈u, j∈v} A_ij`.
pub(crate) fn block_edge_sums(counts: &[u32], label: &MembershipLabel) -> Vec<u64> {
    let k = label.k();
    let mut sums = vec![0u64; k * k];
    for i in 0..label.n() {
        let u = label.community(i);
        for v in 0..k {
            sums[u * k + v] += counts[i * k + v] as u64;
        }
    }
    sums
}

pub(crate) fn estimate_from_counts(
    counts: &[u32],
    label: &MembershipLabel,
    policy: ClampPolicy,
) -> Result<BlockEstimate> {
    policy.validate()?;
    label.ensure_nonempty()?;
    if let Some(&u) = label.singleton_communities().first() {
        return Err(Error::SingletonDiagonalBlock { community: u + 1 });
    }
    let k = label.k();
    let sizes = label.block_sizes();
    let sums = block_edge_sums(counts, label);
    let mut raw = vec![0.0; k * k];
    let mut clamped = vec![0.0; k * k];
    let mut clamp_hits = 0;
    for u in 0..k {
        for v in u..k {
            let denom = if u == v {
                sizes[u] * (sizes[u] - 1)
            } else {
                sizes[u] * sizes[v]
            };
            let p = sums[u * k + v] as f64 / denom as f64;
            let m = policy.margin(sizes[u], sizes[v]);
            let c = p.clamp(m, 1.0 - m);
            if c != p {
                clamp_hits += 1;
            }
            raw[u * k + v] = p;
            raw[v * k + u] = p;
            clamped[u * k + v] = c;
            clamped[v * k + u] = c;
        }
    }
    Ok(BlockEstimate {
        block: BlockMatrix::new(k, clamped)?,
        raw: BlockMatrix::new(k, raw)?,
        clamp_hits,
    })
}

pub fn estimate_block_matrix(
    a: &AdjacencyMatrix,
    label: &MembershipLabel,
    policy: ClampPolicy,
) -> Result<BlockEstimate> {
    if a.n() != label.n() {
        return Err(Error::SizeMismatch {
            left: a.n(),
            right: label.n(),
        });
    }
    let counts = a.community_degree_counts(label);
    estimate_from_counts(&counts, label, policy)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn label(ids: &[usize], k: usize) -> MembershipLabel {
        MembershipLabel::from_one_based(ids, k).unwrap()
    }

    #[test]
    fn hand_counted_example() {
        // edges {1-2, 1-4, 2-5, 4-5} in 1-based ids
        let a = AdjacencyMatrix::from_edges(5, &[(0, 1), (0, 3), (1, 4), (3, 4)]).unwrap();
        let est =
            estimate_block_matrix(&a, &label(&[1, 1, 1, 2, 2], 2), ClampPolicy::default()).unwrap();
        assert!((est.raw.get(0, 0) - 1.0 / 3.0).abs() < 1e-15);
        assert!((est.raw.get(0, 1) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(est.raw.get(1, 1), 1.0);
        // 1 - 1/(2*2 + 1)
        assert!((est.block.get(1, 1) - 0.8).abs() < 1e-15);
        assert_eq!(est.clamp_hits, 1);
    }

    #[test]
    fn complete_and_empty_hit_the_margins() {
        let g = label(&[1, 1, 1, 2, 2, 2], 2);
        let full = estimate_block_matrix(&AdjacencyMatrix::complete(6), &g, ClampPolicy::default())
            .unwrap();
        assert!(full.raw.entries().iter().all(|&p| p == 1.0));
        assert!((full.block.get(0, 1) - (1.0 - 0.1)).abs() < 1e-15);
        assert_eq!(full.clamp_hits, 3);
        let none = estimate_block_matrix(&AdjacencyMatrix::empty(6), &g, ClampPolicy::Fixed(0.01))
            .unwrap();
        assert!(none.raw.entries().iter().all(|&p| p == 0.0));
        assert!(none.block.entries().iter().all(|&p| p == 0.01));
    }

    #[test]
    fn rejects_empty_and_singleton_communities() {
        let a = AdjacencyMatrix::empty(3);
        assert!(matches!(
            estimate_block_matrix(&a, &label(&[1, 1, 1], 2), ClampPolicy::default()),
            Err(Error::EmptyCommunity { community: 2 })
        ));
        assert!(matches!(
            estimate_block_matrix(&a, &label(&[1, 1, 2], 2), ClampPolicy::default()),
            Err(Error::SingletonDiagonalBlock { community: 2 })
        ));
        assert!(estimate_block_matrix(&a, &label(&[1, 1, 1], 1), ClampPolicy::Fixed(0.7)).is_err());
    }

    #[test]
    fn relabelling_permutes_the_estimate() {
        let a = AdjacencyMatrix::from_edges(6, &[(0, 1), (0, 3), (2, 5), (4, 5), (1, 4)]).unwrap();
        let g = label(&[1, 1, 2, 2, 3, 3], 3);
        let mapping = [2, 0, 1];
        let e1 = estimate_block_matrix(&a, &g, ClampPolicy::default()).unwrap();
        let e2 = estimate_block_matrix(&a, &g.relabel(&mapping), ClampPolicy::default()).unwrap();
        assert_eq!(e1.raw.relabel(&mapping), e2.raw);
    }
}
