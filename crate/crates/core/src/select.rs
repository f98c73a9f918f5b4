//! Number of communities by sequential goodness-of-fit testing.
//!
//! For `K0 = 1, 2, ...` the graph is clustered into `K0` communities and a
//! goodness-of-fit test built on the single-sample maximum deviation is run;
//! the first `K0` that is not rejected is the estimate.
//!
//! Two tests are available. [`SelectionRule::Plain`] evaluates the
//! single-sample statistic on the detected labels directly. Its deviations are
//! sums over whole fitted communities, so merging communities whose members
//! have equal expected degree into them goes unnoticed (for example `K0 = 1` on
//! a balanced planted partition). [`SelectionRule::Refined`], the default,
//! splits the node pairs at random into two halves. The first half is
//! clustered into `K0 + 1` groups; deviations of the second half from the
//! `K0`-community fit are summed within those finer groups, which exposes a
//! merged community. Because the groups do not depend on the second half, the
//! statistic is calibrated by a parametric bootstrap from the fitted `K0`
//! model, the same affine Gumbel correction used by the two-sample test.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bootstrap::{bootstrap_corrected_statistic, DEFAULT_REPLICATES};
use crate::community::{detect_communities, KMeansConfig};
use crate::error::{Error, Result};
use crate::estimate::{estimate_block_matrix, ClampPolicy};
use crate::generate::{sample_adjacency, sample_graph, ProbabilityMatrix};
use crate::graph::{AdjacencyMatrix, MembershipLabel, SbmModel};
use crate::gumbel::{fit_mle, GumbelParams};
use crate::rng::RngSeed;
use crate::stat::{normalize, single_sample_statistic, SINGLE_SAMPLE_LOGLOG};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionRule {
    Plain,
    #[default]
    Refined,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionConfig {
    pub rule: SelectionRule,
    pub detector: KMeansConfig,
    /// Bootstrap replicates per candidate for the refined rule.
    pub replicates: usize,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            rule: SelectionRule::default(),
            detector: KMeansConfig::default(),
            replicates: DEFAULT_REPLICATES,
        }
    }
}

/// One step of the search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KTrial {
    pub k0: usize,
    /// `None` when the detected labelling could not be tested (a community
    /// too small to estimate); such a step counts as a rejection.
    pub t_n: Option<f64>,
    /// Bootstrap-corrected statistic (refined rule only).
    pub t_boot: Option<f64>,
    pub p_value: f64,
    pub reject: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KSelectionReport {
    pub k_hat: usize,
    pub rule: SelectionRule,
    pub tested: Vec<KTrial>,
    pub alpha: f64,
    pub k_max: usize,
}

/// Sequential estimate of the community count with the default rule.
pub fn estimate_k(
    a: &AdjacencyMatrix,
    k_max: usize,
    alpha: f64,
    config: &KMeansConfig,
) -> Result<KSelectionReport> {
    estimate_k_with(
        a,
        k_max,
        alpha,
        &SelectionConfig {
            detector: *config,
            ..Default::default()
        },
    )
}

pub fn estimate_k_with(
    a: &AdjacencyMatrix,
    k_max: usize,
    alpha: f64,
    config: &SelectionConfig,
) -> Result<KSelectionReport> {
    let n = a.n();
    if k_max == 0 || 2 * k_max > n {
        return Err(Error::InvalidArgument(format!(
            "need 1 <= K_max <= n/2, got K_max={k_max}, n={n}"
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    let seed = config.detector.seed;
    let mask = match config.rule {
        SelectionRule::Plain => None,
        SelectionRule::Refined => Some(pair_split(n, seed.derive(u64::MAX))),
    };
    let mut tested = Vec::new();
    for k0 in 1..=k_max {
        let step = seed.derive(k0 as u64);
        let g = detect_communities(
            a,
            k0,
            &KMeansConfig {
                seed: step.derive(0),
                ..config.detector
            },
        )?;
        let outcome = match &mask {
            None => single_sample_statistic(a, k0, &g, alpha).map(|r| KTrial {
                k0,
                t_n: Some(r.t_n),
                t_boot: None,
                p_value: r.p_value,
                reject: r.reject,
            }),
            Some(mask) => refined_trial(a, &g, mask, alpha, config, step),
        };
        let trial = match outcome {
            Ok(t) => t,
            Err(e) if e.is_numerical() => return Err(e),
            Err(_) => KTrial {
                k0,
                t_n: None,
                t_boot: None,
                p_value: 0.0,
                reject: true,
            },
        };
        let accepted = !trial.reject;
        tested.push(trial);
        if accepted {
            return Ok(KSelectionReport {
                k_hat: k0,
                rule: config.rule,
                tested,
                alpha,
                k_max,
            });
        }
    }
    Err(Error::SearchExhausted { k_max })
}

/// Each node pair lands in the second half with probability 1/2.
fn pair_split(n: usize, seed: RngSeed) -> AdjacencyMatrix {
    sample_graph(&ProbabilityMatrix::from_fn(n, |_, _| 0.5), seed)
}

fn refined_trial(
    a: &AdjacencyMatrix,
    g: &MembershipLabel,
    mask: &AdjacencyMatrix,
    alpha: f64,
    config: &SelectionConfig,
    step: RngSeed,
) -> Result<KTrial> {
    let k0 = g.k();
    let first_half = a.difference(mask);
    let groups = detect_communities(
        &first_half,
        k0 + 1,
        &KMeansConfig {
            seed: step.derive(1),
            ..config.detector
        },
    )?;
    let t_n = refined_statistic(a, mask, g, &groups)?;
    let block = estimate_block_matrix(a, g, ClampPolicy::default())?.block;
    let model = SbmModel::new(g.clone(), block)?;
    let replicates = (0..config.replicates.max(2))
        .into_par_iter()
        .map(|r| {
            let ar = sample_adjacency(&model, step.derive(2).derive(r as u64));
            refined_statistic(&ar, mask, g, &groups)
        })
        .collect::<Result<Vec<f64>>>()?;
    let fitted = fit_mle(&replicates)?;
    let t_boot = bootstrap_corrected_statistic(t_n, &fitted);
    let reference = GumbelParams::reference();
    Ok(KTrial {
        k0,
        t_n: Some(t_n),
        t_boot: Some(t_boot),
        p_value: reference.sf(t_boot),
        reject: t_boot >= reference.quantile(1.0 - alpha)?,
    })
}

/// Maximum deviation of the pairs in `mask` from the `g` fit, summed within `groups`.
///
/// Entry `(i, v)` is `Σ_j (A_ij - B_{g(i) g(j)}) / sqrt(B (1 - B))` over partners
/// `j` in group `v` paired with `i` in `mask`, divided by the square root of
/// their number. `B` is estimated from the masked pairs alone.
pub(crate) fn refined_statistic(
    a: &AdjacencyMatrix,
    mask: &AdjacencyMatrix,
    g: &MembershipLabel,
    groups: &MembershipLabel,
) -> Result<f64> {
    let n = a.n();
    let (k0, kc) = (g.k(), groups.k());
    let count = kc * k0;
    let joint = MembershipLabel::from_zero_based(
        (0..n)
            .map(|i| groups.community(i) * k0 + g.community(i))
            .collect(),
        count,
    )?;
    let edges = a.intersection(mask).community_degree_counts(&joint);
    let pairs = mask.community_degree_counts(&joint);

    let mut edge_sum = vec![0u64; k0 * k0];
    let mut pair_sum = vec![0u64; k0 * k0];
    for i in 0..n {
        let u = g.community(i);
        for c in 0..count {
            edge_sum[u * k0 + c % k0] += edges[i * count + c] as u64;
            pair_sum[u * k0 + c % k0] += pairs[i * count + c] as u64;
        }
    }
    let block: Vec<(f64, f64)> = edge_sum
        .iter()
        .zip(&pair_sum)
        .map(|(&e, &m)| {
            let b = if m == 0 {
                0.5
            } else {
                let margin = 1.0 / (m as f64 + 1.0);
                (e as f64 / m as f64).clamp(margin, 1.0 - margin)
            };
            (b, (b * (1.0 - b)).sqrt())
        })
        .collect();

    let mut l_n: f64 = 0.0;
    for i in 0..n {
        let u = g.community(i);
        for v in 0..kc {
            let (mut num, mut m) = (0.0, 0u64);
            for w in 0..k0 {
                let c = v * k0 + w;
                let (b, sd) = block[u * k0 + w];
                let (e, mc) = (edges[i * count + c] as f64, pairs[i * count + c]);
                num += (e - mc as f64 * b) / sd;
                m += mc as u64;
            }
            if m > 0 {
                l_n = l_n.max((num / (m as f64).sqrt()).abs());
            }
        }
    }
    Ok(normalize(l_n, kc, n, SINGLE_SAMPLE_LOGLOG))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::{balanced_blocks, fixed_blocks, planted_partition, PlantedPartitionSpec};
    use crate::graph::BlockMatrix;

    fn planted(k: usize, boost: f64, n: usize, seed: u64) -> AdjacencyMatrix {
        let g = balanced_blocks(n, k).unwrap();
        let b = planted_partition(&PlantedPartitionSpec::new(k, 0.1, boost)).unwrap();
        sample_adjacency(&SbmModel::new(g, b).unwrap(), RngSeed::new(seed))
    }

    #[test]
    fn stops_at_first_acceptance() {
        let a = planted(3, 2.0, 300, 1);
        for rule in [SelectionRule::Plain, SelectionRule::Refined] {
            let cfg = SelectionConfig {
                rule,
                replicates: 30,
                ..Default::default()
            };
            let r = estimate_k_with(&a, 5, 0.05, &cfg).unwrap();
            let last = r.tested.last().unwrap();
            assert_eq!(last.k0, r.k_hat);
            assert!(!last.reject);
            assert!(r.tested[..r.tested.len() - 1].iter().all(|t| t.reject));
        }
    }

    #[test]
    fn refined_rule_rejects_merged_communities() {
        let a = planted(3, 2.0, 300, 2);
        let cfg = SelectionConfig {
            replicates: 30,
            ..Default::default()
        };
        let r = estimate_k_with(&a, 4, 0.05, &cfg).unwrap();
        assert!(r.tested[0].reject && r.tested[1].reject, "{:?}", r.tested);
    }

    #[test]
    fn too_small_search_is_exhausted() {
        // unequal block sizes make degrees informative for the plain rule too
        let g = fixed_blocks(&[60, 100, 140]).unwrap();
        let b = planted_partition(&PlantedPartitionSpec::new(3, 0.1, 4.0)).unwrap();
        let a = sample_adjacency(&SbmModel::new(g, b).unwrap(), RngSeed::new(3));
        for rule in [SelectionRule::Plain, SelectionRule::Refined] {
            let cfg = SelectionConfig {
                rule,
                replicates: 30,
                ..Default::default()
            };
            assert!(matches!(
                estimate_k_with(&a, 1, 0.05, &cfg),
                Err(Error::SearchExhausted { k_max: 1 })
            ));
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let a = planted(2, 2.0, 200, 4);
        let cfg = SelectionConfig {
            replicates: 20,
            ..Default::default()
        };
        assert_eq!(
            estimate_k_with(&a, 3, 0.05, &cfg).unwrap(),
            estimate_k_with(&a, 3, 0.05, &cfg).unwrap()
        );
    }

    #[test]
    fn refined_statistic_with_full_mask_matches_plain() {
        // every pair kept and groups equal to g: the refined entries are the plain ones
        let g = fixed_blocks(&[5, 6]).unwrap();
        let b = BlockMatrix::new(2, vec![0.5, 0.2, 0.2, 0.6]).unwrap();
        let a = sample_adjacency(&SbmModel::new(g.clone(), b).unwrap(), RngSeed::new(5));
        let full = AdjacencyMatrix::complete(11);
        let refined = refined_statistic(&a, &full, &g, &g).unwrap();
        let plain = single_sample_statistic(&a, 2, &g, 0.05).unwrap();
        assert!(
            (refined - plain.t_n).abs() < 1e-10,
            "{refined} vs {}",
            plain.t_n
        );
    }

    #[test]
    fn bounds_checked() {
        let a = planted(2, 1.0, 10, 3);
        assert!(estimate_k(&a, 6, 0.05, &KMeansConfig::default()).is_err());
        assert!(estimate_k(&a, 0, 0.05, &KMeansConfig::default()).is_err());
    }
}
