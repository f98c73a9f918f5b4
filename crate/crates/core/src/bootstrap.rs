//! Parametric bootstrap correction of the two-sample statistic.
//!
//! 1. Fit `(gx, Bx)` and `(gy, By)` and compute `T_n`.
//! 2. Draw `M` pairs of graphs from the averaged probabilities
//!    `P_ij = (Bx[gx(i), gx(j)] + By[gy(i), gy(j)]) / 2` and recompute `T_n` on each,
//!    re-estimating both block matrices.
//! 3. Fit a Gumbel law to the replicates by maximum likelihood.
//! 4. Map `T_n` affinely so the fitted law lands on the reference one.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::community::{detect_pair, KMeansConfig};
use crate::error::{Error, Result};
use crate::estimate::ClampPolicy;
use crate::generate::{sample_graph, EdgeProbabilities, NodeClasses, ProbabilityMatrix};
use crate::graph::AdjacencyMatrix;
use crate::graph::{BlockMatrix, MembershipLabel};
use crate::gumbel::{fit_mle, GumbelParams};
use crate::rng::RngSeed;
use crate::stat::{two_sample_fit, TestReport};

/// Replicate count used when none is given.
pub const DEFAULT_REPLICATES: usize = 100;

/// The averaged fitted edge probabilities, kept in factored form.
#[derive(Clone, Debug)]
pub struct AveragedModel {
    gx: MembershipLabel,
    bx: BlockMatrix,
    gy: MembershipLabel,
    by: BlockMatrix,
}

impl AveragedModel {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let px = self.bx.get(self.gx.community(i), self.gx.community(j));
        let py = self.by.get(self.gy.community(i), self.gy.community(j));
        (px + py) / 2.0
    }

    /// Dense form with a zero diagonal.
    pub fn to_matrix(&self) -> ProbabilityMatrix {
        ProbabilityMatrix::from_fn(
            self.gx.n(),
            |i, j| if i == j { 0.0 } else { self.get(i, j) },
        )
    }
}

impl EdgeProbabilities for AveragedModel {
    fn n(&self) -> usize {
        self.gx.n()
    }

    fn probability(&self, i: usize, j: usize) -> f64 {
        self.get(i, j)
    }

    /// Nodes sharing both their `gx` and `gy` community share every probability.
    fn node_classes(&self) -> Option<NodeClasses> {
        let (kx, ky) = (self.gx.k(), self.gy.k());
        let count = kx * ky;
        let class_of = (0..self.gx.n())
            .map(|i| self.gx.community(i) * ky + self.gy.community(i))
            .collect();
        let mut probability = vec![0.0; count * count];
        for a in 0..count {
            for b in 0..count {
                let px = self.bx.get(a / ky, b / ky);
                let py = self.by.get(a % ky, b % ky);
                probability[a * count + b] = (px + py) / 2.0;
            }
        }
        Some(NodeClasses::new(class_of, count, probability))
    }
}

pub fn average_probability_matrix(
    gx: &MembershipLabel,
    bx: &BlockMatrix,
    gy: &MembershipLabel,
    by: &BlockMatrix,
) -> Result<AveragedModel> {
    if gx.n() != gy.n() {
        return Err(Error::SizeMismatch {
            left: gx.n(),
            right: gy.n(),
        });
    }
    if gx.k() != bx.k() {
        return Err(Error::KMismatch {
            left: gx.k(),
            right: bx.k(),
        });
    }
    if gy.k() != by.k() {
        return Err(Error::KMismatch {
            left: gy.k(),
            right: by.k(),
        });
    }
    Ok(AveragedModel {
        gx: gx.clone(),
        bx: bx.clone(),
        gy: gy.clone(),
        by: by.clone(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BootstrapConfig {
    pub replicates: usize,
    pub seed: RngSeed,
    /// Re-run community detection on every replicate instead of reusing the observed labels.
    pub redetect: bool,
    pub detector: KMeansConfig,
    pub clamp: ClampPolicy,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            replicates: DEFAULT_REPLICATES,
            seed: RngSeed::new(0),
            redetect: false,
            detector: KMeansConfig::default(),
            clamp: ClampPolicy::default(),
        }
    }
}

impl BootstrapConfig {
    pub fn new(replicates: usize, seed: RngSeed) -> Self {
        Self {
            replicates,
            seed,
            ..Self::default()
        }
    }
}

/// Replicate statistics `T_n^(m)`, `m = 0..M`, in order of `m`.
pub fn bootstrap_null_replicates<P: EdgeProbabilities + Sync + ?Sized>(
    p: &P,
    gx: &MembershipLabel,
    gy: &MembershipLabel,
    m: usize,
    seed: RngSeed,
) -> Result<Vec<f64>> {
    let config = BootstrapConfig::new(m, seed);
    replicates_with(p, gx, gy, &config)
}

fn replicates_with<P: EdgeProbabilities + Sync + ?Sized>(
    p: &P,
    gx: &MembershipLabel,
    gy: &MembershipLabel,
    config: &BootstrapConfig,
) -> Result<Vec<f64>> {
    if config.replicates < 2 {
        return Err(Error::InvalidArgument(format!(
            "bootstrap needs at least 2 replicates, got {}",
            config.replicates
        )));
    }
    if p.n() != gx.n() || p.n() != gy.n() {
        return Err(Error::SizeMismatch {
            left: p.n(),
            right: gx.n(),
        });
    }
    if gx.k() != gy.k() {
        return Err(Error::KMismatch {
            left: gx.k(),
            right: gy.k(),
        });
    }
    // Node classes are computed once and shared by every draw.
    let classes = Classified {
        inner: p,
        classes: p.node_classes(),
    };
    (0..config.replicates)
        .into_par_iter()
        .map(|m| {
            let stream = config.seed.derive(m as u64);
            let x = sample_graph(&classes, stream.derive(0));
            let y = sample_graph(&classes, stream.derive(1));
            let (lx, ly);
            let (gx, gy) = if config.redetect {
                let cfg = KMeansConfig {
                    seed: stream.derive(2),
                    ..config.detector
                };
                (lx, ly) = detect_pair(&x, &y, gx.k(), &cfg)?;
                (&lx, &ly)
            } else {
                (gx, gy)
            };
            Ok(two_sample_fit(&x, &y, gx, gy, 0.05, config.clamp)?
                .report
                .t_n)
        })
        .collect()
}

struct Classified<'a, P: ?Sized> {
    inner: &'a P,
    classes: Option<NodeClasses>,
}

impl<P: EdgeProbabilities + ?Sized> EdgeProbabilities for Classified<'_, P> {
    fn n(&self) -> usize {
        self.inner.n()
    }

    fn probability(&self, i: usize, j: usize) -> f64 {
        self.inner.probability(i, j)
    }

    fn node_classes(&self) -> Option<NodeClasses> {
        self.classes.clone()
    }
}

pub fn fit_gumbel_mle(samples: &[f64]) -> Result<GumbelParams> {
    fit_mle(samples)
}

/// `mu + beta (T_n - mu_hat) / beta_hat` with the reference `(mu, beta)`.
pub fn bootstrap_corrected_statistic(t_n: f64, fitted: &GumbelParams) -> f64 {
    let reference = GumbelParams::reference();
    reference.mu + reference.beta * (t_n - fitted.mu) / fitted.beta
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    /// Uncorrected test on the observed graphs.
    pub observed: TestReport,
    pub t_boot: f64,
    pub fitted: GumbelParams,
    pub m: usize,
    pub replicates: Vec<f64>,
    pub p_value: f64,
    pub reject: bool,
}

pub fn run_bootstrap_test(
    x: &AdjacencyMatrix,
    y: &AdjacencyMatrix,
    gx: &MembershipLabel,
    gy: &MembershipLabel,
    alpha: f64,
    config: &BootstrapConfig,
) -> Result<BootstrapResult> {
    let fit = two_sample_fit(x, y, gx, gy, alpha, config.clamp)?;
    let p = average_probability_matrix(gx, &fit.bx.block, gy, &fit.by.block)?;
    let replicates = replicates_with(&p, gx, gy, config)?;
    let fitted = fit_gumbel_mle(&replicates)?;
    let t_boot = bootstrap_corrected_statistic(fit.report.t_n, &fitted);
    let reference = GumbelParams::reference();
    Ok(BootstrapResult {
        t_boot,
        fitted,
        m: config.replicates,
        p_value: reference.sf(t_boot),
        reject: t_boot >= fit.report.critical_value,
        observed: fit.report,
        replicates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::{
        balanced_blocks, planted_partition, sample_adjacency, PlantedPartitionSpec,
    };
    use crate::graph::SbmModel;

    fn null_pair(n: usize, seed: u64) -> (AdjacencyMatrix, AdjacencyMatrix, MembershipLabel) {
        let g = balanced_blocks(n, 2).unwrap();
        let b = planted_partition(&PlantedPartitionSpec::new(2, 0.1, 2.0)).unwrap();
        let model = SbmModel::new(g.clone(), b).unwrap();
        let s = RngSeed::new(seed);
        (
            sample_adjacency(&model, s.derive(0)),
            sample_adjacency(&model, s.derive(1)),
            g,
        )
    }

    #[test]
    fn averaged_model_matches_entrywise_formula() {
        let gx = MembershipLabel::from_one_based(&[1, 1, 2, 2, 1], 2).unwrap();
        let gy = MembershipLabel::from_one_based(&[2, 1, 1, 2, 2], 2).unwrap();
        let bx = BlockMatrix::new(2, vec![0.2, 0.4, 0.4, 0.6]).unwrap();
        let by = BlockMatrix::new(2, vec![0.1, 0.3, 0.3, 0.9]).unwrap();
        let p = average_probability_matrix(&gx, &bx, &gy, &by).unwrap();
        let classes = p.node_classes().unwrap();
        let dense = p.to_matrix();
        for i in 0..5 {
            for j in 0..5 {
                if i == j {
                    continue;
                }
                let want = (bx.get(gx.community(i), gx.community(j))
                    + by.get(gy.community(i), gy.community(j)))
                    / 2.0;
                assert_eq!(p.get(i, j), want);
                assert_eq!(dense.get(i, j), want);
                let count = 4;
                let (ci, cj) = (
                    gx.community(i) * 2 + gy.community(i),
                    gx.community(j) * 2 + gy.community(j),
                );
                assert_eq!(classes_probability(&classes, ci * count + cj), want);
            }
        }
    }

    fn classes_probability(c: &NodeClasses, idx: usize) -> f64 {
        c.probability_table()[idx]
    }

    #[test]
    fn midpoint_of_extremes() {
        let g = MembershipLabel::from_one_based(&[1, 1, 2], 2).unwrap();
        let lo = BlockMatrix::constant(2, 0.01).unwrap();
        let hi = BlockMatrix::constant(2, 0.99).unwrap();
        let p = average_probability_matrix(&g, &lo, &g, &hi).unwrap();
        assert!((p.get(0, 2) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn replicates_are_deterministic() {
        let (x, y, g) = null_pair(120, 3);
        let cfg = BootstrapConfig::new(4, RngSeed::new(11));
        let a = run_bootstrap_test(&x, &y, &g, &g, 0.05, &cfg).unwrap();
        let b = run_bootstrap_test(&x, &y, &g, &g, 0.05, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.replicates.len(), 4);
    }

    #[test]
    fn minimal_replicate_count() {
        let (x, y, g) = null_pair(60, 4);
        let fit = two_sample_fit(&x, &y, &g, &g, 0.05, ClampPolicy::default()).unwrap();
        let p = average_probability_matrix(&g, &fit.bx.block, &g, &fit.by.block).unwrap();
        assert_eq!(
            bootstrap_null_replicates(&p, &g, &g, 2, RngSeed::new(0))
                .unwrap()
                .len(),
            2
        );
        assert!(bootstrap_null_replicates(&p, &g, &g, 1, RngSeed::new(0)).is_err());
    }

    #[test]
    fn correction_is_affine() {
        let r = GumbelParams::reference();
        assert!((bootstrap_corrected_statistic(1.7, &r) - 1.7).abs() < 1e-15);
        let f = GumbelParams::new(0.4, 1.3).unwrap();
        assert!((bootstrap_corrected_statistic(0.4, &f) - r.mu).abs() < 1e-15);
        assert!(bootstrap_corrected_statistic(1.0, &f) < bootstrap_corrected_statistic(1.01, &f));
    }

    #[test]
    fn redetection_runs() {
        let (x, y, g) = null_pair(80, 5);
        let cfg = BootstrapConfig {
            redetect: true,
            ..BootstrapConfig::new(3, RngSeed::new(1))
        };
        let r = run_bootstrap_test(&x, &y, &g, &g, 0.05, &cfg).unwrap();
        assert!(r.replicates.iter().all(|t| t.is_finite()));
    }
}
