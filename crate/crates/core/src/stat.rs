//! Maximum entry-wise deviation statistics.
//!
//! For node `i` and community `v`, the single-sample deviation is the
//! standardized residual sum
//!
//! ```text
//! rho_iv = Σ_{j in g⁻¹(v) \ {i}} (A_ij - B_{g(i) v}) / sqrt(B_{g(i) v} (1 - B_{g(i) v}))  /  sqrt(m)
//! ```
//!
//! with `m = |g⁻¹(v) \ {i}|`. The two-sample deviation centers `X` with the
//! labels and block estimate of `Y` and vice versa, adds the two residual sums
//! and normalizes by `sqrt(m_x + m_y)`. The block probability is constant
//! inside each sum, so every entry costs O(1) once neighbour counts per
//! community are known.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::{estimate_from_counts, BlockEstimate, ClampPolicy};
use crate::graph::{AdjacencyMatrix, BlockMatrix, MembershipLabel};
use crate::gumbel::GumbelParams;

/// Coefficient of `log log(2 K n)` in the single-sample normalization.
pub const SINGLE_SAMPLE_LOGLOG: f64 = 2.0;
/// Coefficient of `log log(2 K n)` in the two-sample normalization.
pub const TWO_SAMPLE_LOGLOG: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatisticKind {
    SingleSample,
    TwoSample,
}

impl StatisticKind {
    pub fn loglog_coefficient(self) -> f64 {
        match self {
            StatisticKind::SingleSample => SINGLE_SAMPLE_LOGLOG,
            StatisticKind::TwoSample => TWO_SAMPLE_LOGLOG,
        }
    }
}

/// `n × k` matrix of standardized deviations.
#[derive(Clone, Debug, PartialEq)]
pub struct DeviationMatrix {
    pub kind: StatisticKind,
    n: usize,
    k: usize,
    values: Vec<f64>,
    clamped: Vec<bool>,
}

impl DeviationMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn get(&self, i: usize, v: usize) -> f64 {
        self.values[i * self.k + v]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Whether entry `(i, v)` was centered with a clamped block estimate.
    pub fn is_clamped(&self, i: usize, v: usize) -> bool {
        self.clamped[i * self.k + v]
    }

    pub fn clamped_entries(&self) -> usize {
        self.clamped.iter().filter(|&&c| c).count()
    }

    /// `L_n = max |entry|`.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

/// `T_n = L_n² - 2 log(2 K n) + c log log(2 K n)`.
pub fn normalize(l_n: f64, k: usize, n: usize, loglog_coefficient: f64) -> f64 {
    let scale = (2.0 * k as f64 * n as f64).ln();
    l_n * l_n - 2.0 * scale + loglog_coefficient * scale.ln()
}

fn check_interior(block: &BlockMatrix) -> Result<()> {
    let k = block.k();
    for u in 0..k {
        for v in 0..k {
            let p = block.get(u, v);
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::ProbabilityOutOfRange {
                    u: u + 1,
                    v: v + 1,
                    value: p,
                });
            }
        }
    }
    Ok(())
}

fn clamped_mask(estimate: Option<&BlockEstimate>, k: usize) -> Vec<bool> {
    match estimate {
        Some(e) => (0..k * k)
            .map(|idx| e.block.entries()[idx] != e.raw.entries()[idx])
            .collect(),
        None => vec![false; k * k],
    }
}

fn single_from_counts(
    counts: &[u32],
    label: &MembershipLabel,
    block: &BlockMatrix,
    clamp: &[bool],
) -> Result<DeviationMatrix> {
    let (n, k) = (label.n(), label.k());
    check_interior(block)?;
    let sizes = label.block_sizes();
    let mut values = vec![0.0; n * k];
    let mut clamped = vec![false; n * k];
    for i in 0..n {
        let u = label.community(i);
        for v in 0..k {
            let m = sizes[v] - usize::from(u == v);
            if m == 0 {
                return Err(Error::DegenerateBlock {
                    node: i + 1,
                    community: v + 1,
                });
            }
            let b = block.get(u, v);
            let resid = (counts[i * k + v] as f64 - m as f64 * b) / (b * (1.0 - b)).sqrt();
            values[i * k + v] = resid / (m as f64).sqrt();
            clamped[i * k + v] = clamp[u * k + v];
        }
    }
    Ok(DeviationMatrix {
        kind: StatisticKind::SingleSample,
        n,
        k,
        values,
        clamped,
    })
}

/// Single-sample deviations of `a` against labels `g0` and block matrix `b_hat`.
pub fn single_sample_deviation(
    a: &AdjacencyMatrix,
    g0: &MembershipLabel,
    b_hat: &BlockMatrix,
) -> Result<DeviationMatrix> {
    if a.n() != g0.n() {
        return Err(Error::SizeMismatch {
            left: a.n(),
            right: g0.n(),
        });
    }
    if g0.k() != b_hat.k() {
        return Err(Error::KMismatch {
            left: g0.k(),
            right: b_hat.k(),
        });
    }
    let counts = a.community_degree_counts(g0);
    single_from_counts(&counts, g0, b_hat, &vec![false; g0.k() * g0.k()])
}

struct TwoSampleInputs<'a> {
    /// Neighbour counts of X over the communities of `gy`.
    x_counts: &'a [u32],
    /// Neighbour counts of Y over the communities of `gx`.
    y_counts: &'a [u32],
    gx: &'a MembershipLabel,
    gy: &'a MembershipLabel,
    bx: &'a BlockMatrix,
    by: &'a BlockMatrix,
    clamp_x: &'a [bool],
    clamp_y: &'a [bool],
}

fn two_from_counts(inp: TwoSampleInputs<'_>) -> Result<DeviationMatrix> {
    let (n, k) = (inp.gx.n(), inp.gx.k());
    check_interior(inp.bx)?;
    check_interior(inp.by)?;
    let sizes_x = inp.gx.block_sizes();
    let sizes_y = inp.gy.block_sizes();
    let mut values = vec![0.0; n * k];
    let mut clamped = vec![false; n * k];
    for i in 0..n {
        let ux = inp.gx.community(i);
        let uy = inp.gy.community(i);
        for v in 0..k {
            let mx = sizes_x[v] - usize::from(ux == v);
            let my = sizes_y[v] - usize::from(uy == v);
            if mx + my == 0 {
                return Err(Error::DegenerateBlock {
                    node: i + 1,
                    community: v + 1,
                });
            }
            let by = inp.by.get(uy, v);
            let bx = inp.bx.get(ux, v);
            let x_part =
                (inp.x_counts[i * k + v] as f64 - my as f64 * by) / (by * (1.0 - by)).sqrt();
            let y_part =
                (inp.y_counts[i * k + v] as f64 - mx as f64 * bx) / (bx * (1.0 - bx)).sqrt();
            values[i * k + v] = (x_part + y_part) / ((mx + my) as f64).sqrt();
            clamped[i * k + v] = inp.clamp_y[uy * k + v] || inp.clamp_x[ux * k + v];
        }
    }
    Ok(DeviationMatrix {
        kind: StatisticKind::TwoSample,
        n,
        k,
        values,
        clamped,
    })
}

fn check_pair(
    x: &AdjacencyMatrix,
    y: &AdjacencyMatrix,
    gx: &MembershipLabel,
    gy: &MembershipLabel,
) -> Result<()> {
    for (left, right) in [(x.n(), y.n()), (x.n(), gx.n()), (x.n(), gy.n())] {
        if left != right {
            return Err(Error::SizeMismatch { left, right });
        }
    }
    if gx.k() != gy.k() {
        return Err(Error::KMismatch {
            left: gx.k(),
            right: gy.k(),
        });
    }
    Ok(())
}

/// Two-sample deviations: `X` is centered by `(gy, by_hat)`, `Y` by `(gx, bx_hat)`.
pub fn two_sample_deviation(
    x: &AdjacencyMatrix,
    y: &AdjacencyMatrix,
    gx: &MembershipLabel,
    gy: &MembershipLabel,
    bx_hat: &BlockMatrix,
    by_hat: &BlockMatrix,
) -> Result<DeviationMatrix> {
    check_pair(x, y, gx, gy)?;
    for b in [bx_hat, by_hat] {
        if b.k() != gx.k() {
            return Err(Error::KMismatch {
                left: gx.k(),
                right: b.k(),
            });
        }
    }
    let k = gx.k();
    let none = vec![false; k * k];
    two_from_counts(TwoSampleInputs {
        x_counts: &x.community_degree_counts(gy),
        y_counts: &y.community_degree_counts(gx),
        gx,
        gy,
        bx: bx_hat,
        by: by_hat,
        clamp_x: &none,
        clamp_y: &none,
    })
}

/// Outcome of a single- or two-sample test.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub statistic: StatisticKind,
    pub l_n: f64,
    pub t_n: f64,
    pub p_value: f64,
    pub alpha: f64,
    /// `Q_{1-alpha}` of the reference Gumbel law.
    pub critical_value: f64,
    pub reject: bool,
    pub k: usize,
    pub n: usize,
    /// Block entries moved by the clamp, summed over the fitted block matrices.
    pub clamp_hits: usize,
    /// Deviation entries centered with a clamped estimate.
    pub clamped_entries: usize,
}

impl TestReport {
    pub(crate) fn from_deviation(
        dev: &DeviationMatrix,
        alpha: f64,
        clamp_hits: usize,
    ) -> Result<Self> {
        let reference = GumbelParams::reference();
        let critical_value = reference.quantile(1.0 - alpha)?;
        let l_n = dev.max_abs();
        let t_n = normalize(l_n, dev.k(), dev.n(), dev.kind.loglog_coefficient());
        Ok(Self {
            statistic: dev.kind,
            l_n,
            t_n,
            p_value: reference.sf(t_n),
            alpha,
            critical_value,
            reject: t_n >= critical_value,
            k: dev.k(),
            n: dev.n(),
            clamp_hits,
            clamped_entries: dev.clamped_entries(),
        })
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )))
    }
}

/// Goodness-of-fit test of `(k0, g0)` on one graph, with `B` estimated from the data.
pub fn single_sample_statistic(
    a: &AdjacencyMatrix,
    k0: usize,
    g0: &MembershipLabel,
    alpha: f64,
) -> Result<TestReport> {
    single_sample_statistic_with(a, k0, g0, alpha, ClampPolicy::default())
}

pub fn single_sample_statistic_with(
    a: &AdjacencyMatrix,
    k0: usize,
    g0: &MembershipLabel,
    alpha: f64,
    policy: ClampPolicy,
) -> Result<TestReport> {
    check_alpha(alpha)?;
    if g0.k() != k0 {
        return Err(Error::KMismatch {
            left: k0,
            right: g0.k(),
        });
    }
    if a.n() != g0.n() {
        return Err(Error::SizeMismatch {
            left: a.n(),
            right: g0.n(),
        });
    }
    let counts = a.community_degree_counts(g0);
    let est = estimate_from_counts(&counts, g0, policy)?;
    let dev = single_from_counts(&counts, g0, &est.block, &clamped_mask(Some(&est), k0))?;
    TestReport::from_deviation(&dev, alpha, est.clamp_hits)
}

/// Result of the two-sample test. Different community counts reject outright.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum TwoSampleOutcome {
    Tested(TestReport),
    CommunityCountMismatch {
        kx: usize,
        ky: usize,
        alpha: f64,
        p_value: f64,
        reject: bool,
    },
}

impl TwoSampleOutcome {
    pub fn reject(&self) -> bool {
        match self {
            TwoSampleOutcome::Tested(r) => r.reject,
            TwoSampleOutcome::CommunityCountMismatch { reject, .. } => *reject,
        }
    }

    pub fn p_value(&self) -> f64 {
        match self {
            TwoSampleOutcome::Tested(r) => r.p_value,
            TwoSampleOutcome::CommunityCountMismatch { p_value, .. } => *p_value,
        }
    }

    pub fn report(&self) -> Option<&TestReport> {
        match self {
            TwoSampleOutcome::Tested(r) => Some(r),
            TwoSampleOutcome::CommunityCountMismatch { .. } => None,
        }
    }

    pub(crate) fn mismatch(kx: usize, ky: usize, alpha: f64) -> Self {
        TwoSampleOutcome::CommunityCountMismatch {
            kx,
            ky,
            alpha,
            p_value: 0.0,
            reject: true,
        }
    }
}

/// Fitted pieces of a two-sample evaluation, kept for the bootstrap.
#[derive(Clone, Debug)]
pub struct TwoSampleFit {
    pub report: TestReport,
    pub bx: BlockEstimate,
    pub by: BlockEstimate,
}

pub(crate) fn two_sample_fit(
    x: &AdjacencyMatrix,
    y: &AdjacencyMatrix,
    gx: &MembershipLabel,
    gy: &MembershipLabel,
    alpha: f64,
    policy: ClampPolicy,
) -> Result<TwoSampleFit> {
    check_alpha(alpha)?;
    check_pair(x, y, gx, gy)?;
    let k = gx.k();
    // X over gy drives the centering of X; X over gx gives X's own block fit.
    let x_by_gy = x.community_degree_counts(gy);
    let y_by_gx = y.community_degree_counts(gx);
    let x_by_gx = if gx == gy {
        x_by_gy.clone()
    } else {
        x.community_degree_counts(gx)
    };
    let y_by_gy = if gx == gy {
        y_by_gx.clone()
    } else {
        y.community_degree_counts(gy)
    };
    let bx = estimate_from_counts(&x_by_gx, gx, policy)?;
    let by = estimate_from_counts(&y_by_gy, gy, policy)?;
    let dev = two_from_counts(TwoSampleInputs {
        x_counts: &x_by_gy,
        y_counts: &y_by_gx,
        gx,
        gy,
        bx: &bx.block,
        by: &by.block,
        clamp_x: &clamped_mask(Some(&bx), k),
        clamp_y: &clamped_mask(Some(&by), k),
    })?;
    let report = TestReport::from_deviation(&dev, alpha, bx.clamp_hits + by.clamp_hits)?;
    Ok(TwoSampleFit { report, bx, by })
}

/// Two-sample test of `(gx, Bx) = (gy, By)` with both block matrices estimated from the data.
pub fn two_sample_statistic(
    x: &AdjacencyMatrix,
    y: &AdjacencyMatrix,
    gx: &MembershipLabel,
    gy: &MembershipLabel,
    alpha: f64,
) -> Result<TwoSampleOutcome> {
    two_sample_statistic_with(x, y, gx, gy, alpha, ClampPolicy::default())
}

pub fn two_sample_statistic_with(
    x: &AdjacencyMatrix,
    y: &AdjacencyMatrix,
    gx: &MembershipLabel,
    gy: &MembershipLabel,
    alpha: f64,
    policy: ClampPolicy,
) -> Result<TwoSampleOutcome> {
    check_alpha(alpha)?;
    if gx.k() != gy.k() {
        return Ok(TwoSampleOutcome::mismatch(gx.k(), gy.k(), alpha));
    }
    Ok(TwoSampleOutcome::Tested(
        two_sample_fit(x, y, gx, gy, alpha, policy)?.report,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimate::estimate_block_matrix;

    fn label(ids: &[usize], k: usize) -> MembershipLabel {
        MembershipLabel::from_one_based(ids, k).unwrap()
    }

    #[test]
    fn symmetric_degrees_give_zero_deviation() {
        let a = AdjacencyMatrix::from_edges(4, &[(0, 1), (2, 3)]).unwrap();
        let g = label(&[1, 1, 1, 1], 1);
        let b = BlockMatrix::constant(1, 1.0 / 3.0).unwrap();
        let dev = single_sample_deviation(&a, &g, &b).unwrap();
        for i in 0..4 {
            assert!(dev.get(i, 0).abs() < 1e-15);
        }
    }

    #[test]
    fn hand_computed_single_entry() {
        // star centred at node 0 on 4 nodes; B = 1/2
        let a = AdjacencyMatrix::from_edges(4, &[(0, 1), (0, 2), (0, 3)]).unwrap();
        let g = label(&[1, 1, 1, 1], 1);
        let b = BlockMatrix::constant(1, 0.5).unwrap();
        let dev = single_sample_deviation(&a, &g, &b).unwrap();
        // node 0: three residuals of +1/2, each over sd 1/2, then / sqrt(3)
        assert!((dev.get(0, 0) - 3f64.sqrt()).abs() < 1e-15);
        // leaves: one +1/2 and two -1/2 -> -1 / sqrt(3)
        assert!((dev.get(1, 0) + 1.0 / 3f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn boundary_block_is_rejected() {
        let a = AdjacencyMatrix::empty(3);
        let g = label(&[1, 1, 1], 1);
        let b = BlockMatrix::constant(1, 0.0).unwrap();
        assert!(matches!(
            single_sample_deviation(&a, &g, &b),
            Err(Error::ProbabilityOutOfRange { .. })
        ));
    }

    #[test]
    fn singleton_community_is_degenerate() {
        let a = AdjacencyMatrix::empty(3);
        let g = label(&[1, 1, 2], 2);
        let b = BlockMatrix::constant(2, 0.5).unwrap();
        assert!(matches!(
            single_sample_deviation(&a, &g, &b),
            Err(Error::DegenerateBlock {
                node: 3,
                community: 2
            })
        ));
    }

    #[test]
    fn identical_samples_scale_by_sqrt_two() {
        let a = AdjacencyMatrix::from_edges(6, &[(0, 1), (0, 2), (1, 4), (3, 4), (2, 5), (4, 5)])
            .unwrap();
        let g = label(&[1, 1, 1, 2, 2, 2], 2);
        let b = estimate_block_matrix(&a, &g, ClampPolicy::default())
            .unwrap()
            .block;
        let single = single_sample_deviation(&a, &g, &b).unwrap();
        let two = two_sample_deviation(&a, &a, &g, &g, &b, &b).unwrap();
        for i in 0..6 {
            for v in 0..2 {
                assert!((two.get(i, v) - 2f64.sqrt() * single.get(i, v)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn normalization_shape() {
        let t1 = normalize(3.0, 3, 600, 1.0);
        let t2 = normalize(3.5, 3, 600, 1.0);
        assert!(t2 > t1);
        let s = (3600f64).ln();
        assert!((t1 - (9.0 - 2.0 * s + s.ln())).abs() < 1e-12);
        assert!((normalize(3.0, 3, 600, 2.0) - t1 - s.ln()).abs() < 1e-12);
    }

    #[test]
    fn mismatched_k_rejects_outright() {
        let a = AdjacencyMatrix::empty(4);
        let gx = label(&[1, 1, 2, 2], 2);
        let gy = label(&[1, 1, 1, 1], 1);
        let out = two_sample_statistic(&a, &a, &gx, &gy, 0.05).unwrap();
        assert!(out.reject());
        assert_eq!(out.p_value(), 0.0);
        assert!(out.report().is_none());
    }

    #[test]
    fn report_decision_matches_critical_value() {
        let a = AdjacencyMatrix::from_edges(6, &[(0, 1), (1, 2), (3, 4)]).unwrap();
        let g = label(&[1, 1, 1, 2, 2, 2], 2);
        let r = single_sample_statistic(&a, 2, &g, 0.05).unwrap();
        assert_eq!(r.reject, r.t_n >= r.critical_value);
        assert!(
            (r.critical_value - GumbelParams::reference().quantile(0.95).unwrap()).abs() < 1e-15
        );
        assert!(r.clamp_hits > 0);
        assert!(single_sample_statistic(&a, 3, &g, 0.05).is_err());
        assert!(single_sample_statistic(&a, 2, &g, 1.5).is_err());
    }
}
