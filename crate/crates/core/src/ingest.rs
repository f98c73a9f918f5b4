//! Reading and writing graphs and labels, and the preprocessing pipelines that
//! turn similarity or weight matrices into adjacency matrices.
//!
//! Formats:
//! - edge list: a `# nodes=<n>` header, then one `i j` pair per line (1-based,
//!   each undirected edge once, other `#` lines ignored);
//! - MatrixMarket `coordinate pattern symmetric`;
//! - dense CSV: one row per line, comma separated;
//! - labels: one 1-based community id per line.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::graph::{AdjacencyMatrix, MembershipLabel};

const MATRIX_MARKET_HEADER: &str = "%%MatrixMarket matrix coordinate pattern symmetric";

fn parse_index(token: &str, line: usize, n: usize) -> Result<usize> {
    let index: usize = token.parse().map_err(|_| Error::Parse {
        line,
        message: format!("expected a node index, got {token:?}"),
    })?;
    if index == 0 || index > n {
        return Err(Error::IndexOutOfRange { index, n });
    }
    Ok(index - 1)
}

fn parse_pair(text: &str, line: usize, n: usize) -> Result<(usize, usize)> {
    let mut tokens = text.split_whitespace();
    let (Some(a), Some(b), None) = (tokens.next(), tokens.next(), tokens.next()) else {
        return Err(Error::Parse {
            line,
            message: format!("expected two indices, got {text:?}"),
        });
    };
    let (i, j) = (parse_index(a, line, n)?, parse_index(b, line, n)?);
    if i == j {
        return Err(Error::NonZeroDiagonal { i });
    }
    Ok((i, j))
}

pub fn parse_edge_list(text: &str) -> Result<AdjacencyMatrix> {
    let mut n = None;
    let mut edges = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(comment) = trimmed.strip_prefix('#') {
            if let Some(value) = comment.trim().strip_prefix("nodes=") {
                let parsed = value.trim().parse().map_err(|_| Error::Parse {
                    line,
                    message: format!("bad node count {value:?}"),
                })?;
                n = Some(parsed);
            }
            continue;
        }
        let n = n.ok_or(Error::Parse {
            line,
            message: "edge before `# nodes=<n>` header".into(),
        })?;
        edges.push(parse_pair(trimmed, line, n)?);
    }
    let n = n.ok_or(Error::Parse {
        line: 1,
        message: "missing `# nodes=<n>` header".into(),
    })?;
    AdjacencyMatrix::from_edges(n, &edges)
}

pub fn format_edge_list(a: &AdjacencyMatrix) -> String {
    let mut out = format!("# nodes={}\n", a.n());
    for (i, j) in a.edges() {
        let _ = writeln!(out, "{} {}", i + 1, j + 1);
    }
    out
}

pub fn read_edge_list(path: impl AsRef<Path>) -> Result<AdjacencyMatrix> {
    parse_edge_list(&fs::read_to_string(path)?)
}

pub fn write_edge_list(a: &AdjacencyMatrix, path: impl AsRef<Path>) -> Result<()> {
    Ok(fs::write(path, format_edge_list(a))?)
}

pub fn parse_matrix_market(text: &str) -> Result<AdjacencyMatrix> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim().eq_ignore_ascii_case(MATRIX_MARKET_HEADER) => {}
        _ => {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected header {MATRIX_MARKET_HEADER:?}"),
            })
        }
    }
    let mut size = None;
    let mut edges = Vec::new();
    for (idx, raw) in lines {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('%') {
            continue;
        }
        match size {
            None => {
                let dims: Vec<usize> = trimmed
                    .split_whitespace()
                    .map(str::parse)
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| Error::Parse {
                        line,
                        message: "bad size line".into(),
                    })?;
                if dims.len() != 3 {
                    return Err(Error::Parse {
                        line,
                        message: "size line needs rows cols entries".into(),
                    });
                }
                if dims[0] != dims[1] {
                    return Err(Error::Shape(format!(
                        "{} x {} matrix is not square",
                        dims[0], dims[1]
                    )));
                }
                size = Some(dims[0]);
            }
            Some(n) => edges.push(parse_pair(trimmed, line, n)?),
        }
    }
    let n = size.ok_or(Error::Parse {
        line: 2,
        message: "missing size line".into(),
    })?;
    AdjacencyMatrix::from_edges(n, &edges)
}

pub fn format_matrix_market(a: &AdjacencyMatrix) -> String {
    let edges = a.edges();
    let mut out = format!(
        "{MATRIX_MARKET_HEADER}\n{} {} {}\n",
        a.n(),
        a.n(),
        edges.len()
    );
    // lower triangle, as the symmetric format stores it
    for (i, j) in edges {
        let _ = writeln!(out, "{} {}", j + 1, i + 1);
    }
    out
}

/// Reads an edge list or a MatrixMarket file, chosen by the first line.
pub fn read_graph(path: impl AsRef<Path>) -> Result<AdjacencyMatrix> {
    let text = fs::read_to_string(path)?;
    if text.trim_start().starts_with("%%MatrixMarket") {
        parse_matrix_market(&text)
    } else {
        parse_edge_list(&text)
    }
}

/// Rectangular numeric CSV as rows.
pub fn parse_csv(text: &str) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let row = raw
            .split(',')
            .map(|cell| {
                cell.trim().parse::<f64>().map_err(|_| Error::Parse {
                    line: idx + 1,
                    message: format!("not a number: {:?}", cell.trim()),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

fn square(rows: &[Vec<f64>]) -> Result<usize> {
    let n = rows.len();
    if let Some((r, row)) = rows.iter().enumerate().find(|(_, row)| row.len() != n) {
        return Err(Error::Shape(format!(
            "{n} rows but row {} has {} columns",
            r + 1,
            row.len()
        )));
    }
    Ok(n)
}

fn format_csv(n: usize, get: impl Fn(usize, usize) -> String) -> String {
    let mut out = String::new();
    for i in 0..n {
        let row: Vec<String> = (0..n).map(|j| get(i, j)).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn parse_adjacency_csv(text: &str) -> Result<AdjacencyMatrix> {
    let rows = parse_csv(text)?;
    square(&rows)?;
    let mut raw = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        let mut ints = Vec::with_capacity(row.len());
        for (j, &x) in row.iter().enumerate() {
            if x.fract() != 0.0 || !x.is_finite() {
                return Err(Error::Range {
                    i,
                    j,
                    value: x,
                    message: "adjacency entries must be 0 or 1".into(),
                });
            }
            ints.push(x as i64);
        }
        raw.push(ints);
    }
    AdjacencyMatrix::validate(&raw)
}

pub fn read_adjacency_csv(path: impl AsRef<Path>) -> Result<AdjacencyMatrix> {
    parse_adjacency_csv(&fs::read_to_string(path)?)
}

pub fn format_adjacency_csv(a: &AdjacencyMatrix) -> String {
    format_csv(a.n(), |i, j| a.entry(i, j).to_string())
}

/// Symmetric matrix of correlations in `[-1, 1]`. The diagonal is not used.
#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityMatrix {
    n: usize,
    values: Vec<f64>,
}

impl SimilarityMatrix {
    pub fn new(n: usize, values: Vec<f64>) -> Result<Self> {
        check_len(n, values.len())?;
        for i in 0..n {
            for j in 0..n {
                let s = values[i * n + j];
                if i != j && !(-1.0..=1.0).contains(&s) {
                    return Err(Error::Range {
                        i,
                        j,
                        value: s,
                        message: "correlation outside [-1, 1]".into(),
                    });
                }
                if j > i && s != values[j * n + i] {
                    return Err(Error::NotSymmetric { i, j });
                }
            }
        }
        Ok(Self { n, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = square(rows)?;
        Self::new(n, rows.iter().flatten().copied().collect())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }
}

/// Symmetric matrix of nonnegative weights.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightMatrix {
    n: usize,
    values: Vec<f64>,
}

impl WeightMatrix {
    pub fn new(n: usize, values: Vec<f64>) -> Result<Self> {
        check_len(n, values.len())?;
        for i in 0..n {
            for j in 0..n {
                let w = values[i * n + j];
                if !(w >= 0.0) || !w.is_finite() {
                    return Err(Error::Range {
                        i,
                        j,
                        value: w,
                        message: "weights must be finite and nonnegative".into(),
                    });
                }
                if j > i && w != values[j * n + i] {
                    return Err(Error::NotSymmetric { i, j });
                }
            }
        }
        Ok(Self { n, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = square(rows)?;
        Self::new(n, rows.iter().flatten().copied().collect())
    }

    /// `W_ij = T_ij + T_ji` for a directed flow matrix `T`.
    pub fn from_directed(rows: &[Vec<f64>]) -> Result<Self> {
        let n = square(rows)?;
        Self::new(
            n,
            (0..n * n)
                .map(|idx| rows[idx / n][idx % n] + rows[idx % n][idx / n])
                .collect(),
        )
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }
}

fn check_len(n: usize, len: usize) -> Result<()> {
    if len != n * n {
        return Err(Error::Shape(format!(
            "{len} values do not fill a {n} x {n} matrix"
        )));
    }
    Ok(())
}

pub fn read_similarity_csv(path: impl AsRef<Path>) -> Result<SimilarityMatrix> {
    SimilarityMatrix::from_rows(&parse_csv(&fs::read_to_string(path)?)?)
}

pub fn read_weights_csv(path: impl AsRef<Path>) -> Result<WeightMatrix> {
    WeightMatrix::from_rows(&parse_csv(&fs::read_to_string(path)?)?)
}

pub fn format_similarity_csv(s: &SimilarityMatrix) -> String {
    format_csv(s.n, |i, j| s.get(i, j).to_string())
}

pub fn format_weights_csv(w: &WeightMatrix) -> String {
    format_csv(w.n, |i, j| w.get(i, j).to_string())
}

pub fn parse_labels(text: &str) -> Result<MembershipLabel> {
    let mut ids = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let t = raw.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        ids.push(t.parse::<usize>().map_err(|_| Error::Parse {
            line: idx + 1,
            message: format!("expected a 1-based community id, got {t:?}"),
        })?);
    }
    MembershipLabel::from_one_based_infer(&ids)
}

pub fn format_labels(g: &MembershipLabel) -> String {
    g.one_based().iter().map(|id| format!("{id}\n")).collect()
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<MembershipLabel> {
    parse_labels(&fs::read_to_string(path)?)
}

pub fn write_labels(g: &MembershipLabel, path: impl AsRef<Path>) -> Result<()> {
    Ok(fs::write(path, format_labels(g))?)
}

/// Hard threshold of rescaled correlations: edge `{i, j}` iff `|(1 + s_ij) / 2| >= tau`.
pub fn correlation_to_adjacency(s: &SimilarityMatrix, tau: f64) -> Result<AdjacencyMatrix> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "threshold must lie in (0, 1), got {tau}"
        )));
    }
    let n = s.n();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if ((1.0 + s.get(i, j)) / 2.0).abs() >= tau {
                edges.push((i, j));
            }
        }
    }
    AdjacencyMatrix::from_edges(n, &edges)
}

/// How the two degrees of a node are compared with the cutoff.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DegreeRule {
    /// `deg_X(i) + deg_Y(i) >= min`.
    #[default]
    Total,
    /// `deg_X(i) >= min` and `deg_Y(i) >= min`.
    Each,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FilteredPair {
    pub x: AdjacencyMatrix,
    pub y: AdjacencyMatrix,
    /// Original 0-based index of each kept node, increasing.
    pub kept: Vec<usize>,
}

/// Drops low-degree nodes from both graphs. Degrees are computed once on the
/// input graphs.
pub fn degree_filter(
    x: &AdjacencyMatrix,
    y: &AdjacencyMatrix,
    min_degree: usize,
    rule: DegreeRule,
) -> Result<FilteredPair> {
    if x.n() != y.n() {
        return Err(Error::SizeMismatch {
            left: x.n(),
            right: y.n(),
        });
    }
    let (dx, dy) = (x.node_degrees(), y.node_degrees());
    let kept: Vec<usize> = (0..x.n())
        .filter(|&i| match rule {
            DegreeRule::Total => dx[i] + dy[i] >= min_degree,
            DegreeRule::Each => dx[i] >= min_degree && dy[i] >= min_degree,
        })
        .collect();
    if kept.is_empty() {
        return Err(Error::AllNodesRemoved);
    }
    Ok(FilteredPair {
        x: x.induced(&kept),
        y: y.induced(&kept),
        kept,
    })
}

/// Middle element of the sorted values, the smaller of the two middle ones
/// for an even count. Sorts `values` in place.
pub fn lower_median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    Some(values[(values.len() - 1) / 2])
}

/// Edge `{i, j}` iff `W_ij` is at least the lower median of the strict upper triangle.
pub fn weights_to_adjacency_median(w: &WeightMatrix) -> AdjacencyMatrix {
    let n = w.n();
    let mut upper: Vec<f64> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .map(|(i, j)| w.get(i, j))
        .collect();
    let Some(threshold) = lower_median(&mut upper) else {
        return AdjacencyMatrix::empty(n);
    };
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if w.get(i, j) >= threshold {
                edges.push((i, j));
            }
        }
    }
    AdjacencyMatrix::from_edges(n, &edges).expect("indices in range")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn edge_list_basics() {
        assert_eq!(
            parse_edge_list("# nodes=3\n").unwrap(),
            AdjacencyMatrix::empty(3)
        );
        let a = parse_edge_list("# nodes=2\n1 2\n").unwrap();
        assert_eq!(a.edge_count(), 1);
        assert!(matches!(
            parse_edge_list("# nodes=2\n1 3\n"),
            Err(Error::IndexOutOfRange { index: 3, n: 2 })
        ));
        assert!(matches!(
            parse_edge_list("# nodes=2\n1 x\n"),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(
            parse_edge_list("1 2\n"),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            parse_edge_list("# nodes=2\n2 2\n"),
            Err(Error::NonZeroDiagonal { i: 1 })
        ));
    }

    #[test]
    fn matrix_market_roundtrip() {
        let a = AdjacencyMatrix::from_edges(5, &[(0, 1), (1, 4), (2, 3)]).unwrap();
        assert_eq!(parse_matrix_market(&format_matrix_market(&a)).unwrap(), a);
        assert!(parse_matrix_market("%%MatrixMarket matrix coordinate real general\n").is_err());
    }

    #[test]
    fn csv_shapes_and_ranges() {
        assert!(matches!(
            parse_adjacency_csv("0,1,0\n1,0,0\n"),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            SimilarityMatrix::from_rows(&parse_csv("1,1.5\n1.5,1\n").unwrap()),
            Err(Error::Range { .. })
        ));
        assert!(matches!(
            WeightMatrix::from_rows(&[vec![0.0, -1.0], vec![-1.0, 0.0]]),
            Err(Error::Range { .. })
        ));
        assert!(matches!(
            parse_adjacency_csv("0,2\n2,0\n"),
            Err(Error::NonBinaryEntry { .. })
        ));
        let a = AdjacencyMatrix::from_edges(3, &[(0, 2)]).unwrap();
        assert_eq!(parse_adjacency_csv(&format_adjacency_csv(&a)).unwrap(), a);
    }

    #[test]
    fn labels_roundtrip() {
        let g = MembershipLabel::from_one_based(&[1, 2, 2, 3], 3).unwrap();
        assert_eq!(parse_labels(&format_labels(&g)).unwrap(), g);
        assert!(parse_labels("1\n0\n").is_err());
    }

    fn sim(n: usize, off: f64) -> SimilarityMatrix {
        SimilarityMatrix::new(
            n,
            (0..n * n)
                .map(|k| if k / n == k % n { 1.0 } else { off })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn correlation_threshold_is_inclusive() {
        // s = 0.44 rescales to exactly 0.72
        assert_eq!(
            correlation_to_adjacency(&sim(3, 0.44), 0.72)
                .unwrap()
                .edge_count(),
            3
        );
        assert_eq!(
            correlation_to_adjacency(&sim(4, -1.0), 0.01)
                .unwrap()
                .edge_count(),
            0
        );
        assert_eq!(
            correlation_to_adjacency(&sim(4, 0.0), 0.72)
                .unwrap()
                .edge_count(),
            0
        );
        assert_eq!(
            correlation_to_adjacency(&sim(4, 0.0), 0.5).unwrap(),
            AdjacencyMatrix::complete(4)
        );
        assert!(correlation_to_adjacency(&sim(2, 0.0), 1.0).is_err());
    }

    #[test]
    fn degree_filter_cases() {
        let k5 = AdjacencyMatrix::complete(5);
        assert_eq!(
            degree_filter(&k5, &k5, 8, DegreeRule::Total)
                .unwrap()
                .kept
                .len(),
            5
        );
        assert_eq!(degree_filter(&k5, &k5, 0, DegreeRule::Total).unwrap().x, k5);
        let star = AdjacencyMatrix::from_edges(4, &[(0, 1), (0, 2), (0, 3)]).unwrap();
        let empty = AdjacencyMatrix::empty(4);
        // centre: 3 + 0, leaves: 1 + 0
        assert_eq!(
            degree_filter(&star, &empty, 3, DegreeRule::Total)
                .unwrap()
                .kept,
            vec![0]
        );
        assert_eq!(
            degree_filter(&star, &star, 3, DegreeRule::Total)
                .unwrap()
                .kept,
            vec![0]
        );
        assert!(matches!(
            degree_filter(&star, &empty, 3, DegreeRule::Each),
            Err(Error::AllNodesRemoved)
        ));
        assert!(matches!(
            degree_filter(&star, &AdjacencyMatrix::empty(3), 0, DegreeRule::Total),
            Err(Error::SizeMismatch { .. })
        ));
    }

    #[test]
    fn median_binarization() {
        let w = WeightMatrix::new(3, vec![0.0, 1.0, 2.0, 1.0, 0.0, 3.0, 2.0, 3.0, 0.0]).unwrap();
        // upper {1, 2, 3}: median 2
        assert_eq!(weights_to_adjacency_median(&w).edge_count(), 2);
        let w = WeightMatrix::new(3, vec![5.0; 9]).unwrap();
        assert_eq!(
            weights_to_adjacency_median(&w),
            AdjacencyMatrix::complete(3)
        );
        let w = WeightMatrix::new(3, vec![0.0; 9]).unwrap();
        assert_eq!(
            weights_to_adjacency_median(&w),
            AdjacencyMatrix::complete(3)
        );
    }

    #[test]
    fn even_count_uses_lower_median() {
        let mut v = [3.0, 1.0, 4.0, 2.0];
        assert_eq!(lower_median(&mut v), Some(2.0));
        assert_eq!(v.iter().filter(|&&x| x >= 2.0).count(), 3);
        // 4 nodes with weights 1..=6: lower median 3 keeps 4 pairs
        let mut v = vec![0.0; 16];
        let mut w = 1.0;
        for i in 0..4 {
            for j in (i + 1)..4 {
                v[i * 4 + j] = w;
                v[j * 4 + i] = w;
                w += 1.0;
            }
        }
        let a = weights_to_adjacency_median(&WeightMatrix::new(4, v).unwrap());
        assert_eq!(a.edge_count(), 4);
    }
}
