//! Correlation thresholding with a degree filter, and median binarization of trade weights.

use rand::Rng;
use sbm_twosample::ingest::{
    correlation_to_adjacency, degree_filter, weights_to_adjacency_median, DegreeRule,
    SimilarityMatrix, WeightMatrix,
};
use sbm_twosample::rng::RngSeed;

fn noisy_blocks(n: usize, seed: u64) -> Result<SimilarityMatrix, sbm_twosample::error::Error> {
    let mut rng = RngSeed::new(seed).rng();
    let mut rows = vec![vec![1.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let base = if i * 2 / n == j * 2 / n { 0.6 } else { 0.0 };
            let s: f64 = (base + rng.random_range(-0.4..0.4f64)).clamp(-1.0, 1.0);
            rows[i][j] = s;
            rows[j][i] = s;
        }
    }
    SimilarityMatrix::from_rows(&rows)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let x = correlation_to_adjacency(&noisy_blocks(200, 1)?, 0.72)?;
    let y = correlation_to_adjacency(&noisy_blocks(200, 2)?, 0.72)?;
    let kept = degree_filter(&x, &y, 90, DegreeRule::Total)?;
    println!(
        "correlation: kept {} of 200 nodes, edges {} and {}",
        kept.kept.len(),
        kept.x.edge_count(),
        kept.y.edge_count()
    );

    let mut rng = RngSeed::new(3).rng();
    let flows: Vec<Vec<f64>> = (0..50)
        .map(|i| {
            (0..50)
                .map(|j| {
                    if i == j {
                        0.0
                    } else {
                        rng.random_range(0.0..100.0)
                    }
                })
                .collect()
        })
        .collect();
    let trade = weights_to_adjacency_median(&WeightMatrix::from_directed(&flows)?);
    println!(
        "trade: {} of {} pairs are edges",
        trade.edge_count(),
        50 * 49 / 2
    );
    Ok(())
}
