//! Samples a planted-partition graph and compares block densities with the model.

use sbm_twosample::estimate::{estimate_block_matrix, ClampPolicy};
use sbm_twosample::generate::{
    balanced_blocks, planted_partition, sample_adjacency, PlantedPartitionSpec,
};
use sbm_twosample::graph::SbmModel;
use sbm_twosample::rng::RngSeed;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let label = balanced_blocks(600, 3)?;
    let block = planted_partition(&PlantedPartitionSpec::new(3, 0.1, 2.0))?;
    let model = SbmModel::new(label.clone(), block.clone())?;
    let graph = sample_adjacency(&model, RngSeed::new(7));
    println!(
        "n = {}, edges = {}, density = {:.4}",
        graph.n(),
        graph.edge_count(),
        graph.density()
    );
    let fit = estimate_block_matrix(&graph, &label, ClampPolicy::default())?;
    for u in 0..3 {
        let row: Vec<String> = (0..3)
            .map(|v| format!("{:.3} ({:.3})", fit.block.get(u, v), block.get(u, v)))
            .collect();
        println!("{}", row.join("  "));
    }
    Ok(())
}
