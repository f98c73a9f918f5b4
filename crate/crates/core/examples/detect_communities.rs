//! Spectral clustering of a planted partition and its misclassification rate.

use sbm_twosample::community::{detect_communities, misclassification_rate, KMeansConfig};
use sbm_twosample::generate::{
    planted_partition, sample_adjacency, sample_membership, PlantedPartitionSpec,
};
use sbm_twosample::graph::SbmModel;
use sbm_twosample::rng::RngSeed;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let truth = sample_membership(600, &[1.0 / 3.0; 3], RngSeed::new(11))?;
    let model = SbmModel::new(
        truth.clone(),
        planted_partition(&PlantedPartitionSpec::new(3, 0.1, 2.0))?,
    )?;
    let graph = sample_adjacency(&model, RngSeed::new(12));
    let found = detect_communities(&graph, 3, &KMeansConfig::default())?;
    println!("sizes {:?}", found.block_sizes());
    println!(
        "misclassification {:.4}",
        misclassification_rate(&truth, &found)?
    );
    Ok(())
}
