//! Sequential estimate of the number of communities.

use sbm_twosample::community::KMeansConfig;
use sbm_twosample::generate::{
    balanced_blocks, planted_partition, sample_adjacency, PlantedPartitionSpec,
};
use sbm_twosample::graph::SbmModel;
use sbm_twosample::rng::RngSeed;
use sbm_twosample::select::estimate_k;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let model = SbmModel::new(
        balanced_blocks(600, 3)?,
        planted_partition(&PlantedPartitionSpec::new(3, 0.1, 2.0))?,
    )?;
    let graph = sample_adjacency(&model, RngSeed::new(5));
    let report = estimate_k(&graph, 6, 0.05, &KMeansConfig::default())?;
    for trial in &report.tested {
        println!(
            "K0 = {}: T_boot = {:?}, reject {}",
            trial.k0, trial.t_boot, trial.reject
        );
    }
    println!("K_hat = {}", report.k_hat);
    Ok(())
}
