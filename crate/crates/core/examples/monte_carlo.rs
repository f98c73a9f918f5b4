//! Small empirical-size run; the shipped configs under `configs/` describe the full grids.

use sbm_twosample::experiments::{report_csv, run_experiment, ExperimentConfig, Scenario};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = ExperimentConfig {
        n: vec![300],
        replications: Some(40),
        bootstrap_replicates: 50,
        use_true_labels: true,
        ..ExperimentConfig::new(Scenario::Size, vec![3], vec![0.2])
    };
    let report = run_experiment(&config)?;
    print!("{}", report_csv(&report));
    Ok(())
}
