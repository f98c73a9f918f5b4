//! Reference Gumbel quantiles and a maximum-likelihood fit to simulated draws.

use rand::Rng;
use sbm_twosample::gumbel::{fit_mle, gumbel_quantile, ks_distance, reference_gumbel};
use sbm_twosample::rng::RngSeed;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let reference = reference_gumbel();
    for p in [0.9, 0.95, 0.99] {
        println!("Q_{p} = {:.4}", gumbel_quantile(p, &reference)?);
    }
    let mut rng = RngSeed::new(1).rng();
    let draws: Vec<f64> = (0..10_000)
        .map(|_| reference.from_uniform(rng.random()))
        .collect();
    let fit = fit_mle(&draws)?;
    println!(
        "fitted mu = {:.4} (true {:.4}), beta = {:.4} (true 2)",
        fit.mu, reference.mu, fit.beta
    );
    println!(
        "KS distance to reference {:.4}",
        ks_distance(&draws, &reference)
    );
    Ok(())
}
