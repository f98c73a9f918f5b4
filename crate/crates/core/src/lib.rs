pub mod bootstrap;
pub mod cli;
pub mod community;
pub mod eigen;
pub mod error;
pub mod estimate;
pub mod experiments;
pub mod generate;
pub mod graph;
pub mod gumbel;
pub mod ingest;
pub mod rng;
pub mod select;
pub mod stat;
