pub mod error;
pub mod features;
pub mod history;
pub mod ingest;
pub mod metrics;
pub mod rng;
pub mod sequence;
pub mod split;
pub mod standardize;
pub mod tables;
