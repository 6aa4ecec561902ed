pub mod annotate;
pub mod build;
pub mod evaluate;
pub mod plan;
pub mod preprocess;
pub mod stats;
pub mod train;
