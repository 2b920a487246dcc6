pub mod cohort;
pub mod demo;
pub mod extract;
pub mod join;
pub mod model;
pub mod phantom;
pub mod pipeline;
pub mod plot;
pub mod qc;
pub mod stats;
