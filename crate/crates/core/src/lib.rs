pub mod cohort;
pub mod error;
pub mod gamlss;
pub mod morphometrics;
pub mod phantoms;
pub mod qc;
pub mod stats;
pub mod volume;

pub use error::{Error, Result};
