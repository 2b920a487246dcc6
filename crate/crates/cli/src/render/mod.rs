pub mod mip;
pub mod plots;
pub mod svg;
