//! Shape features of binary masks: component analysis, surface meshing and
//! the thirteen morphological measurements.

mod components;
mod features;
mod mesh;

pub use components::{connected_components, Connectivity};
pub use features::{
    analyze_mask, axis_eigenvalues, bounding_box_face_ratios, extract_features,
    max_pairwise_distance, FeatureVector, MaskReport, FEATURE_NAMES,
};
pub use mesh::{build_mesh, SurfaceMesh};
