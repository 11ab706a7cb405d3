//! Advection-diffusion-reaction benchmark with a POD reduced-basis
//! hierarchy, residual error bounds and a sup-norm score.

mod banded;
mod pod;
mod podfile;
mod problem;

pub use pod::{
    pod_basis, snapshot_parameters, BoundProvider, PodHierarchy, RbSolution, STABILITY_SAFETY,
};
pub use podfile::{read_pod_file, write_pod_file};
pub use problem::{
    norm2, solve_high_fidelity, solve_high_fidelity_with, sup_norm_score, AdrProblem,
    FaceVelocities, HighFidelityModel, SourceTerm, VelocityBasis,
};
