//! Discretization of the midsurface rectangle and the stretched slab:
//! meshes, discrete spaces, and assembly of the membrane, flexural,
//! Koiter, and 3D shell models with their loads, nodal confinement
//! constraints, and seminorm Gram matrices.
//!
//! The discrete conforming families stand in for the abstract completions
//! in which the limit models are posed; their adequacy for those limits is
//! a modeling assumption of the toolkit, checked indirectly through the
//! convergence experiments.

pub mod assemble;
pub mod mesh;
pub mod quadrature;
pub mod space;

pub use assemble::{
    assemble_3d_load, assemble_3d_stiffness, assemble_3d_system, assemble_constraints_2d,
    assemble_constraints_3d, assemble_flexural_form, assemble_h1_gram_3d, assemble_koiter_system,
    assemble_limit_system, assemble_membrane_form, assemble_membrane_load,
    assemble_strain_form_3d, interpolate_koiter, interpolate_membrane, interpolate_volume,
    membrane_seminorm_gap, phi_from_force, reduce_matrix, seminorm_gram, seminorm_gram_3d,
    smallest_gram_eigenvalue, AssembledSystem, AveragingMap, DiscreteField2D, ForceField,
    PhiField,
};
pub use mesh::{Mesh2D, Mesh3D};
pub use space::{DiscreteSpace, SpaceKind};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FemError {
    #[error("clamped boundary part is empty")]
    EmptyGamma0,
    #[error("mesh too coarse: nx = {0}, ny = {1} (need at least 2 cells per direction)")]
    TooCoarse(usize, usize),
    #[error("transverse layer count must be even and at least 2, got {0}")]
    OddLayers(usize),
    #[error("reference configuration violates the half-space at node {node} (θ·q + ε x3 a3·q = {value:e})")]
    InfeasibleReference { node: usize, value: f64 },
    #[error(transparent)]
    Geometry(#[from] crate::geometry::GeometryError),
    #[error(transparent)]
    Shell(#[from] crate::shell::ShellError),
    #[error(transparent)]
    Solve(#[from] crate::solver::SolveError),
}
