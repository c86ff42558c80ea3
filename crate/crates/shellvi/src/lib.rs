//! Solver and verification toolkit for obstacle problems of linearly elastic
//! shells confined to a half-space.
//!
//! The crate assembles and solves three related constrained minimisation
//! problems over a curvilinear midsurface chart:
//!
//! * the scaled three-dimensional variational inequality on the stretched
//!   slab `ω × (-1, 1)`,
//! * the two-dimensional membrane limit inequality,
//! * Koiter's two-dimensional model under the same confinement condition,
//!
//! and provides the numerical experiments (thickness sweeps, Korn-constant
//! probes, transverse-average identities, density-operator pipelines) that
//! check the asymptotic relations between them at desk scale.
//!
//! Heavy inner loops (grid sweeps, element assembly) are data-parallel via
//! rayon when the default `parallel` feature is enabled; disabling it yields
//! a bit-identical sequential build.

pub mod cli;
pub mod config;
pub mod density;
pub mod experiments;
pub mod fem;
pub mod geometry;
pub mod par;
pub mod shell;
pub mod solver;
pub mod sparse;

pub use geometry::{Chart, GeometryError, HalfSpace, SurfaceDisplacementSample, SurfaceFrame};
pub use shell::{ElasticityTensor, ReducedMembraneTensor, ScaledStrain, ShellError, ShellFrame3D};
pub use solver::{ConstraintSet, QuadraticProgram, SolveError, ViSolution};
