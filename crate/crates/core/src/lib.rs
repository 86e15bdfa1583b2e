//! Finite-element solver for a two-phase Cahn-Hilliard Navier-Stokes model
//! with a relaxed double-obstacle potential, semismooth Newton time stepping
//! and a nested block-triangular preconditioner for the Newton systems.

pub mod assembly;
pub mod driver;
pub mod error;
pub mod iohub;
pub mod krylov;
pub mod mesh;
pub mod model;
pub mod multilevel;
pub mod precond;
pub mod sparse;
pub mod spectra;

pub use assembly::{FeSpace, MassKind};
pub use driver::{run, run_study, LinearSolver, RunConfig, RunStats, StepRecord, StudyKind};
pub use error::{Error, Result};
pub use mesh::{Mesh2D, VelocityBc};
pub use model::{BlockSystem, NewtonConfig, PhysParams, State};
pub use precond::{NsSchurSign, PrecondConfig, PrecondMode, SubSolvers};
pub use sparse::SparseMat;
pub use spectra::{SpectraRow, SpectralReport};
