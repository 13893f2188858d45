//! Numerical laboratory for the spherically symmetric focusing cubic wave
//! equation `phi_tt - Laplacian(phi) - phi^3 = 0`.
//!
//! Evolutions run on hyperboloidal slices compactified to null infinity
//! ([`hyperboloidal`]) or, for blowup analysis inside a past light cone, in
//! standard Minkowski coordinates ([`standard`]). The remaining modules
//! compare runs with the explicit attractor family
//! `sqrt 2 / (t + a + b ((t + a)^2 - r^2))` and script the threshold
//! searches.

pub mod analytic;
pub mod diagnostics;
pub mod error;
pub mod experiments;
pub mod fit;
pub mod grid;
pub mod hyperboloidal;
pub mod io;
pub mod standard;
pub mod stencil;

pub use analytic::{AttractorParams, Sign};
pub use diagnostics::TimeSeries;
pub use error::{Error, Result};
pub use fit::FitResult;
pub use grid::{Foliation, RadialGrid};
pub use hyperboloidal::{
    BlowupInfo, FieldState, HyperboloidalSolver, InitialData, Run, RunStatus, SolverConfig,
};
pub use io::RunRecord;
