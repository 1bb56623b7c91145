//! Numerical laboratory for time-normal operator averages in quantum
//! electrodynamics of finite models: frequency splitting, closed-time-loop
//! moments, Kubo response kernels, P-functionals on path lattices, dressing
//! of currents by their own radiation, and classical stochastic twins.

pub mod dressing;
pub mod error;
pub mod hilbert;
pub mod linalg;
pub mod models;
pub mod pathspace;
pub mod response;
pub mod signals;
pub mod stochastic;
pub mod timenormal;

pub use error::{Error, Result};
pub use hilbert::{
    build_system, Band, Branch, BranchInsertion, CurrentPart, DeviceSpec, ModeSpec, OpId, SourceSet,
    SystemModel, SystemSpec, TestFunctionSet,
};
pub use linalg::{CMat, C64};
pub use signals::{make_grid, Sign, Signal, TimeGrid, TwoTimeKernel};
