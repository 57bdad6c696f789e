pub mod adaptivity;
pub mod assembly;
pub mod cli;
pub mod dwr;
pub mod error;
pub mod fespace;
pub mod goals;
pub mod mesh;
pub mod problem;
pub mod quadrature;
pub mod solvers;
pub mod vtk;

pub use error::{Error, Result};
