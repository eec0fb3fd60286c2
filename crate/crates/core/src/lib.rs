pub mod assembly;
pub mod checks;
pub mod dofspace;
pub mod error;
pub mod mesh;
pub mod polybasis;
pub mod postproc;
pub mod quadrature;
pub mod scenario;
pub mod solver;
pub mod weakops;

pub use error::{Error, Result};
