pub mod adapt;
pub mod error;
pub mod forms;
pub mod mesh;
pub mod polyspace;
pub mod problems;
pub mod quadrature;
pub mod solver;
pub mod spaces;
pub mod study;

pub use error::{Error, Result};
