//! Row-by-row decoupling of linear time-invariant systems by nonregular
//! static state feedback, carried out entirely in exact rational arithmetic.

pub mod algebra;
pub mod canonical;
pub mod compensation;
pub mod error;
pub mod flowgraph;
pub mod plants;
pub mod poles;
pub mod synthesis;
pub mod system;

pub use error::{Error, Result};
