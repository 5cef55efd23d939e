//! Exact rational, polynomial and polynomial-matrix arithmetic.

pub mod mat;
pub mod poly;
pub mod polymat;
pub mod rat;
pub mod ratfunc;
pub mod resolvent;

pub use mat::Mat;
pub use poly::Poly;
pub use polymat::PolyMat;
pub use rat::{format_rat, parse_rat, rat, ratio, Rat};
pub use ratfunc::{ratfunc_normalize, RatFunc};
pub use resolvent::{char_poly, resolvent, Resolvent};

use crate::error::Result;

pub fn mat_rank(m: &Mat) -> usize {
    m.rank()
}

pub fn mat_solve(m: &Mat, rhs: &Mat) -> Result<Option<Mat>> {
    m.solve(rhs)
}
