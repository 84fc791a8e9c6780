//! Numerical laboratory for the widely degenerate parabolic equation
//! `u_t − div((|Du| − ν)_+^{p−1} Du/|Du|) = f`.

pub mod benchmarks;
pub mod calculus;
pub mod error;
pub mod estimates;
pub mod expr;
pub mod filtration;
pub mod flux;
pub mod grid;
pub mod io;
pub mod linsys;
pub mod mollify;
pub mod norms;
pub mod props;
pub mod report;
pub mod scenario;
pub mod solver;

pub use error::{Error, Result};
