//! t_nu M-functionals of multivariate location and scatter.

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod asymptotics;
pub mod cli;
pub mod domain;
pub mod error;
pub mod locscatter;
pub mod oned;
pub mod sample;
pub mod scatter;
pub mod simlab;
pub mod symspace;

pub use error::{Error, Result};
pub use sample::EmpiricalSample;
