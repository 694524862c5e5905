#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod benchmarks;
pub mod driver;
pub mod error;
pub mod estimators;
pub mod exact;
pub mod mesh;
pub mod ocp;
pub mod par;
pub mod quadrature;
pub mod spaces;
pub mod sparse;
pub mod stokes;

pub use error::{Error, Result};
