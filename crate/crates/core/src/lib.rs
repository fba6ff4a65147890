//! Few-qubit quantum state tomography.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]
pub mod bell;
pub mod error;
pub mod estimators;
pub mod io;
pub mod measure;
pub mod nqs;
pub mod optim;
pub mod pipeline;
pub mod povm;
pub mod qcore;

pub use error::{Error, Result};
