//! Supervised two-stage imputation: a kernel matrix over incomplete data is
//! first completed against an SVM dual objective, then the missing features
//! are recovered from the completed kernel.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN.

pub mod dataset;
pub mod error;
pub mod kernels;
pub mod matops;
pub mod metrics;
pub mod pipeline;
pub mod selftest;
pub mod stage1;
pub mod stage2;
pub mod svm;

pub use error::{Error, Result};
pub use nalgebra;
