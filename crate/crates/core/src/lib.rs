//! Simulator, estimator and allocation policies for the linear multi-class
//! multi-period packing problem.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod amf;
pub mod environment;
pub mod estimator;
pub mod linalg;
pub mod oco;
pub mod oracle;
pub mod trace;
