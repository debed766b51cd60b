//! Cache-aware runtime prediction for dense linear algebra kernels inside
//! blocked algorithms.
//!
//! The pipeline is:
//!
//! 1. [`trace`] enumerates the kernel invocations of a blocked factorization
//!    together with the exact memory regions each one touches.
//! 2. [`cachemodel`] walks that trace with an access history and computes,
//!    per operand, how many distinct cache lines were touched since the
//!    operand's last use. An exact LRU simulation serves as a cross-check.
//! 3. [`predictor`] turns those distances into in-cache weights and blends
//!    per-invocation in-cache and out-of-cache reference timings.
//! 4. [`timings`] loads and synthesizes timing tables and scores predictions.
//! 5. [`report`] regroups predictions into per-kernel series for plotting.

pub mod cachemodel;
pub mod fmt;
pub mod lines;
pub mod predictor;
pub mod report;
pub mod timings;
pub mod trace;

pub use lines::LineSet;
