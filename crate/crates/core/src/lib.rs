//! Scaled random update masking (SkipUpdate) and momentum-aligned masking
//! (Magma) for block-partitioned adaptive optimizers, with the benchmark
//! problems and diagnostics used to study them.
//!
//! The crate is organized bottom-up:
//!
//! - [`numeric`]: block vectors, symmetric eigensolver, random streams
//! - [`optim`]: base optimizers and the masking wrappers
//! - [`problems`]: rotated block quadratics and in-context linear regression
//!   with a linear transformer
//! - [`diagnostics`]: curvature regularizer checks, descent audit, robust
//!   condition number, alignment traces
//! - [`harness`]: JSON experiment configs, deterministic runs, sweeps, CSV
//!   traces and the verification report
//!
//! Runnable walkthroughs live in `examples/`.

pub mod error;
pub mod numeric;
pub mod optim;
pub mod problems;
pub mod diagnostics;
pub mod harness;

pub use error::{Error, Result};
