//! Neural-actuarial longevity modelling.
//!
//! The pipeline runs in stages that mirror the module layout:
//!
//! 1. [`ingest`] turns HMD-style tables (or synthetic ground truth) into log
//!    mortality surfaces for a cluster of countries.
//! 2. [`lilee`] decomposes the cluster into a common factor `K_t` and
//!    country-specific factors `k_{t,i}`, and provides the linear benchmark
//!    forecasters.
//! 3. [`diagnostics`] runs ADF/KPSS on the factors.
//! 4. [`tensor`] differences, scales and windows the factor panel.
//! 5. [`nn`] is a small stacked LSTM trained with BPTT and Adam.
//! 6. [`forecast`] applies mean-bias correction and produces deterministic and
//!    dual-uncertainty stochastic projections.
//! 7. [`actuarial`] and [`risk`] map projected factors to life tables, e0,
//!    tail measures and the reverse stress test.
//! 8. [`xai`] and [`harness`] cover attribution and benchmarking.

// `!(x > 0.0)` is used on purpose so NaN lands in the error branch
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod actuarial;
pub mod diagnostics;
pub mod error;
pub mod forecast;
pub mod harness;
pub mod ingest;
pub mod lilee;
mod linalg;
pub mod nn;
pub mod risk;
pub mod stats;
pub mod synthetic;
pub mod tensor;
pub mod xai;

pub use error::{Error, Result};
