//! Importance sampling for rare events in stochastic reaction networks,
//! with controls from a Markovian projection onto a low-dimensional
//! surrogate.
//!
//! The crate is organised bottom-up:
//!
//! - [`network`], [`simulate`], [`poisson`], [`rng`]: reaction networks,
//!   tau-leap and exact simulation, reproducible random streams;
//! - [`estimators`]: Monte Carlo reports and tolerance planning;
//! - [`importance`]: the measure change on Poisson rates and its likelihood;
//! - [`hjb`]: value functions, optimal controls and the dynamic-programming oracle;
//! - [`projection`]: Markovian projection by least-squares regression;
//! - [`pipeline`]: the end-to-end workflow and its artifacts;
//! - [`config`], [`validate`]: experiment documents and self-check suites.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::type_complexity)]

pub mod config;
pub mod error;
pub mod estimators;
pub mod hjb;
pub mod importance;
pub mod network;
pub mod pipeline;
pub mod poisson;
pub mod projection;
pub mod rng;
pub mod simulate;
pub mod validate;

pub use error::{Error, ErrorClass, Result};
pub use estimators::{EstimatorReport, Observable};
pub use network::{Preset, ReactionNetwork, State, TimeGrid};
pub use rng::{RngStream, StreamTag};
