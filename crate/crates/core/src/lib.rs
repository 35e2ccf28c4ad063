//! Sparse model-predictive control under emulated fixed-point arithmetic.
//!
//! The crate is organised bottom-up:
//!
//! - [`fxp`]: bit-accurate signed fixed-point arithmetic,
//! - [`plant`]: continuous models, zero-order-hold discretization, the default satellite model,
//! - [`condense`]: prediction matrices and the condensed quadratic tracking problem,
//! - [`prox`]: thresholding and projection operators,
//! - [`solver`]: weighted-metric ADMM and the proximal-gradient reduction,
//! - [`simloop`]: closed-loop receding-horizon simulation and run metrics,
//! - [`config`] / [`cli`]: configuration files and the command-line front end.

pub mod cli;
pub mod condense;
pub mod config;
pub mod error;
pub mod fxp;
pub mod plant;
pub mod prox;
pub mod simloop;
pub mod solver;

pub use error::{Error, Result};
