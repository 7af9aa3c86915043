//! Monte Carlo laboratory for one-dimensional supercritical super-Brownian motion.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod experiments;
pub mod kernels;
pub mod loglaplace;
pub mod martingales;
pub mod mechanism;
pub mod particle_engine;
pub mod rng;
pub mod skeleton_sim;
pub mod spine_sim;

pub use error::{Error, Result};
