//! Conditional importance sampling (CIS) and the Markov interacting importance
//! sampler (MIIS) family.
//!
//! The crate is organised bottom-up:
//!
//! - [`model`]: target densities, proposal families, auxiliary kernels, particle
//!   systems and the weight normalisation / selection primitives every sampler uses.
//! - [`cis`]: one conditional importance sampling step, for full targets and for a
//!   single block of a block-structured target.
//! - [`samplers`]: MIIS chains (simple, antithetic, random walk, within Gibbs) and the
//!   exact Gibbs, Metropolis-within-Gibbs and random-walk Metropolis baselines.
//! - [`estimators`]: plain MC, particle-reusing, Rao-Blackwellised and control-variate
//!   estimators, overlapping batch means, IACT and relative MSE tables.
//! - [`models`]: the bivariate Gaussian, the Markov modulated Poisson process and the
//!   discrete oracle targets used for exact stationarity checks.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cis;
pub mod error;
pub mod estimators;
pub mod model;
pub mod models;
pub mod proposals;
pub mod rng;
pub mod samplers;

pub use error::{Error, Result};
pub use model::{
    categorical_draw, normalize_log_weights, AuxKind, AuxiliaryKernel, BlockStructure, ChainState, Functional,
    NoAuxiliary, ParticleSystem, Point, ProposalFamily, TargetDensity,
};
pub use rng::Stream;
